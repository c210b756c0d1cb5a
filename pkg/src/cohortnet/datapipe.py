"""Sensor-stream alignment, windowing, min-max scaling, and subject-level splits."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import (
    CATEGORIES,
    CHANNELS,
    COHORTS,
    QUESTIONNAIRE_ITEMS,
    WATCH_CATEGORIES,
    FeatureSpec,
)

PARTITIONS = ("train", "validation", "test")


class MissingChannelError(ValueError):
    pass


class CohortTooSmallError(ValueError):
    pass


class LockedPartitionError(RuntimeError):
    pass


@dataclass
class RawStream:
    """One sensor channel of a subject: strictly increasing timestamps, finite values."""

    channel: str
    timestamps_ms: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        self.timestamps_ms = np.asarray(self.timestamps_ms, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.timestamps_ms.ndim != 1 or self.timestamps_ms.shape != self.values.shape:
            raise ValueError(f"{self.channel}: timestamps and values must be equal-length 1-D")
        if self.timestamps_ms.size == 0:
            raise ValueError(f"{self.channel}: empty stream")
        if np.any(np.diff(self.timestamps_ms) <= 0):
            raise ValueError(f"{self.channel}: timestamps must be strictly increasing")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.timestamps_ms))):
            raise ValueError(f"{self.channel}: non-finite entries")


@dataclass
class SubjectRecord:
    subject_id: str
    cohort: str
    streams: dict[str, RawStream]
    questionnaire: np.ndarray

    def __post_init__(self) -> None:
        if not self.subject_id or any(ch.isspace() for ch in self.subject_id):
            raise ValueError(f"bad subject id {self.subject_id!r}")
        if self.cohort not in COHORTS:
            raise ValueError(f"unknown cohort {self.cohort!r} for subject {self.subject_id}")
        self.questionnaire = np.asarray(self.questionnaire, dtype=np.float64)
        if self.questionnaire.shape != (len(QUESTIONNAIRE_ITEMS),):
            raise ValueError(f"{self.subject_id}: questionnaire must have exactly "
                             f"{len(QUESTIONNAIRE_ITEMS)} answers")
        if not np.all(np.isin(self.questionnaire, (0.0, 1.0))):
            raise ValueError(f"{self.subject_id}: questionnaire answers must be 0 or 1")

    @property
    def label(self) -> int:
        return COHORTS.index(self.cohort)


def _resample_nearest(stream: RawStream, ticks: np.ndarray) -> np.ndarray:
    """Value of the sample whose timestamp is nearest each tick (ties: earlier)."""
    ts = stream.timestamps_ms
    n = ts.size
    hi = np.clip(np.searchsorted(ts, ticks), 0, n - 1)
    lo = np.clip(hi - 1, 0, n - 1)
    pick_lo = (ticks - ts[lo]) <= (ts[hi] - ticks)
    return stream.values[np.where(pick_lo, lo, hi)]


def align_and_window(subject: SubjectRecord, window_seconds: int = 15,
                     rate_hz: int = 4) -> np.ndarray:
    """Cut a subject's streams into fixed windows of full-width feature vectors.

    The three smartwatch channels are resampled onto a shared clock that
    starts at the latest of their first timestamps and ticks at ``rate_hz``.
    Consecutive non-overlapping windows of ``window_seconds`` each contribute
    ``window_seconds * rate_hz`` values per smartwatch channel; the single
    oximeter reading, the systolic/diastolic pressures, and the questionnaire
    answers are repeated into every window.  Trailing partial windows are
    dropped.  Returns an ``(n_windows, width)`` matrix of unscaled features;
    a subject whose coverage is shorter than one window yields zero rows and
    a warning.
    """
    if window_seconds < 1 or rate_hz < 1:
        raise ValueError("window_seconds and rate_hz must be positive")
    required = set(WATCH_CATEGORIES) | {"OX", "BP_SYS", "BP_DIA"}
    missing = sorted(required - set(subject.streams))
    if missing:
        raise MissingChannelError(
            f"subject {subject.subject_id}: missing channel(s) {', '.join(missing)}")

    spec = FeatureSpec.full(samples_per_window=window_seconds * rate_hz)
    per_window = window_seconds * rate_hz
    period_ms = 1000.0 / rate_hz

    t0 = max(subject.streams[c].timestamps_ms[0] for c in WATCH_CATEGORIES)
    t_end = min(subject.streams[c].timestamps_ms[-1] for c in WATCH_CATEGORIES)
    n_ticks = int((t_end - t0) // period_ms) + 1 if t_end >= t0 else 0
    n_windows = n_ticks // per_window
    if n_windows == 0:
        warnings.warn(f"subject {subject.subject_id}: streams shorter than one "
                      f"{window_seconds}s window, skipped")
        return np.empty((0, spec.total_width), dtype=np.float64)

    ticks = t0 + period_ms * np.arange(n_windows * per_window, dtype=np.float64)
    watch = {c: _resample_nearest(subject.streams[c], ticks) for c in WATCH_CATEGORIES}
    ox = subject.streams["OX"].values[0]
    bp = (subject.streams["BP_SYS"].values[0], subject.streams["BP_DIA"].values[0])

    rows = np.empty((n_windows, spec.total_width), dtype=np.float64)
    fixed = np.concatenate([[ox], bp, subject.questionnaire])
    for w in range(n_windows):
        seg = slice(w * per_window, (w + 1) * per_window)
        rows[w] = np.concatenate([watch["GSR"][seg], watch["TEMP"][seg],
                                  watch["IBI"][seg], fixed])
    return rows


class MinMaxScaler:
    """Column-wise min-max scaler mapping to [0, 1], fitted on training rows only.

    Degenerate columns (max == min) map to 0; transformed values outside the
    fitted range are clamped into [0, 1].
    """

    def __init__(self, min_: np.ndarray | None = None, max_: np.ndarray | None = None):
        self.min_ = None if min_ is None else np.asarray(min_, dtype=np.float64)
        self.max_ = None if max_ is None else np.asarray(max_, dtype=np.float64)

    def fit(self, rows: np.ndarray) -> "MinMaxScaler":
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("scaler needs at least one training row")
        self.min_ = rows.min(axis=0)
        self.max_ = rows.max(axis=0)
        return self

    @property
    def degenerate(self) -> np.ndarray:
        self._check_fitted()
        return self.max_ == self.min_

    def _check_fitted(self) -> None:
        if self.min_ is None or self.max_ is None:
            raise RuntimeError("scaler is not fitted")

    def transform(self, rows: np.ndarray) -> np.ndarray:
        self._check_fitted()
        rows = np.asarray(rows, dtype=np.float64)
        span = self.max_ - self.min_
        safe = np.where(span == 0.0, 1.0, span)
        scaled = (rows - self.min_) / safe
        scaled[..., self.degenerate] = 0.0
        return np.clip(scaled, 0.0, 1.0)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return np.asarray(scaled, dtype=np.float64) * (self.max_ - self.min_) + self.min_

    def select_columns(self, cols: np.ndarray) -> "MinMaxScaler":
        self._check_fitted()
        return MinMaxScaler(self.min_[cols], self.max_[cols])


def split_by_subject(subjects: list[SubjectRecord],
                     fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
                     seed: int = 0):
    """Stratified per-cohort subject split into (train, validation, test).

    Per cohort of size n the train and validation counts are round(f*n)
    (half up) and the test partition takes the remainder; membership is a
    seeded shuffle.  Every subject lands in exactly one partition.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError("fractions must be three non-negative numbers")
    if not np.isclose(sum(fractions), 1.0):
        raise ValueError("fractions must sum to 1")
    by_cohort: dict[str, list[SubjectRecord]] = {c: [] for c in COHORTS}
    for s in subjects:
        by_cohort[s.cohort].append(s)

    rng = np.random.default_rng(seed)
    train: list[SubjectRecord] = []
    val: list[SubjectRecord] = []
    test: list[SubjectRecord] = []
    for cohort in COHORTS:
        members = sorted(by_cohort[cohort], key=lambda s: s.subject_id)
        if not members:
            continue
        if len(members) < 3:
            raise CohortTooSmallError(
                f"cohort {cohort} has {len(members)} subject(s); need at least 3")
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        n = len(members)
        n_train = int(np.floor(fractions[0] * n + 0.5))
        n_val = int(np.floor(fractions[1] * n + 0.5))
        n_test = n - n_train - n_val
        if n_test < 0:
            raise ValueError(f"fractions {fractions} over-allocate cohort {cohort}")
        train.extend(shuffled[:n_train])
        val.extend(shuffled[n_train:n_train + n_val])
        test.extend(shuffled[n_train + n_val:])
    return train, val, test


@dataclass
class FeatureDataset:
    """Scaled feature matrix with per-row cohort labels and subject ids."""

    matrix: np.ndarray
    labels: np.ndarray
    subject_ids: np.ndarray
    spec: FeatureSpec

    def __post_init__(self) -> None:
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subject_ids = np.asarray(self.subject_ids, dtype=object)
        if self.matrix.ndim != 2:
            raise ValueError("matrix must be 2-D")
        if self.matrix.shape[1] != self.spec.total_width:
            raise ValueError(f"matrix width {self.matrix.shape[1]} does not match "
                             f"spec width {self.spec.total_width}")
        n = self.matrix.shape[0]
        if self.labels.shape != (n,) or self.subject_ids.shape != (n,):
            raise ValueError("labels/subject_ids must have one entry per row")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def cohort_names(self) -> list[str]:
        return [COHORTS[i] for i in self.labels]


def select_features(dataset: FeatureDataset, spec: FeatureSpec) -> FeatureDataset:
    """Restrict a dataset to the columns of the given category subset."""
    have = set(dataset.spec.categories)
    want = set(spec.categories)
    if not want <= have:
        raise ValueError(f"categories {sorted(want - have)} not present in dataset")
    if spec.samples_per_window != dataset.spec.samples_per_window:
        raise ValueError("samples_per_window mismatch")
    src = dataset.spec.slices()
    cols = np.concatenate([np.arange(src[c].start, src[c].stop) for c in spec.categories])
    return FeatureDataset(dataset.matrix[:, cols], dataset.labels,
                          dataset.subject_ids, spec)


def _category_columns(spec: FeatureSpec, categories: tuple[str, ...]) -> np.ndarray:
    src = spec.slices()
    return np.concatenate([np.arange(src[c].start, src[c].stop) for c in categories])


class DatasetBundle:
    """The three partitions plus the scaler fitted on the training rows.

    The test partition is locked: reading it raises until
    :meth:`unlock_test` is called, and reads are counted so experiment
    drivers can assert the test data was evaluated exactly once.
    """

    def __init__(self, spec: FeatureSpec, scaler: MinMaxScaler,
                 partitions: dict[str, FeatureDataset]):
        if set(partitions) != set(PARTITIONS):
            raise ValueError(f"partitions must be exactly {PARTITIONS}")
        self.spec = spec
        self.scaler = scaler
        self._partitions = partitions
        self._test_unlocked = False
        self.test_reads = 0

    @property
    def train(self) -> FeatureDataset:
        return self._partitions["train"]

    @property
    def validation(self) -> FeatureDataset:
        return self._partitions["validation"]

    def unlock_test(self) -> None:
        self._test_unlocked = True

    @property
    def test(self) -> FeatureDataset:
        if not self._test_unlocked:
            raise LockedPartitionError(
                "test partition is locked; call unlock_test() for the final evaluation")
        self.test_reads += 1
        return self._partitions["test"]

    def partition(self, name: str) -> FeatureDataset:
        if name == "test":
            return self.test
        if name not in PARTITIONS:
            raise KeyError(name)
        return self._partitions[name]

    def select(self, spec: FeatureSpec) -> "DatasetBundle":
        """Bundle restricted to a category subset (test lock starts fresh)."""
        cols = _category_columns(self.spec, spec.categories)
        parts = {name: select_features(ds, spec) for name, ds in self._partitions.items()}
        return DatasetBundle(spec, self.scaler.select_columns(cols), parts)
