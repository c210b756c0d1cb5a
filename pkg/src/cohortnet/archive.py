"""On-disk formats: raw subject directories and the processed dataset archive.

Raw layout (one directory per subject)::

    <subject_dir>/
      meta.csv           header "subject_id,cohort", one row, cohort in {C1,C2,C3}
      questionnaire.csv  header = the 11 item names, one row of 0/1
      streams.csv        header "channel,timestamp_ms,value", one row per sample

Processed archive: a single text file, line oriented ::

    cohortnet-dataset v1
    spec samples_per_window=60 categories=GSR,TEMP,IBI,OX,BP,Q
    scaler_min <one float per column>
    scaler_max <one float per column>
    partition train rows=N
    <subject_id> <cohort> <one float per column>
    ...
    partition validation rows=N
    partition test rows=N

Floats are written with ``repr`` so loading reproduces them bit-exactly.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np

from .datapipe import (
    DatasetBundle,
    FeatureDataset,
    MinMaxScaler,
    RawStream,
    SubjectRecord,
    align_and_window,
    split_by_subject,
)
from .features import CHANNELS, COHORTS, QUESTIONNAIRE_ITEMS, FeatureSpec

MAGIC = "cohortnet-dataset v1"


class ArchiveFormatError(ValueError):
    pass


def read_subject_dir(path: str | Path) -> SubjectRecord:
    path = Path(path)
    meta = _read_csv_rows(path / "meta.csv", ("subject_id", "cohort"))
    if len(meta) != 1:
        raise ArchiveFormatError(f"{path}/meta.csv: expected exactly one row")
    subject_id, cohort = meta[0]

    q_rows = _read_csv_rows(path / "questionnaire.csv", QUESTIONNAIRE_ITEMS)
    if len(q_rows) != 1:
        raise ArchiveFormatError(f"{path}/questionnaire.csv: expected exactly one row")
    answers = [int(v) for v in q_rows[0]]

    streams: dict[str, tuple[list[float], list[float]]] = {}
    for channel, ts, value in _read_csv_rows(path / "streams.csv",
                                             ("channel", "timestamp_ms", "value")):
        if channel not in CHANNELS:
            raise ArchiveFormatError(f"{path}/streams.csv: unknown channel {channel!r}")
        t, v = streams.setdefault(channel, ([], []))
        t.append(float(ts))
        v.append(float(value))

    return SubjectRecord(
        subject_id=subject_id,
        cohort=cohort,
        streams={c: RawStream(c, np.array(t), np.array(v)) for c, (t, v) in streams.items()},
        questionnaire=np.array(answers, dtype=np.float64),
    )


def read_raw_root(root: str | Path) -> list[SubjectRecord]:
    """All subject directories under ``root``, in sorted directory order."""
    root = Path(root)
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "meta.csv").exists())
    if not dirs:
        raise ArchiveFormatError(f"no subject directories under {root}")
    return [read_subject_dir(d) for d in dirs]


def _read_csv_rows(path: Path, expected_header: tuple[str, ...]) -> list[list[str]]:
    if not path.exists():
        raise ArchiveFormatError(f"missing file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(expected_header):
            raise ArchiveFormatError(
                f"{path}: expected header {','.join(expected_header)}")
        return [row for row in reader if row]


def build_bundle(subjects: list[SubjectRecord], *, window_seconds: int = 15,
                 rate_hz: int = 4, fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
                 seed: int = 0) -> DatasetBundle:
    """Window every subject, split per subject, fit the scaler on train rows.

    Subjects whose streams are shorter than one window are skipped (with the
    warning emitted by :func:`align_and_window`).
    """
    spec = FeatureSpec.full(samples_per_window=window_seconds * rate_hz)
    windows: dict[str, np.ndarray] = {}
    kept: list[SubjectRecord] = []
    for s in subjects:
        rows = align_and_window(s, window_seconds, rate_hz)
        if rows.shape[0] == 0:
            continue
        windows[s.subject_id] = rows
        kept.append(s)
    if not kept:
        raise ValueError("no subject has at least one full window")

    split = split_by_subject(kept, fractions, seed)
    train_rows = np.vstack([windows[s.subject_id] for s in split[0]])
    scaler = MinMaxScaler().fit(train_rows)

    parts: dict[str, FeatureDataset] = {}
    for name, members in zip(("train", "validation", "test"), split):
        mats, labels, sids = [], [], []
        for s in members:
            m = windows[s.subject_id]
            mats.append(m)
            labels.extend([s.label] * m.shape[0])
            sids.extend([s.subject_id] * m.shape[0])
        matrix = scaler.transform(np.vstack(mats)) if mats else np.empty((0, spec.total_width))
        parts[name] = FeatureDataset(matrix, np.array(labels, dtype=np.int64),
                                     np.array(sids, dtype=object), spec)
    return DatasetBundle(spec, scaler, parts)


def _fmt_row(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_bundle(bundle: DatasetBundle, path: str | Path) -> None:
    path = Path(path)
    spec = bundle.spec
    with open(path, "w") as fh:
        fh.write(MAGIC + "\n")
        fh.write(f"spec samples_per_window={spec.samples_per_window} "
                 f"categories={','.join(spec.categories)}\n")
        fh.write("scaler_min " + _fmt_row(bundle.scaler.min_) + "\n")
        fh.write("scaler_max " + _fmt_row(bundle.scaler.max_) + "\n")
        for name in ("train", "validation", "test"):
            ds = bundle._partitions[name]
            fh.write(f"partition {name} rows={ds.n_rows}\n")
            for i in range(ds.n_rows):
                fh.write(f"{ds.subject_ids[i]} {COHORTS[ds.labels[i]]} "
                         + _fmt_row(ds.matrix[i]) + "\n")


def load_bundle(path: str | Path) -> DatasetBundle:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise ArchiveFormatError(f"{path}: not a {MAGIC} file")

    def fail(lineno: int, msg: str):
        raise ArchiveFormatError(f"{path}:{lineno + 1}: {msg}")

    try:
        spec_parts = dict(kv.split("=", 1) for kv in lines[1].split()[1:])
        spec = FeatureSpec(tuple(spec_parts["categories"].split(",")),
                           int(spec_parts["samples_per_window"]))
    except Exception:
        fail(1, "malformed spec line")
    width = spec.total_width

    def floats(lineno: int, tokens: list[str], expect: int) -> np.ndarray:
        if len(tokens) != expect:
            fail(lineno, f"expected {expect} values, got {len(tokens)}")
        return np.array([float(t) for t in tokens], dtype=np.float64)

    if not lines[2].startswith("scaler_min ") or not lines[3].startswith("scaler_max "):
        fail(2, "expected scaler_min/scaler_max lines")
    scaler = MinMaxScaler(floats(2, lines[2].split()[1:], width),
                          floats(3, lines[3].split()[1:], width))

    parts: dict[str, FeatureDataset] = {}
    i = 4
    while i < len(lines):
        head = lines[i].split()
        if len(head) != 3 or head[0] != "partition" or not head[2].startswith("rows="):
            fail(i, "expected a partition header")
        name, n = head[1], int(head[2][len("rows="):])
        rows = np.empty((n, width), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        sids = np.empty(n, dtype=object)
        for j in range(n):
            tokens = lines[i + 1 + j].split()
            if len(tokens) != width + 2:
                fail(i + 1 + j, f"expected {width + 2} tokens, got {len(tokens)}")
            sids[j] = tokens[0]
            if tokens[1] not in COHORTS:
                fail(i + 1 + j, f"unknown cohort {tokens[1]!r}")
            labels[j] = COHORTS.index(tokens[1])
            rows[j] = [float(t) for t in tokens[2:]]
        parts[name] = FeatureDataset(rows, labels, sids, spec)
        i += 1 + n
    if set(parts) != {"train", "validation", "test"}:
        raise ArchiveFormatError(f"{path}: missing partitions {sorted({'train', 'validation', 'test'} - set(parts))}")
    return DatasetBundle(spec, scaler, parts)
