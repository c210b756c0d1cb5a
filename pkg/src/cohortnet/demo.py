"""Synthetic raw-data generator for demos and end-to-end tests.

Writes subject directories in the raw ingest layout.  Each cohort draws its
smartwatch baselines, discrete readings, and questionnaire answer
probabilities from overlapping Gaussian profiles, with most of the variance
at the subject level, so per-subject splits make generalization a real task
rather than a lookup.
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from .features import COHORTS, QUESTIONNAIRE_ITEMS

# per-cohort profile: channel baselines (mean), shared subject/noise spreads below
_PROFILES = {
    "C1": {"gsr": 2.2, "temp": 33.2, "ibi": 860.0, "ox": 97.5, "bp": (119.0, 78.0)},
    "C2": {"gsr": 3.1, "temp": 33.7, "ibi": 805.0, "ox": 95.8, "bp": (126.0, 82.0)},
    "C3": {"gsr": 4.0, "temp": 34.3, "ibi": 745.0, "ox": 93.6, "bp": (134.0, 88.0)},
}
_SUBJECT_SPREAD = {"gsr": 1.4, "temp": 0.9, "ibi": 80.0, "ox": 2.0, "bp": (11.0, 7.0)}
_NOISE = {"gsr": 0.35, "temp": 0.12, "ibi": 22.0}

_Q_PROBS = {
    "C1": [0.06, 0.05, 0.03, 0.10, 0.02, 0.05, 0.02, 0.10, 0.08, 0.01, 0.03],
    "C2": [0.08, 0.06, 0.06, 0.13, 0.05, 0.09, 0.05, 0.12, 0.10, 0.16, 0.07],
    "C3": [0.10, 0.08, 0.55, 0.62, 0.66, 0.50, 0.40, 0.45, 0.42, 0.55, 0.30],
}

_EPOCH_MS = 1_600_000_000_000


def _smooth_series(rng, n, base, noise_sd):
    drift = np.cumsum(rng.normal(0.0, noise_sd / 8.0, size=n))
    return base + drift + rng.normal(0.0, noise_sd, size=n)


def write_subject(out_dir: Path, subject_id: str, cohort: str, rng: np.random.Generator,
                  n_samples: int, rate_hz: int, start_ms: int) -> None:
    prof = _PROFILES[cohort]
    period = round(1000 / rate_hz)
    ts = start_ms + period * np.arange(n_samples)

    gsr = _smooth_series(rng, n_samples,
                         prof["gsr"] + rng.normal(0, _SUBJECT_SPREAD["gsr"]), _NOISE["gsr"])
    gsr = np.maximum(gsr, 0.05)
    temp = _smooth_series(rng, n_samples,
                          prof["temp"] + rng.normal(0, _SUBJECT_SPREAD["temp"]), _NOISE["temp"])
    ibi = _smooth_series(rng, n_samples,
                         prof["ibi"] + rng.normal(0, _SUBJECT_SPREAD["ibi"]), _NOISE["ibi"])
    ibi = np.maximum(ibi, 300.0)
    ox = float(np.clip(prof["ox"] + rng.normal(0, _SUBJECT_SPREAD["ox"]), 80.0, 100.0))
    bp_sys = float(prof["bp"][0] + rng.normal(0, _SUBJECT_SPREAD["bp"][0]))
    bp_dia = float(prof["bp"][1] + rng.normal(0, _SUBJECT_SPREAD["bp"][1]))
    answers = (rng.random(len(QUESTIONNAIRE_ITEMS)) < np.array(_Q_PROBS[cohort])).astype(int)

    sdir = out_dir / subject_id
    sdir.mkdir(parents=True, exist_ok=True)
    with open(sdir / "meta.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "cohort"])
        w.writerow([subject_id, cohort])
    with open(sdir / "questionnaire.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUESTIONNAIRE_ITEMS)
        w.writerow(list(answers))
    with open(sdir / "streams.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channel", "timestamp_ms", "value"])
        for channel, series in (("GSR", gsr), ("TEMP", temp), ("IBI", ibi)):
            for t, v in zip(ts, series):
                w.writerow([channel, int(t), f"{v:.6f}"])
        w.writerow(["OX", int(ts[0]), f"{ox:.6f}"])
        w.writerow(["BP_SYS", int(ts[0]), f"{bp_sys:.6f}"])
        w.writerow(["BP_DIA", int(ts[0]), f"{bp_dia:.6f}"])


def generate_raw_dataset(out_dir: str | Path, subjects_per_cohort: int = 20,
                         windows_per_subject: int = 16, seed: int = 7,
                         window_seconds: int = 15, rate_hz: int = 4) -> Path:
    """Write ``3 * subjects_per_cohort`` subject directories under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_samples = windows_per_subject * window_seconds * rate_hz
    idx = 0
    for cohort in COHORTS:
        for _ in range(subjects_per_cohort):
            rng = np.random.default_rng([seed, idx])
            write_subject(out_dir, f"S{idx:03d}", cohort, rng, n_samples, rate_hz,
                          _EPOCH_MS + idx * 10_000_000)
            idx += 1
    return out_dir


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description="generate a synthetic raw dataset")
    parser.add_argument("--out", required=True)
    parser.add_argument("--subjects-per-cohort", type=int, default=20)
    parser.add_argument("--windows-per-subject", type=int, default=16)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    path = generate_raw_dataset(args.out, args.subjects_per_cohort,
                                args.windows_per_subject, args.seed)
    print(f"wrote {3 * args.subjects_per_cohort} subjects to {path}")


if __name__ == "__main__":
    main()
