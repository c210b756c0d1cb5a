import numpy as np
import pytest

from cohortnet import archive, demo
from cohortnet.datapipe import RawStream, SubjectRecord
from cohortnet.features import QUESTIONNAIRE_ITEMS


def make_subject(subject_id="S000", cohort="C1", n_samples=60, rate_hz=4,
                 start_ms=0, seed=0, answers=None):
    """In-memory subject with exact-grid smartwatch streams."""
    rng = np.random.default_rng(seed)
    period = 1000.0 / rate_hz
    ts = start_ms + period * np.arange(n_samples)
    streams = {
        "GSR": RawStream("GSR", ts, 2.0 + rng.random(n_samples)),
        "TEMP": RawStream("TEMP", ts, 33.0 + rng.random(n_samples)),
        "IBI": RawStream("IBI", ts, 800.0 + 50.0 * rng.random(n_samples)),
        "OX": RawStream("OX", [ts[0]], [97.0]),
        "BP_SYS": RawStream("BP_SYS", [ts[0]], [120.0]),
        "BP_DIA": RawStream("BP_DIA", [ts[0]], [80.0]),
    }
    if answers is None:
        answers = np.zeros(len(QUESTIONNAIRE_ITEMS))
    return SubjectRecord(subject_id, cohort, streams, answers)


@pytest.fixture(scope="session")
def demo_raw_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("raw")
    demo.generate_raw_dataset(root, subjects_per_cohort=4, windows_per_subject=6, seed=11)
    return root


@pytest.fixture(scope="session")
def small_bundle(demo_raw_root):
    subjects = archive.read_raw_root(demo_raw_root)
    return archive.build_bundle(subjects, seed=3)
