import numpy as np
import pytest

from cohortnet import archive, cli, demo
from cohortnet.network import MaskedNetwork


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Raw demo data plus an ingested archive shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cliwork")
    raw = root / "raw"
    demo.generate_raw_dataset(raw, subjects_per_cohort=4, windows_per_subject=6, seed=21)
    data = root / "data.txt"
    cli.main(["ingest", "--raw", str(raw), "--out", str(data), "--seed", "1"])
    cfg = root / "fast.cfg"
    cfg.write_text("""
learning_rate = 0.05
batch_size = 32
epochs = 2
patience = 1
max_epochs = 4
hidden = 12,8
generator = mnd
synth_size = 200
kb_trees = 5
gp_iterations = 1
gp_epochs_per_change = 1
gp_targets = 300, 2000
""")
    return root, data, cfg


def test_ingest_wrote_valid_archive(workdir):
    _, data, _ = workdir
    bundle = archive.load_bundle(data)
    assert bundle.spec.total_width == 194
    assert bundle.train.n_rows > 0


def test_ingest_with_feature_subset(workdir, capsys):
    root, _, _ = workdir
    out = root / "subset.txt"
    cli.main(["ingest", "--raw", str(root / "raw"), "--out", str(out),
              "--seed", "1", "--features", "GSR,OX,BP,Q"])
    bundle = archive.load_bundle(out)
    assert bundle.spec.total_width == 74


def test_count_spec(capsys):
    cli.main(["count", "--spec", "74,256,128,128,3"])
    out = capsys.readouterr().out
    assert "params=68480" in out
    assert "flops=136445" in out


def test_train_model1_writes_model(workdir, capsys):
    root, data, cfg = workdir
    out = root / "m1"
    cli.main(["train", "--data", str(data), "--model", "1", "--out", str(out),
              "--config", str(cfg)])
    blob = (out / "model1.bin").read_bytes()
    net = MaskedNetwork.from_bytes(blob)
    assert net.input_width == 194
    assert "model1 (validation)" in capsys.readouterr().out


def test_train_model3_writes_trace(workdir, capsys):
    root, data, cfg = workdir
    out = root / "m3"
    cli.main(["train", "--data", str(data), "--model", "3", "--out", str(out),
              "--config", str(cfg), "--test"])
    assert (out / "model2.bin").exists()
    assert (out / "model3.bin").exists()
    trace = (out / "model3_trace.csv").read_text().splitlines()
    assert trace[0].startswith("iteration,operation,target")
    assert len(trace) == 1 + 2  # header + iterations * targets
    assert "(test)" in capsys.readouterr().out


def test_count_model_file(workdir, capsys):
    root, _, _ = workdir
    cli.main(["count", "--model", str(root / "m1" / "model1.bin")])
    assert "params=" in capsys.readouterr().out


def test_eval_validation(workdir, capsys):
    root, data, _ = workdir
    cli.main(["eval", "--model", str(root / "m1" / "model1.bin"),
              "--data", str(data), "--partition", "validation"])
    assert "acc=" in capsys.readouterr().out


def test_eval_test_partition_allowed_for_final_eval(workdir, capsys):
    root, data, _ = workdir
    cli.main(["eval", "--model", str(root / "m1" / "model1.bin"),
              "--data", str(data), "--partition", "test"])
    assert "acc=" in capsys.readouterr().out


def test_synth_writes_labeled_archive(workdir, capsys):
    root, data, cfg = workdir
    out = root / "synth.txt"
    cli.main(["synth", "--data", str(data), "--out", str(out), "--generator", "mnd",
              "--n", "150", "--seed", "2", "--config", str(cfg),
              "--kb-out", str(root / "kb.txt")])
    synth = archive.load_bundle(out)
    assert synth.train.n_rows == 150
    assert set(synth.train.subject_ids) == {"SYN"}
    assert (root / "kb.txt").exists()
    assert synth.train.matrix.min() >= 0.0 and synth.train.matrix.max() <= 1.0


def test_growprune_from_model2(workdir, capsys):
    root, data, cfg = workdir
    out = root / "gp"
    cli.main(["growprune", "--model2", str(root / "m3" / "model2.bin"),
              "--data", str(data), "--out", str(out), "--config", str(cfg)])
    assert (out / "model3.bin").exists()
    assert (out / "model3_trace.csv").exists()


def test_ablate_subsets(workdir):
    root, data, cfg = workdir
    out = root / "ablation.csv"
    cli.main(["ablate", "--data", str(data), "--out", str(out),
              "--models", "1", "--subsets", "Q;OX+BP", "--config", str(cfg)])
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 3
    assert rows[1].split(",")[0] == "Q"
    assert rows[2].split(",")[0] == "OX+BP"


def test_kb_rules_prints_rules(workdir, capsys):
    _, data, _ = workdir
    cli.main(["kb", "rules", "--data", str(data), "--max-depth", "2"])
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) >= 2
    assert all("->" in line for line in out)


def test_demo_subcommand(tmp_path, capsys):
    cli.main(["demo", "--out", str(tmp_path / "raw2"), "--subjects-per-cohort", "3",
              "--windows-per-subject", "2", "--seed", "1"])
    assert len(list((tmp_path / "raw2").iterdir())) == 9


def test_bench_prints_backends(capsys):
    cli.main(["bench", "--width", "20", "--rows", "64", "--batch-size", "32",
              "--epochs", "1"])
    out = capsys.readouterr().out
    assert "numpy" in out
