"""Experiment drivers: the three model types, early-stopped training, the
feature-subset ablation, and the plain key-value config file they share.

Model 1 trains on the real training rows only.  Model 2 first pre-trains on
a generator-sampled synthetic dataset labeled by the knowledge base, then
fine-tunes on the real rows.  Model 3 applies grow-and-prune synthesis
starting from Model 2.  Training never touches the test partition; it stays
locked until a driver unlocks it for one final evaluation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import densities
from .datapipe import DatasetBundle
from .features import FeatureSpec, all_feature_subsets
from .growprune import GrowPruneConfig, SynthesisTrace, synthesize
from .knowledge import KnowledgeBase, fit_kb
from .metrics import EvalReport, evaluate
from .network import MaskedNetwork, TrainConfig, accuracy, init_network, sgd_epoch

N_CLASSES = 3


def derive_seed(*parts: int) -> int:
    """Stable child seed from integer components."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    patience: int = 20
    max_epochs: int = 500
    hidden: tuple[int, ...] = (256, 128, 128)
    generator: str = "gmm"  # mnd | gmm | kde
    synth_size: int = 100_000
    gmm_components: tuple[int, ...] = (1, 2, 4, 8, 16)
    kb_kind: str = "forest"
    kb_trees: int = 100
    kb_max_depth: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.generator not in ("mnd", "gmm", "kde"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.patience < 0 or self.max_epochs < 0 or self.synth_size < 0:
            raise ValueError("patience, max_epochs and synth_size must be non-negative")


def train_early_stop(net: MaskedNetwork, x_tr: np.ndarray, y_tr: np.ndarray,
                     x_val: np.ndarray, y_val: np.ndarray, cfg: TrainConfig,
                     patience: int = 20, max_epochs: int = 500):
    """SGD with validation-accuracy early stopping.

    The first ``cfg.epochs`` epochs always run; afterwards training continues
    until ``patience`` consecutive epochs bring no improvement (``patience=0``
    stops right after the unconditional epochs), capped at ``max_epochs``
    total.  Returns the snapshot with the best validation accuracy and the
    per-epoch ``(loss, val_accuracy)`` history.
    """
    rng = np.random.default_rng(cfg.seed)
    best_net = net.clone()
    best_acc = accuracy(net, x_val, y_val)
    stall = 0
    history: list[tuple[float, float]] = []
    for epoch in range(max_epochs):
        if epoch >= cfg.epochs and (patience == 0 or stall >= patience):
            break
        loss, _ = sgd_epoch(net, x_tr, y_tr, cfg, rng=rng)
        acc = accuracy(net, x_val, y_val)
        history.append((loss, acc))
        if acc > best_acc:
            best_acc, best_net, stall = acc, net.clone(), 0
        else:
            stall += 1
    return best_net, best_acc, history


def _dense_net(bundle: DatasetBundle, cfg: ExperimentConfig, seed: int) -> MaskedNetwork:
    widths = (bundle.spec.total_width, *cfg.hidden, N_CLASSES)
    return init_network(widths, seed=seed)


def run_model1(bundle: DatasetBundle, cfg: ExperimentConfig) -> tuple[MaskedNetwork, EvalReport]:
    """Dense network trained on the real training rows only."""
    tr, val = bundle.train, bundle.validation
    net = _dense_net(bundle, cfg, derive_seed(cfg.seed, 11))
    train_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, 12))
    best, _, _ = train_early_stop(net, tr.matrix, tr.labels, val.matrix, val.labels,
                                  train_cfg, cfg.patience, cfg.max_epochs)
    return best, evaluate(best, val)


@dataclass
class SyntheticDataset:
    """Generator samples with knowledge-base labels and their provenance."""

    matrix: np.ndarray
    labels: np.ndarray
    generator_kind: str
    seed: int


def fit_generator(bundle: DatasetBundle, cfg: ExperimentConfig):
    tr = bundle.train
    seed = derive_seed(cfg.seed, 21)
    if cfg.generator == "mnd":
        return densities.fit_mnd(tr.matrix)
    if cfg.generator == "kde":
        return densities.fit_kde(tr.matrix)
    return densities.fit_gmm(tr.matrix, cfg.gmm_components,
                             bundle.validation.matrix, seed=seed)


def make_synthetic(bundle: DatasetBundle, cfg: ExperimentConfig,
                   generator=None, kb: KnowledgeBase | None = None):
    """Sample ``cfg.synth_size`` rows from the generator and label them with
    the knowledge base (labels never come from the generator)."""
    tr = bundle.train
    if generator is None:
        generator = fit_generator(bundle, cfg)
    if kb is None:
        kb = fit_kb(tr.matrix, tr.labels, cfg.kb_kind, cfg.kb_max_depth,
                    n_trees=cfg.kb_trees, seed=derive_seed(cfg.seed, 22),
                    n_classes=N_CLASSES)
    sample_seed = derive_seed(cfg.seed, 23)
    x_syn = densities.sample(generator, cfg.synth_size, seed=sample_seed)
    synthetic = SyntheticDataset(x_syn, kb.label(x_syn), generator.kind, sample_seed)
    return synthetic, generator, kb


def run_model2(bundle: DatasetBundle, cfg: ExperimentConfig) -> tuple[MaskedNetwork, EvalReport]:
    """Synthetic pre-training followed by fine-tuning on the real rows.

    With ``synth_size == 0`` the pre-training phase is skipped entirely and
    this reduces to Model 1 training from the same initialization.
    """
    tr, val = bundle.train, bundle.validation
    net = _dense_net(bundle, cfg, derive_seed(cfg.seed, 11))
    if cfg.synth_size > 0:
        synthetic, _, _ = make_synthetic(bundle, cfg)
        pre_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, 24))
        rng = np.random.default_rng(pre_cfg.seed)
        for _ in range(pre_cfg.epochs):
            sgd_epoch(net, synthetic.matrix, synthetic.labels, pre_cfg, rng=rng)
    # same seed as the Model 1 stage: with no synthetic rows the two coincide
    tune_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, 12))
    best, _, _ = train_early_stop(net, tr.matrix, tr.labels, val.matrix, val.labels,
                                  tune_cfg, cfg.patience, cfg.max_epochs)
    return best, evaluate(best, val)


def run_model3(bundle: DatasetBundle, model2: MaskedNetwork, cfg: ExperimentConfig,
               gp_cfg: GrowPruneConfig) -> tuple[MaskedNetwork, EvalReport, SynthesisTrace]:
    """Grow-and-prune synthesis starting from a trained Model 2."""
    tr, val = bundle.train, bundle.validation
    train_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, 31))
    best, trace = synthesize(model2, tr.matrix, tr.labels, val.matrix, val.labels,
                             gp_cfg, train_cfg)
    return best, evaluate(best, val), trace


@dataclass
class ExperimentResult:
    nets: dict[int, MaskedNetwork]
    reports: dict[int, EvalReport]
    trace: SynthesisTrace | None
    test_report: EvalReport | None


def run_experiment(bundle: DatasetBundle, cfg: ExperimentConfig,
                   gp_cfg: GrowPruneConfig | None = None,
                   models: tuple[int, ...] = (1, 2, 3),
                   evaluate_test: bool = True) -> ExperimentResult:
    """Build the requested models; the best one (Model 3 when built, else the
    highest validation accuracy) gets the single test evaluation."""
    nets: dict[int, MaskedNetwork] = {}
    reports: dict[int, EvalReport] = {}
    trace = None
    if 1 in models:
        nets[1], reports[1] = run_model1(bundle, cfg)
    if 2 in models or 3 in models:
        nets[2], reports[2] = run_model2(bundle, cfg)
    if 3 in models:
        if gp_cfg is None:
            raise ValueError("model 3 needs a grow-prune config")
        nets[3], reports[3], trace = run_model3(bundle, nets[2], cfg, gp_cfg)

    test_report = None
    if evaluate_test:
        chosen = 3 if 3 in nets else max(nets, key=lambda m: reports[m].accuracy)
        bundle.unlock_test()
        test_report = evaluate(nets[chosen], bundle.test)
        if bundle.test_reads != 1:
            raise RuntimeError(f"test partition read {bundle.test_reads} times; expected 1")
    return ExperimentResult(nets, reports, trace, test_report)


@dataclass
class ExperimentPlan:
    feature_subsets: list[FeatureSpec]
    config: ExperimentConfig
    models: tuple[int, ...] = (1, 2)
    gp: GrowPruneConfig | None = None
    out_csv: str | Path = "ablation.csv"

    def __post_init__(self) -> None:
        if not self.feature_subsets:
            raise ValueError("plan needs at least one feature subset")
        if len(self.feature_subsets) > 63:
            raise ValueError("the full ablation has at most 63 subsets")
        if 3 in self.models and self.gp is None:
            raise ValueError("model 3 rows need a grow-prune config")


def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def run_ablation(bundle: DatasetBundle, plan: ExperimentPlan) -> Path:
    """One CSV row per feature subset with the per-model metric blocks, in
    the column order accuracy, FPR, FNR(2), FNR(3), F1 (percent), then the
    model size columns.  Rows are flushed as soon as each subset finishes."""
    path = Path(plan.out_csv)
    header = ["subset"]
    for m in plan.models:
        header += [f"m{m}_acc", f"m{m}_fpr", f"m{m}_fnr2", f"m{m}_fnr3", f"m{m}_f1"]
    header += ["flops", "params"]
    if 3 in plan.models:
        header += ["m3_flops", "m3_params"]

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for si, spec in enumerate(plan.feature_subsets):
            spec = FeatureSpec(spec.categories, bundle.spec.samples_per_window)
            sub = bundle.select(spec)
            cfg = replace(plan.config, seed=derive_seed(plan.config.seed, 100, si))
            result = run_experiment(sub, cfg, plan.gp, models=plan.models,
                                    evaluate_test=False)
            row = [str(spec)]
            for m in plan.models:
                r = result.reports[m]
                row += [_pct(r.accuracy), _pct(r.fpr), _pct(r.fnr2),
                        _pct(r.fnr3), _pct(r.macro_f1)]
            dense = result.nets[min(result.nets)]
            row += [dense.count_flops(), dense.count_params()]
            if 3 in plan.models:
                row += [result.reports[3].flops, result.reports[3].params]
            writer.writerow(row)
            fh.flush()
    return path


def full_ablation_plan(bundle: DatasetBundle, config: ExperimentConfig,
                       models: tuple[int, ...] = (1, 2),
                       gp: GrowPruneConfig | None = None,
                       out_csv: str | Path = "ablation.csv") -> ExperimentPlan:
    subsets = all_feature_subsets(bundle.spec.samples_per_window)
    return ExperimentPlan(subsets, config, models, gp, out_csv)


# ---------------------------------------------------------------------------
# plain key-value config files ("key = value", '#' comments)

def parse_config_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def experiment_config_from(options: dict[str, str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    train = cfg.train
    if "learning_rate" in options:
        train = replace(train, learning_rate=float(options["learning_rate"]))
    if "batch_size" in options:
        train = replace(train, batch_size=int(options["batch_size"]))
    if "epochs" in options:
        train = replace(train, epochs=int(options["epochs"]))
    simple = {
        "patience": int, "max_epochs": int, "synth_size": int, "seed": int,
        "kb_trees": int, "generator": str, "kb_kind": str,
    }
    kwargs: dict = {"train": train}
    for key, conv in simple.items():
        if key in options:
            kwargs[key] = conv(options[key])
    if "hidden" in options:
        kwargs["hidden"] = _int_tuple(options["hidden"])
    if "gmm_components" in options:
        kwargs["gmm_components"] = _int_tuple(options["gmm_components"])
    if "kb_max_depth" in options:
        v = options["kb_max_depth"]
        kwargs["kb_max_depth"] = None if v.lower() in ("", "none") else int(v)
    return replace(cfg, **kwargs)


def growprune_config_from(options: dict[str, str]) -> GrowPruneConfig:
    kwargs: dict = {}
    if "gp_iterations" in options:
        kwargs["iterations"] = int(options["gp_iterations"])
    if "gp_epochs_per_change" in options:
        kwargs["epochs_per_change"] = int(options["gp_epochs_per_change"])
    if "gp_growth_ratio" in options:
        kwargs["growth_ratio"] = float(options["gp_growth_ratio"])
    if "gp_targets" in options:
        kwargs["prune_targets"] = _int_tuple(options["gp_targets"])
    if "gp_neuron_growth" in options:
        kwargs["neuron_growth"] = options["gp_neuron_growth"]
    if "gp_noise_scale" in options:
        v = options["gp_noise_scale"]
        kwargs["noise_scale"] = None if v.lower() in ("", "none") else float(v)
    if "gp_seed" in options:
        kwargs["seed"] = int(options["gp_seed"])
    return GrowPruneConfig(**kwargs)
