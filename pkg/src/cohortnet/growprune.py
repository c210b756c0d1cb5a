"""Architecture-changing operations: connection growth, connection pruning,
neuron growth, and the iterative synthesis schedule built from them.

Rank thresholds follow the same convention everywhere: the cutoff is the
ceil(ratio * M * N)-th largest magnitude in the matrix, comparisons against
it are strict, and a ratio that selects zero entries is a no-op.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import MaskedNetwork, TrainConfig, accuracy, sgd_epoch


def _kth_largest(values: np.ndarray, k: int) -> float:
    flat = values.ravel()
    return float(np.partition(flat, flat.size - k)[flat.size - k])


def connection_growth(net: MaskedNetwork, accumulator: list[np.ndarray] | None = None,
                      mode: str = "gradient", growth_ratio: float = 0.3) -> MaskedNetwork:
    """Activate dormant connections.

    ``full`` mode restores every connection.  ``gradient`` mode activates,
    per weight matrix, the positions whose accumulated gradient magnitude is
    strictly above the ceil(ratio*M*N)-th largest entry; newly activated
    weights start at zero and are trained afterwards.
    """
    if mode == "full":
        for m in net.masks:
            m.fill(1.0)
        net.apply_masks()
        return net
    if mode != "gradient":
        raise ValueError(f"unknown growth mode {mode!r}")
    if not 0.0 <= growth_ratio <= 1.0:
        raise ValueError("growth ratio must be in [0, 1]")
    if accumulator is None:
        raise ValueError("gradient growth needs a gradient accumulator")
    if len(accumulator) != net.n_layers:
        raise ValueError("accumulator layer count mismatch")
    for mask, acc in zip(net.masks, accumulator):
        if acc.shape != mask.shape:
            raise ValueError("accumulator shape mismatch")
        k = int(np.ceil(growth_ratio * acc.size))
        if k == 0:
            continue
        mag = np.abs(acc)
        t = _kth_largest(mag, k)
        mask[mag > t] = 1.0
    net.apply_masks()
    return net


def connection_pruning(net: MaskedNetwork, prune_ratio: float) -> MaskedNetwork:
    """Deactivate, per weight matrix, connections with |w| strictly below the
    ceil(ratio*M*N)-th largest magnitude; ties at the threshold survive."""
    if not 0.0 <= prune_ratio <= 1.0:
        raise ValueError("prune ratio must be in [0, 1]")
    for w, mask in zip(net.weights, net.masks):
        k = int(np.ceil(prune_ratio * w.size))
        if k == 0:
            continue
        mag = np.abs(w)
        t = _kth_largest(mag, k)
        mask[mag < t] = 0.0
    net.apply_masks()
    return net


def prune_to_target(net: MaskedNetwork, target: int) -> MaskedNetwork:
    """Prune with one global magnitude threshold so that exactly ``target``
    connections stay active; ties are broken by (layer, row, column) order."""
    active = net.count_params()
    if target < 1:
        raise ValueError("target must be positive")
    if target > active:
        raise ValueError(f"target {target} exceeds the {active} active connections")
    if target == active:
        return net
    mags, layers, flats = [], [], []
    for li, (w, m) in enumerate(zip(net.weights, net.masks)):
        idx = np.flatnonzero(m.ravel())
        mags.append(np.abs(w.ravel()[idx]))
        layers.append(np.full(idx.size, li))
        flats.append(idx)
    mag = np.concatenate(mags)
    layer = np.concatenate(layers)
    flat = np.concatenate(flats)
    order = np.lexsort((flat, layer, -mag))
    drop = order[target:]
    for li in range(net.n_layers):
        hits = flat[drop[layer[drop] == li]]
        if hits.size:
            net.masks[li].ravel()[hits] = 0.0
    net.apply_masks()
    return net


def neuron_growth(net: MaskedNetwork, layer: int, selection: str = "activation",
                  data: np.ndarray | None = None, noise_scale: float | None = None,
                  seed: int = 0) -> int:
    """Duplicate one neuron of a hidden layer, with noise on the copied weights.

    The source is the neuron with the largest mean absolute activation over
    ``data`` (``selection="activation"``) or a uniformly chosen active neuron
    (``selection="random"``).  The copy reuses a dormant slot (a neuron with
    no active edges) when one exists, otherwise the layer is widened by one.
    The copied in/out mask rows are duplicated exactly; the copied weights get
    zero-mean uniform noise of half-width ``noise_scale`` (default: 0.1 times
    the standard deviation of the copied active weights).  Mutates ``net`` and
    returns the index of the new neuron.
    """
    n_hidden = len(net.widths) - 2
    if n_hidden < 1:
        raise ValueError("network has no hidden layer to grow")
    if not 0 <= layer < n_hidden:
        raise ValueError(f"hidden layer index {layer} out of range")
    w_in, w_out = net.weights[layer], net.weights[layer + 1]
    m_in, m_out = net.masks[layer], net.masks[layer + 1]
    active = m_in.sum(axis=0) > 0
    if not active.any():
        raise ValueError(f"no active neuron in hidden layer {layer}")

    rng = np.random.default_rng(seed)
    if selection == "activation":
        if data is None:
            raise ValueError("activation-based selection needs a data batch")
        _, acts = net.forward(data)
        scores = np.abs(acts[layer]).mean(axis=0)
        scores[~active] = -np.inf
        src = int(np.argmax(scores))
    elif selection == "random":
        src = int(rng.choice(np.flatnonzero(active)))
    else:
        raise ValueError(f"unknown selection {selection!r}")

    dormant = (m_in.sum(axis=0) == 0) & (m_out.sum(axis=1) == 0)
    if dormant.any():
        new = int(np.flatnonzero(dormant)[0])
    else:
        new = w_in.shape[1]
        w_in = np.hstack([w_in, np.zeros((w_in.shape[0], 1))])
        m_in = np.hstack([m_in, np.zeros((m_in.shape[0], 1))])
        w_out = np.vstack([w_out, np.zeros((1, w_out.shape[1]))])
        m_out = np.vstack([m_out, np.zeros((1, m_out.shape[1]))])
        widths = list(net.widths)
        widths[layer + 1] += 1
        net.widths = tuple(widths)
        net.weights[layer], net.masks[layer] = w_in, m_in
        net.weights[layer + 1], net.masks[layer + 1] = w_out, m_out

    if noise_scale is None:
        copied = np.concatenate([w_in[:, src][m_in[:, src] == 1.0],
                                 w_out[src, :][m_out[src, :] == 1.0]])
        noise_scale = 0.1 * float(copied.std()) if copied.size else 0.0
    m_in[:, new] = m_in[:, src]
    w_in[:, new] = w_in[:, src] + rng.uniform(-noise_scale, noise_scale, w_in.shape[0])
    m_out[new, :] = m_out[src, :]
    w_out[new, :] = w_out[src, :] + rng.uniform(-noise_scale, noise_scale, w_out.shape[1])
    net.apply_masks()
    return new


@dataclass
class GrowPruneConfig:
    iterations: int = 5
    epochs_per_change: int = 20
    growth_ratio: float = 0.3
    prune_targets: tuple[int, ...] = (5000, 10000, 20000, 30000, 45000, 60000, 65000, 76000)
    neuron_growth: str = "activation"  # activation | random | off
    noise_scale: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.epochs_per_change < 0:
            raise ValueError("epochs_per_change must be non-negative")
        if not 0.0 <= self.growth_ratio <= 1.0:
            raise ValueError("growth_ratio must be in [0, 1]")
        if self.neuron_growth not in ("activation", "random", "off"):
            raise ValueError(f"unknown neuron_growth mode {self.neuron_growth!r}")
        if any(t < 1 for t in self.prune_targets):
            raise ValueError("prune targets must be positive")


@dataclass
class TraceRecord:
    iteration: int
    operation: str
    target: int
    active_connections: int
    params: int
    flops: int
    val_accuracy: float


@dataclass
class SynthesisTrace:
    baseline_accuracy: float
    records: list[TraceRecord] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "operation", "target", "active_connections",
                        "params", "flops", "val_accuracy"])
            for r in self.records:
                w.writerow([r.iteration, r.operation, r.target, r.active_connections,
                            r.params, r.flops, f"{r.val_accuracy:.6f}"])


def _train_epochs(net: MaskedNetwork, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                  epochs: int, rng: np.random.Generator) -> None:
    for _ in range(epochs):
        sgd_epoch(net, x, y, cfg, rng=rng)


def synthesize(model2: MaskedNetwork, x_train: np.ndarray, y_train: np.ndarray,
               x_val: np.ndarray, y_val: np.ndarray, cfg: GrowPruneConfig,
               train_cfg: TrainConfig) -> tuple[MaskedNetwork, SynthesisTrace]:
    """Iterative grow-and-prune starting from a trained dense network.

    Each iteration: optional neuron growth, a training epoch that also
    accumulates gradient magnitudes, gradient-based connection growth,
    ``epochs_per_change`` training epochs, then one pruned-and-retrained
    candidate per target with its validation accuracy recorded.  The winner
    across all candidates and the untouched starting network is returned
    (ranked by accuracy, then fewer parameters, then lower target); the best
    candidate of each iteration seeds the next one.
    """
    if not cfg.prune_targets:
        raise ValueError("prune target list is empty")
    dense = model2.dense_params()
    targets: list[int] = []
    for t in cfg.prune_targets:
        t = min(int(t), dense)
        if t not in targets:
            targets.append(t)

    baseline_acc = accuracy(model2, x_val, y_val)
    trace = SynthesisTrace(baseline_accuracy=baseline_acc)
    best_key = (baseline_acc, -model2.count_params(), -np.inf)
    best_net = model2.clone()

    net = model2.clone()
    for it in range(cfg.iterations):
        ops = []
        if cfg.neuron_growth != "off":
            probe = x_train[:min(512, x_train.shape[0])]
            layer = _pick_growth_layer(net, probe, cfg.neuron_growth,
                                       np.random.default_rng([cfg.seed, it, 0xA]))
            neuron_growth(net, layer, cfg.neuron_growth, probe, cfg.noise_scale,
                          seed=np.random.SeedSequence([cfg.seed, it, 0xB]).generate_state(1)[0])
            ops.append("neuron_growth")
        rng_iter = np.random.default_rng([train_cfg.seed, it])
        _, accum = sgd_epoch(net, x_train, y_train, train_cfg, rng=rng_iter,
                             accumulate=True)
        connection_growth(net, accum, "gradient", cfg.growth_ratio)
        ops.append("connection_growth")
        _train_epochs(net, x_train, y_train, train_cfg, cfg.epochs_per_change, rng_iter)

        iter_best_key, iter_best_net = None, None
        for ti, target in enumerate(targets):
            cand = net.clone()
            prune_to_target(cand, min(target, cand.count_params()))
            rng_cand = np.random.default_rng([train_cfg.seed, it, ti])
            _train_epochs(cand, x_train, y_train, train_cfg, cfg.epochs_per_change,
                          rng_cand)
            acc = accuracy(cand, x_val, y_val)
            params = cand.count_params()
            trace.records.append(TraceRecord(
                iteration=it, operation="+".join(ops) + "+prune", target=target,
                active_connections=params, params=params, flops=cand.count_flops(),
                val_accuracy=acc))
            key = (acc, -params, -target)
            if key > best_key:
                best_key, best_net = key, cand.clone()
            if iter_best_key is None or key > iter_best_key:
                iter_best_key, iter_best_net = key, cand
        net = iter_best_net
    return best_net, trace


def _pick_growth_layer(net: MaskedNetwork, probe: np.ndarray, selection: str,
                       rng: np.random.Generator) -> int:
    """Hidden layer that hosts the duplicate: the one containing the globally
    most active neuron, or a random hidden layer with at least one active neuron."""
    n_hidden = len(net.widths) - 2
    eligible = [l for l in range(n_hidden) if (net.masks[l].sum(axis=0) > 0).any()]
    if not eligible:
        raise ValueError("no hidden layer has an active neuron")
    if selection == "random":
        return int(rng.choice(eligible))
    _, acts = net.forward(probe)
    best_layer, best_score = eligible[0], -np.inf
    for l in eligible:
        active = net.masks[l].sum(axis=0) > 0
        scores = np.abs(acts[l]).mean(axis=0)
        scores[~active] = -np.inf
        top = float(scores.max())
        if top > best_score:
            best_layer, best_score = l, top
    return best_layer
