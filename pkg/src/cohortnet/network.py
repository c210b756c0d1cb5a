"""Masked feed-forward classifier engine.

Networks are bias-free stacks of weight matrices, each paired with a binary
mask of the same shape that gates which connections are active.  Every
mutation re-establishes the invariant ``W = W * mask``, so inactive weights
are exactly zero and the active-connection count *is* the parameter count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import backends

DEFAULT_HIDDEN = (256, 128, 128)
DEFAULT_SLOPE = 0.01

_MAGIC = b"MNET1\x00"


class WidthMismatchError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 5e-3
    batch_size: int = 256
    epochs: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


class MaskedNetwork:
    """Weights + masks for each consecutive width pair, leaky-ReLU hidden layers."""

    def __init__(self, widths, weights, masks, slope: float = DEFAULT_SLOPE):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError("need at least two positive layer widths")
        if len(weights) != len(widths) - 1 or len(masks) != len(weights):
            raise ValueError("one weight and one mask matrix per width pair")
        self.widths = widths
        self.slope = float(slope)
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
        self.masks = [np.ascontiguousarray(m, dtype=np.float64) for m in masks]
        for i, (w, m) in enumerate(zip(self.weights, self.masks)):
            expect = (widths[i], widths[i + 1])
            if w.shape != expect or m.shape != expect:
                raise ValueError(f"layer {i}: expected shape {expect}")
            if not np.all((m == 0.0) | (m == 1.0)):
                raise ValueError(f"layer {i}: mask entries must be 0 or 1")
        self.apply_masks()

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.widths[-1]

    def apply_masks(self) -> None:
        for w, m in zip(self.weights, self.masks):
            w *= m

    def clone(self) -> "MaskedNetwork":
        return MaskedNetwork(self.widths, [w.copy() for w in self.weights],
                             [m.copy() for m in self.masks], self.slope)

    def forward(self, batch: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Softmax probabilities and the per-layer activations (logits last)."""
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if batch.shape[1] != self.input_width:
            raise WidthMismatchError(
                f"batch width {batch.shape[1]} != input width {self.input_width}")
        acts = backends.forward_batch(self.weights, batch, self.slope)
        return backends.softmax(acts[-1]), acts

    def count_params(self) -> int:
        """Active connections; with no biases this equals the parameter count."""
        return int(sum(m.sum() for m in self.masks))

    def dense_params(self) -> int:
        return int(sum(m.size for m in self.masks))

    def count_flops(self) -> int:
        """Multiply-accumulate cost of one forward pass per input row.

        A neuron with k active inputs costs k multiplies and k-1 adds;
        neurons with no active inputs cost nothing.
        """
        total = 0
        for m in self.masks:
            k = m.sum(axis=0)
            total += int((2.0 * k - 1.0)[k > 0].sum())
        return total

    def to_bytes(self) -> bytes:
        chunks = [_MAGIC, struct.pack("<I", len(self.widths)),
                  struct.pack(f"<{len(self.widths)}I", *self.widths),
                  struct.pack("<d", self.slope)]
        for w, m in zip(self.weights, self.masks):
            chunks.append(m.astype(np.uint8).tobytes())
            chunks.append(w.astype("<f8").tobytes())
        return b"".join(chunks)

    @staticmethod
    def from_bytes(data: bytes) -> "MaskedNetwork":
        off = 0

        def take(n: int, what: str) -> bytes:
            nonlocal off
            if off + n > len(data):
                raise ModelFormatError(
                    f"truncated model file at offset {off}: need {n} bytes for {what}")
            out = data[off:off + n]
            off += n
            return out

        if take(len(_MAGIC), "magic") != _MAGIC:
            raise ModelFormatError("bad magic at offset 0: not a model file")
        (n_widths,) = struct.unpack("<I", take(4, "width count"))
        if n_widths < 2 or n_widths > 1024:
            raise ModelFormatError(f"implausible width count {n_widths} at offset 6")
        widths = struct.unpack(f"<{n_widths}I", take(4 * n_widths, "widths"))
        (slope,) = struct.unpack("<d", take(8, "slope"))
        weights, masks = [], []
        for i in range(n_widths - 1):
            m_count = widths[i] * widths[i + 1]
            mask_off = off
            mask = np.frombuffer(take(m_count, f"layer {i} mask"), dtype=np.uint8)
            if not np.all(mask <= 1):
                raise ModelFormatError(f"layer {i}: mask bytes at offset {mask_off} "
                                       "must be 0 or 1")
            w = np.frombuffer(take(8 * m_count, f"layer {i} weights"), dtype="<f8")
            masks.append(mask.astype(np.float64).reshape(widths[i], widths[i + 1]))
            weights.append(w.astype(np.float64).reshape(widths[i], widths[i + 1]))
        if off != len(data):
            raise ModelFormatError(f"{len(data) - off} trailing bytes at offset {off}")
        return MaskedNetwork(widths, weights, masks, slope)


def init_network(widths, seed: int, slope: float = DEFAULT_SLOPE) -> MaskedNetwork:
    """Fully connected start: all masks 1, weights uniform in ±1/sqrt(fan-in)."""
    widths = tuple(int(w) for w in widths)
    rng = np.random.default_rng(seed)
    weights, masks = [], []
    for m, n in zip(widths[:-1], widths[1:]):
        scale = 1.0 / np.sqrt(m)
        weights.append(rng.uniform(-scale, scale, size=(m, n)))
        masks.append(np.ones((m, n)))
    return MaskedNetwork(widths, weights, masks, slope)


def predict(net: MaskedNetwork, x: np.ndarray) -> np.ndarray:
    probs, _ = net.forward(x)
    return np.argmax(probs, axis=1)


def accuracy(net: MaskedNetwork, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict(net, x) == np.asarray(y)))


def mean_loss(net: MaskedNetwork, x: np.ndarray, y: np.ndarray) -> float:
    loss, _ = backends.loss_and_grads(
        net.weights, np.atleast_2d(np.asarray(x, dtype=np.float64)),
        np.asarray(y, dtype=np.int64), net.slope)
    return loss


def sgd_epoch(net: MaskedNetwork, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
              rng: np.random.Generator | None = None, accumulate: bool = False):
    """One shuffled pass of mini-batch SGD.

    Returns ``(mean loss, accumulator)`` where the accumulator is the sum of
    absolute batch gradients at every weight position (``None`` unless
    ``accumulate``).  Pass a persistent ``rng`` when running several epochs
    so each epoch gets a fresh shuffle.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if x.shape[1] != net.input_width:
        raise WidthMismatchError(
            f"data width {x.shape[1]} != input width {net.input_width}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    perm = rng.permutation(n)
    accum = [np.zeros_like(w) for w in net.weights] if accumulate else None
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = perm[start:start + cfg.batch_size]
        loss = backends.train_batch(net.weights, net.masks,
                                    np.ascontiguousarray(x[idx]), y[idx],
                                    cfg.learning_rate, net.slope, accum)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss!r}; training diverged")
        total += loss * idx.size
    return total / n, accum
