"""Pure-numpy reference implementation of the training kernels.

Semantics shared with the compiled backend:

* layers have no biases; hidden outputs pass through leaky ReLU, the last
  layer's output is kept as logits;
* the loss is mean softmax cross-entropy over the batch;
* weight updates touch only positions whose mask is 1, so masked weights
  stay exactly zero;
* when a gradient accumulator is supplied, ``|gradient|`` is added at every
  position, masked ones included.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0.0, z, slope * z)


def _leaky_grad_from_output(a: np.ndarray, slope: float) -> np.ndarray:
    # post-activation sign matches pre-activation sign for slope > 0
    return np.where(a > 0.0, 1.0, slope)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_batch(weights: list[np.ndarray], x: np.ndarray, slope: float) -> list[np.ndarray]:
    """Per-layer outputs: leaky-ReLU activations for hidden layers, logits last."""
    acts: list[np.ndarray] = []
    a = x
    last = len(weights) - 1
    for i, w in enumerate(weights):
        z = a @ w
        a = z if i == last else _leaky(z, slope)
        acts.append(a)
    return acts


def loss_and_grads(weights: list[np.ndarray], x: np.ndarray, y: np.ndarray,
                   slope: float) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy loss and its raw (unmasked) weight gradients."""
    acts = forward_batch(weights, x, slope)
    n = x.shape[0]
    p = softmax(acts[-1])
    with np.errstate(divide="ignore"):  # log(0) -> -inf flags divergence upstream
        loss = float(-np.mean(np.log(p[np.arange(n), y])))
    delta = p
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: list[np.ndarray] = [np.empty(0)] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        a_prev = x if i == 0 else acts[i - 1]
        grads[i] = a_prev.T @ delta
        if i > 0:
            delta = (delta @ weights[i].T) * _leaky_grad_from_output(acts[i - 1], slope)
    return loss, grads


def train_batch(weights: list[np.ndarray], masks: list[np.ndarray], x: np.ndarray,
                y: np.ndarray, lr: float, slope: float,
                accum: list[np.ndarray] | None = None) -> float:
    """One fused SGD step on a mini-batch; mutates ``weights`` (and ``accum``) in place."""
    loss, grads = loss_and_grads(weights, x, y, slope)
    for i, g in enumerate(grads):
        if accum is not None:
            accum[i] += np.abs(g)
        weights[i] -= lr * g * masks[i]
    return loss
