"""Timing comparison of the compiled and numpy training kernels."""

from __future__ import annotations

import time

import numpy as np

from .backends import available_backends, get_backend
from .network import TrainConfig, init_network


def time_backend(backend, widths, n_rows: int, batch_size: int, epochs: int,
                 seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    x = rng.random((n_rows, widths[0]))
    y = rng.integers(0, widths[-1], size=n_rows).astype(np.int64)
    net = init_network(widths, seed=seed)
    order = np.random.default_rng(seed + 1).permutation(n_rows)

    start = time.perf_counter()
    for _ in range(epochs):
        for lo in range(0, n_rows, batch_size):
            idx = order[lo:lo + batch_size]
            backend.train_batch(net.weights, net.masks,
                                np.ascontiguousarray(x[idx]), y[idx],
                                5e-3, net.slope, None)
    elapsed = time.perf_counter() - start
    return {"backend": backend.NAME, "seconds_per_epoch": elapsed / epochs}


def run_benchmark(width: int = 194, hidden=(256, 128, 128), classes: int = 3,
                  n_rows: int = 2048, batch_size: int = 256, epochs: int = 3,
                  seed: int = 0) -> list[dict]:
    widths = (width, *hidden, classes)
    results = [time_backend(get_backend(name), widths, n_rows, batch_size, epochs, seed)
               for name in available_backends()]
    base = results[0]["seconds_per_epoch"]
    for r in results:
        r["speedup_vs_numpy"] = base / r["seconds_per_epoch"]
    return results


def print_benchmark(**kwargs) -> None:
    results = run_benchmark(**kwargs)
    print(f"{'backend':<10} {'s/epoch':>10} {'vs numpy':>10}")
    for r in results:
        print(f"{r['backend']:<10} {r['seconds_per_epoch']:>10.4f} "
              f"{r['speedup_vs_numpy']:>9.2f}x")
