"""Density models fitted to the scaled training features: a single
multivariate normal, a Gaussian mixture fitted by EM with the component
count chosen on validation data, and a Gaussian kernel density estimate.
Samples from any of them are clipped to [0, 1] to stay in the scaled
feature domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COV_REG = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


class DegenerateComponentError(RuntimeError):
    pass


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _gaussian_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = mean.size
    _, logdet = np.linalg.slogdet(cov)
    inv = np.linalg.inv(cov)
    diff = x - mean
    q = np.einsum("ij,jk,ik->i", diff, inv, diff)
    return -0.5 * (d * _LOG_2PI + logdet + q)


@dataclass
class MNDModel:
    mean: np.ndarray
    cov: np.ndarray
    kind: str = "mnd"

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return _gaussian_logpdf(np.atleast_2d(x), self.mean, self.cov)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(self.cov)
        z = rng.standard_normal((n, self.mean.size))
        return self.mean + z @ chol.T


@dataclass
class GMMModel:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    kind: str = "gmm"
    train_log_likelihoods: list[float] = field(default_factory=list)
    reinit_count: int = 0

    @property
    def n_components(self) -> int:
        return self.weights.size

    def _component_logpdfs(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], self.n_components))
        for k in range(self.n_components):
            out[:, k] = _gaussian_logpdf(x, self.means[k], self.covs[k])
        return out

    def log_density(self, x: np.ndarray) -> np.ndarray:
        lp = self._component_logpdfs(x) + np.log(self.weights)
        return _logsumexp(lp, axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(self.n_components, size=n, p=self.weights)
        d = self.means.shape[1]
        z = rng.standard_normal((n, d))
        out = np.empty((n, d))
        for k in range(self.n_components):
            idx = comps == k
            if not idx.any():
                continue
            chol = np.linalg.cholesky(self.covs[k])
            out[idx] = self.means[k] + z[idx] @ chol.T
        return out


@dataclass
class KDEModel:
    points: np.ndarray
    bandwidth: np.ndarray
    kind: str = "kde"

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        h = np.maximum(self.bandwidth, 1e-12)
        # (n_query, n_points) summed log kernels per dimension
        z = (x[:, None, :] - self.points[None, :, :]) / h
        lk = -0.5 * (z ** 2).sum(axis=2) - np.log(h).sum() - 0.5 * x.shape[1] * _LOG_2PI
        return _logsumexp(lk, axis=1) - np.log(self.points.shape[0])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, self.points.shape[0], size=n)
        noise = rng.standard_normal((n, self.points.shape[1])) * self.bandwidth
        return self.points[idx] + noise


def fit_mnd(train: np.ndarray) -> MNDModel:
    """Column means and (n-1)-denominator sample covariance plus a small
    diagonal ridge that keeps the matrix invertible."""
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] < 2:
        raise ValueError("need at least two rows to fit a normal model")
    mean = train.mean(axis=0)
    cov = np.atleast_2d(np.cov(train, rowvar=False, ddof=1))
    return MNDModel(mean, cov + COV_REG * np.eye(train.shape[1]))


def fit_kde(train: np.ndarray) -> KDEModel:
    """Gaussian KDE over the training points with per-dimension Scott
    bandwidth: sample std times n^(-1/(d+4))."""
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] < 2:
        raise ValueError("need at least two rows to fit a KDE")
    n, d = train.shape
    factor = n ** (-1.0 / (d + 4))
    return KDEModel(train.copy(), train.std(axis=0, ddof=1) * factor)


def _kmeans_init(x: np.ndarray, k: int, rng: np.random.Generator, iters: int = 10):
    n = x.shape[0]
    centers = x[rng.choice(n, size=k, replace=False)].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        for j in range(k):
            idx = assign == j
            if idx.any():
                centers[j] = x[idx].mean(axis=0)
    return centers, assign


def _fit_gmm_single(x: np.ndarray, k: int, rng: np.random.Generator,
                    max_iter: int, tol: float) -> GMMModel:
    n, d = x.shape
    global_cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=0)) + COV_REG * np.eye(d)
    means, assign = _kmeans_init(x, k, rng)
    weights = np.empty(k)
    covs = np.empty((k, d, d))
    for j in range(k):
        idx = assign == j
        weights[j] = max(idx.sum(), 1) / n
        if idx.sum() >= 2:
            covs[j] = np.atleast_2d(np.cov(x[idx], rowvar=False, ddof=0)) + COV_REG * np.eye(d)
        else:
            covs[j] = global_cov
    weights /= weights.sum()

    lls: list[float] = []
    reinits = 0
    raw_covs = covs - COV_REG * np.eye(d)  # last M-step covariances before the ridge
    soft_counts = np.full(k, float(n) / k)
    prev_mean_ll = None
    for _ in range(max_iter):
        model = GMMModel(weights, means, covs)
        log_joint = model._component_logpdfs(x) + np.log(weights)
        log_norm = _logsumexp(log_joint, axis=1)
        ll = float(log_norm.sum())
        lls.append(ll)
        mean_ll = ll / n
        if prev_mean_ll is not None and abs(mean_ll - prev_mean_ll) < tol:
            break
        prev_mean_ll = mean_ll

        resp = np.exp(log_joint - log_norm[:, None])
        soft_counts = resp.sum(axis=0)
        dead = soft_counts < n * 1e-10
        if dead.any():
            # vanishing component: reseed it and restart the ascent record
            reinits += int(dead.sum())
            if reinits > 10:
                raise DegenerateComponentError(
                    f"GMM component vanished {reinits} times for K={k}")
            for j in np.flatnonzero(dead):
                means[j] = x[rng.integers(0, n)]
                covs[j] = global_cov
                weights[j] = 1.0 / k
            weights /= weights.sum()
            lls.clear()
            prev_mean_ll = None
            continue

        weights = soft_counts / n
        means = (resp.T @ x) / soft_counts[:, None]
        for j in range(k):
            diff = x - means[j]
            raw = (resp[:, j, None] * diff).T @ diff / soft_counts[j]
            raw_covs[j] = raw
            covs[j] = raw + COV_REG * np.eye(d)

    # small-sample correction applied once after EM so a single-component fit
    # matches the (n-1)-denominator normal fit
    for j in range(k):
        if soft_counts[j] > 1.5:
            covs[j] = raw_covs[j] * (soft_counts[j] / (soft_counts[j] - 1.0)) \
                + COV_REG * np.eye(d)
    model = GMMModel(weights.copy(), means.copy(), covs.copy(),
                     train_log_likelihoods=lls, reinit_count=reinits)
    return model


def fit_gmm(train: np.ndarray, candidate_k=(1, 2, 4, 8, 16),
            validation: np.ndarray | None = None, seed: int = 0,
            max_iter: int = 200, tol: float = 1e-6) -> GMMModel:
    """EM fit for each candidate component count; the count with the highest
    mean validation log-likelihood wins (ties go to the earlier candidate)."""
    train = np.asarray(train, dtype=np.float64)
    candidate_k = tuple(int(k) for k in candidate_k)
    if not candidate_k:
        raise ValueError("candidate component list is empty")
    if any(k < 1 for k in candidate_k):
        raise ValueError("component counts must be positive")
    if train.ndim != 2 or train.shape[0] < max(candidate_k):
        raise ValueError("need at least max(candidate_k) training rows")
    if validation is None and len(candidate_k) > 1:
        raise ValueError("component selection needs a validation matrix")

    best_model, best_score = None, -np.inf
    for ki, k in enumerate(candidate_k):
        rng = np.random.default_rng([seed, ki])
        model = _fit_gmm_single(train, k, rng, max_iter, tol)
        if validation is None:
            return model
        score = float(model.log_density(np.asarray(validation, dtype=np.float64)).mean())
        if score > best_score:
            best_model, best_score = model, score
    return best_model


def sample(model, n: int, seed: int = 0) -> np.ndarray:
    """Draw n rows from a fitted model, clipped into [0, 1]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return np.clip(model.sample(int(n), rng), 0.0, 1.0)
