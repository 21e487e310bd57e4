"""Gaussian-process regression with partition-induced kernels.

The hard box kernel is 1 for points sharing a region and 0 otherwise; its Gram
matrix is a permuted block-diagonal of all-ones blocks and hence PSD.

The soft box kernel replaces region indicators by logistic membership
features and takes their cosine similarity::

    phi_R(x) = expit(alpha * s_R(x))
    k(x, y)  = <phi(x), phi(y)> / (|phi(x)| |phi(y)|)

where ``s_R(x)`` is the signed L-infinity distance from ``x`` to the interior
faces of region ``R`` (positive inside; faces on the domain boundary are
ignored). Being a normalised inner product of feature vectors it is PSD,
symmetric, in [0, 1] and equals 1 on the diagonal; as ``alpha`` grows the
features tend to indicators and ``k`` to the hard kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit

from .partition import Partition


class NotSymmetricError(ValueError):
    pass


@dataclass(frozen=True)
class HardBoxKernel:
    partition: Partition

    def __call__(self, X, Y=None) -> np.ndarray:
        a = self.partition.locate(np.atleast_2d(X))
        b = a if Y is None else self.partition.locate(np.atleast_2d(Y))
        return (a[:, None] == b[None, :]).astype(float)

    def blocks(self, X) -> np.ndarray:
        return self.partition.locate(np.atleast_2d(X))


@dataclass(frozen=True)
class SoftBoxKernel:
    partition: Partition
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    def signed_distance(self, X) -> np.ndarray:
        """``(n, regions)`` signed L-inf distance to each region's inner faces."""
        X = self.partition.domain.check_many(np.atleast_2d(X))
        p = self.partition
        dom_lo = np.asarray(p.domain.lo)
        dom_hi = np.asarray(p.domain.hi)
        lo = np.where(p._lo == dom_lo, -np.inf, p._lo)
        hi = np.where(p._hi == dom_hi, np.inf, p._hi)
        below = lo[None] - X[:, None]  # > 0 when left of the box
        above = X[:, None] - hi[None]  # > 0 when right of the box
        gap = np.maximum(below, above)  # per-dim; <= 0 means inside on that dim
        outside = np.max(np.maximum(gap, 0.0), axis=2)
        inside = np.min(-gap, axis=2)
        return np.where(outside > 0, -outside, inside)

    def features(self, X) -> np.ndarray:
        s = self.signed_distance(X)
        phi = expit(self.alpha * s)
        return phi / np.linalg.norm(phi, axis=1, keepdims=True)

    def __call__(self, X, Y=None) -> np.ndarray:
        fx = self.features(X)
        fy = fx if Y is None else self.features(Y)
        return np.clip(fx @ fy.T, 0.0, 1.0)


def soft_kernel_eval(kernel: SoftBoxKernel, x, y) -> float:
    return float(kernel(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


def gram(kernel, points) -> np.ndarray:
    K = kernel(np.atleast_2d(points))
    return 0.5 * (K + K.T)


def psd_check(K, tol: float = 1e-8) -> tuple[bool, float]:
    """``(min eigenvalue >= -tol, min eigenvalue)`` of a symmetric matrix."""
    K = np.asarray(K, dtype=float)
    if K.shape[0] != K.shape[1] or not np.allclose(K, K.T, atol=1e-12, rtol=0):
        raise NotSymmetricError("gram matrix is not symmetric")
    lam = float(np.linalg.eigvalsh(K)[0]) if K.size else 0.0
    return lam >= -tol, lam


def block_quadratic_form(labels, v) -> float:
    """``v' K v`` for the hard kernel as a sum of squared block sums."""
    labels = np.asarray(labels)
    v = np.asarray(v, dtype=float)
    return float(sum(v[labels == b].sum() ** 2 for b in np.unique(labels)))


def gp_posterior(kernel, train_x, train_y, noise_var: float, query_x):
    """Zero-mean GP posterior means and variances at ``query_x``."""
    if not noise_var > 0:
        raise ValueError("noise variance must be > 0")
    X = np.atleast_2d(train_x)
    Q = np.atleast_2d(query_x)
    y = np.asarray(train_y, dtype=float).reshape(-1)
    if y.size == 0:
        prior = np.diag(kernel(Q)).copy()
        return np.zeros(Q.shape[0]), prior
    K = gram(kernel, X) + noise_var * np.eye(y.size)
    try:
        factor = linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError:
        factor = linalg.cho_factor(K + 1e-10 * np.eye(y.size), lower=True)
    Ks = kernel(X, Q)
    mean = Ks.T @ linalg.cho_solve(factor, y)
    v = linalg.solve_triangular(factor[0], Ks, lower=True)
    var = np.diag(kernel(Q)) - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def tree_mean(partition: Partition, train_x, train_y, query_x) -> np.ndarray:
    """Piecewise-constant regional average; NaN in empty regions."""
    a = partition.locate(np.atleast_2d(train_x))
    q = partition.locate(np.atleast_2d(query_x))
    y = np.asarray(train_y, dtype=float)
    means = {int(r): y[a == r].mean() if np.any(a == r) else np.nan for r in partition.ids}
    return np.array([means[int(r)] for r in q])


def total_variation(values) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(values, dtype=float)))))


def demo_curves(partition: Partition, train_x, train_y, alphas, noise_var: float, grid: int = 512):
    """Curves for a 1-D partition: grid, tree mean, hard GP and soft GPs."""
    if partition.domain.dims != 1:
        raise ValueError("demo curves need a 1-D partition")
    xs = np.linspace(partition.domain.lo[0], partition.domain.hi[0], grid)[:, None]
    X = np.asarray(train_x, dtype=float).reshape(-1, 1)
    out = {
        "x": xs[:, 0],
        "tree_mean": tree_mean(partition, X, train_y, xs),
        "gp_hard": gp_posterior(HardBoxKernel(partition), X, train_y, noise_var, xs)[0],
    }
    for a in alphas:
        out[f"gp_soft@{a:g}"] = gp_posterior(SoftBoxKernel(partition, a), X, train_y, noise_var, xs)[0]
    return out
