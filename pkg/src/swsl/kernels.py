"""Exponential chi-square kernels, kNN similarity graphs and Laplacians."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from swsl.errors import DataError

CHI2_EPS = 1e-12
# rows per block in pairwise computations; bounds the (block, M, d) temporary
_BLOCK = 256


@dataclass(frozen=True)
class KernelConfig:
    """Kernel settings.

    ``kind`` is ``"exp_chi2"`` (``exp(-gamma * chi2(x, y))``) or ``"rbf"``
    (``exp(-||x - y||^2 / (2 sigma^2))``).
    """

    kind: str = "exp_chi2"
    gamma: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exp_chi2", "rbf"):
            raise DataError(f"unknown kernel kind {self.kind!r}")
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise DataError(f"kernel gamma must be positive, got {self.gamma!r}")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise DataError(f"kernel sigma must be positive, got {self.sigma!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(kind=doc["kind"], gamma=float(doc["gamma"]), sigma=float(doc["sigma"]))


def _as_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DataError("expected a vector or a 2-D array of feature vectors")
    return X


def _check_histograms(X):
    if np.any(X < 0):
        row = int(np.argwhere(X < 0)[0, 0])
        raise DataError(f"chi-square distance needs non-negative features (row {row})")


def chi_square_distance(x, y) -> float:
    """``0.5 * sum((x - y)^2 / (x + y + eps))`` for two histograms."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"histogram shapes differ: {x.shape} vs {y.shape}")
    if np.any(x < 0) or np.any(y < 0):
        raise DataError("chi-square distance needs non-negative features")
    return float(0.5 * np.sum((x - y) ** 2 / (x + y + CHI2_EPS)))


def chi_square_distances(X, Y=None) -> np.ndarray:
    """Pairwise chi-square distances between the rows of ``X`` and ``Y``.

    Every entry is computed on its own (no shared reductions), so the result
    is exactly symmetric when ``Y`` is ``X`` and independent of blocking.
    """
    X = _as_matrix(X)
    Y = X if Y is None else _as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise DataError(f"feature dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    _check_histograms(X)
    _check_histograms(Y)
    out = np.empty((X.shape[0], Y.shape[0]))
    for start in range(0, X.shape[0], _BLOCK):
        xb = X[start:start + _BLOCK, None, :]
        diff = xb - Y[None, :, :]
        out[start:start + _BLOCK] = 0.5 * np.sum(diff * diff / (xb + Y[None, :, :] + CHI2_EPS), axis=2)
    return out


def squared_euclidean_distances(X, Y=None) -> np.ndarray:
    X = _as_matrix(X)
    Y = X if Y is None else _as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise DataError(f"feature dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    out = np.empty((X.shape[0], Y.shape[0]))
    # explicit differences rather than the |x|^2 - 2xy + |y|^2 expansion:
    # exact zeros on the diagonal and exact symmetry
    for start in range(0, X.shape[0], _BLOCK):
        diff = X[start:start + _BLOCK, None, :] - Y[None, :, :]
        out[start:start + _BLOCK] = np.sum(diff * diff, axis=2)
    return out


def estimate_gamma(features) -> float:
    """Inverse of the mean chi-square distance over distinct pairs."""
    X = _as_matrix(features)
    if X.shape[0] < 2:
        raise DataError("gamma estimation needs at least two points")
    D = chi_square_distances(X)
    iu = np.triu_indices(X.shape[0], k=1)
    mean = float(np.mean(D[iu]))
    if not mean > 0:
        raise DataError("all points are identical; gamma is undefined")
    return 1.0 / mean


def kernel_matrix(X, config: KernelConfig, Y=None) -> np.ndarray:
    """Gram matrix ``k(X_i, Y_j)``; ``Y`` defaults to ``X``."""
    if config.kind == "exp_chi2":
        return np.exp(-config.gamma * chi_square_distances(X, Y))
    return np.exp(-squared_euclidean_distances(X, Y) / (2.0 * config.sigma ** 2))


@dataclass(frozen=True, eq=False)
class GraphLaplacian:
    W: np.ndarray
    degrees: np.ndarray
    L: np.ndarray
    k: int


def knn_graph(features, k: int, sigma: float = 1.0, metric: str = "chi2") -> GraphLaplacian:
    """Symmetric kNN graph with Gaussian edge weights and its Laplacian.

    ``i`` and ``j`` are joined when either is among the other's ``k`` nearest
    neighbours.  Edge weights are ``exp(-dist^2 / (2 sigma^2))`` where
    ``dist`` is the chi-square distance (``metric="chi2"``) or the Euclidean
    norm (``metric="euclidean"``).  Equal distances are resolved in favour of
    the lower index.
    """
    X = _as_matrix(features)
    N = X.shape[0]
    if not 1 <= k < N:
        raise DataError(f"kNN graph needs 1 <= k < N, got k={k}, N={N}")
    if not sigma > 0:
        raise DataError(f"graph sigma must be positive, got {sigma!r}")
    if metric == "chi2":
        dist_sq = chi_square_distances(X) ** 2
    elif metric == "euclidean":
        dist_sq = squared_euclidean_distances(X)
    else:
        raise DataError(f"unknown graph metric {metric!r}")

    ranked = dist_sq.copy()
    np.fill_diagonal(ranked, np.inf)
    nearest = np.argsort(ranked, axis=1, kind="stable")[:, :k]
    adj = np.zeros((N, N), dtype=bool)
    adj[np.repeat(np.arange(N), k), nearest.ravel()] = True
    adj |= adj.T
    np.fill_diagonal(adj, False)

    W = np.where(adj, np.exp(-dist_sq / (2.0 * sigma ** 2)), 0.0)
    degrees = W.sum(axis=1)
    L = np.diag(degrees) - W
    return GraphLaplacian(W=W, degrees=degrees, L=L, k=k)
