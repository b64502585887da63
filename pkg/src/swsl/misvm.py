"""Kernel SVM, miSVM and naiveSWSL baselines."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from swsl.data import SwslDataset
from swsl.errors import DataError
from swsl.kernels import KernelConfig, kernel_matrix
from swsl.models import SvmModel

log = logging.getLogger(__name__)

SMO_TOL = 1e-5
SMO_MAX_UPDATES = 100_000
_TAU = 1e-12


@dataclass
class SmoResult:
    coef: np.ndarray  # dual variables a_i in [0, C]
    bias: float
    gap: float  # maximal KKT violation m(a) - M(a)
    updates: int
    converged: bool


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = SMO_TOL,
        max_updates: int = SMO_MAX_UPDATES) -> SmoResult:
    """Solve ``min 1/2 a'Qa - sum(a)`` s.t. ``y'a = 0, 0 <= a <= C``, ``Q = yy' * K``.

    Pairs are chosen by the maximal violating pair rule; iteration stops when
    the violation ``max_{I_up} -y G - min_{I_low} -y G`` drops to ``tol``.
    """
    N = y.size
    a = np.zeros(N)
    G = -np.ones(N)  # gradient Qa - 1
    pos = y > 0
    diagK = np.diag(K)
    updates = 0
    while True:
        up = (pos & (a < C)) | (~pos & (a > 0))
        low = (pos & (a > 0)) | (~pos & (a < C))
        score = -y * G
        s_up = np.where(up, score, -np.inf)
        s_low = np.where(low, score, np.inf)
        i = int(np.argmax(s_up))
        j = int(np.argmin(s_low))
        gap = s_up[i] - s_low[j]
        if gap <= tol or updates >= max_updates:
            break
        # move a_i by y_i*s and a_j by -y_j*s, keeping y'a fixed
        eta = max(diagK[i] + diagK[j] - 2.0 * K[i, j], _TAU)
        s = gap / eta
        s = min(s, C - a[i] if y[i] > 0 else a[i])
        s = min(s, a[j] if y[j] > 0 else C - a[j])
        a[i] += y[i] * s
        a[j] -= y[j] * s
        # snap to the box to stop rounding from leaving tiny negatives
        a[i] = min(max(a[i], 0.0), C)
        a[j] = min(max(a[j], 0.0), C)
        G += y * (K[:, i] - K[:, j]) * s
        updates += 1

    converged = bool(gap <= tol)
    if not converged:
        warnings.warn(f"SMO stopped after {updates} updates with KKT gap {gap:.3g}",
                      RuntimeWarning, stacklevel=2)
    free = (a > 0) & (a < C)
    if np.any(free):
        bias = float(np.mean(-y[free] * G[free]))
    else:
        bounds = [v for v in (s_up[i], s_low[j]) if np.isfinite(v)]
        bias = float(np.mean(bounds)) if bounds else 0.0
    return SmoResult(coef=a, bias=bias, gap=float(gap), updates=updates, converged=converged)


def dual_objective(coef, K, y) -> float:
    """``sum(a) - 1/2 a'Qa``, the quantity SMO increases."""
    v = coef * y
    return float(coef.sum() - 0.5 * v @ K @ v)


def train_kernel_svm(features, labels, slack_C: float, kernel: KernelConfig,
                     tol: float = SMO_TOL, method: str = "svm", meta=None,
                     gram=None) -> SvmModel:
    """Soft-margin SVM trained with :func:`smo`.

    ``gram`` may supply the precomputed training kernel matrix.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DataError("features and labels disagree in length")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("SVM labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DataError("SVM training needs both classes")
    if not slack_C > 0:
        raise DataError(f"slack C must be positive, got {slack_C!r}")
    K = kernel_matrix(X, kernel) if gram is None else gram
    res = smo(K, y, slack_C, tol)
    info = {"kkt_gap": res.gap, "smo_updates": res.updates, "converged": res.converged}
    info.update(meta or {})
    return SvmModel(alpha=res.coef * y, train_features=X, kernel=kernel, bias=res.bias,
                    method=method, meta=info,
                    support_indices=tuple(int(i) for i in np.flatnonzero(res.coef > 0)),
                    slack_C=float(slack_C))


@dataclass(frozen=True, eq=False)
class MilProblem:
    """Labeled bags; ``bags[i]`` is an (m_i, d) array."""

    bags: tuple
    labels: tuple
    bag_ids: tuple = ()

    def __post_init__(self):
        bags = tuple(np.atleast_2d(np.asarray(b, dtype=np.float64)) for b in self.bags)
        if len(bags) != len(self.labels):
            raise DataError("one label per bag required")
        for k, b in enumerate(bags):
            if b.shape[0] == 0:
                raise DataError(f"bag {k} is empty")
        if len({b.shape[1] for b in bags}) > 1:
            raise DataError("bags have different feature dimensions")
        object.__setattr__(self, "bags", bags)
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))
        if not self.bag_ids:
            object.__setattr__(self, "bag_ids", tuple(str(k) for k in range(len(bags))))

    @classmethod
    def from_dataset(cls, dataset: SwslDataset, include_supervised: bool = False) -> "MilProblem":
        """Bags of ``dataset``; with ``include_supervised`` each supervised
        instance is appended as a singleton bag carrying its label."""
        bags, labels, ids = [], [], []
        for bag in dataset.bags:
            bags.append(dataset.features(bag.instance_ids))
            labels.append(bag.label)
            ids.append(bag.id)
        if include_supervised:
            for inst in dataset.supervised:
                bags.append(inst.features[None, :])
                labels.append(inst.label)
                ids.append(inst.id)
        return cls(tuple(bags), tuple(labels), tuple(ids))

    def ranges(self) -> list[tuple[int, int]]:
        out, start = [], 0
        for b in self.bags:
            out.append((start, start + b.shape[0]))
            start += b.shape[0]
        return out


def bag_constraint_holds(labels, problem: MilProblem) -> bool:
    """Every positive bag has a +1 instance and every negative bag is all -1."""
    for (a, b), lab in zip(problem.ranges(), problem.labels):
        if lab == 1 and not np.any(labels[a:b] == 1):
            return False
        if lab == -1 and np.any(labels[a:b] != -1):
            return False
    return True


def train_misvm(problem: MilProblem, slack_C: float, kernel: KernelConfig, max_outer: int = 20,
                callback: Callable[[int, np.ndarray], None] | None = None,
                method: str = "misvm") -> SvmModel:
    """miSVM: alternate SVM training and relabeling of positive-bag instances.

    Positive-bag instances start at +1; after each SVM fit they take the sign
    of the decision value, and a positive bag left without any +1 gets its
    highest-scoring instance forced to +1.  Negative-bag instances stay -1.
    ``callback(outer_iteration, labels)`` sees each new label assignment.
    """
    if not problem.bags:
        raise DataError("miSVM needs at least one bag")
    if max_outer < 1:
        raise DataError("max_outer must be at least 1")
    X = np.vstack(problem.bags)
    ranges = problem.ranges()
    labels = np.empty(X.shape[0])
    for (a, b), lab in zip(ranges, problem.labels):
        labels[a:b] = lab
    if not np.any(labels < 0):
        raise DataError("miSVM needs negative bags or labeled negatives")
    if not np.any(labels > 0):
        raise DataError("miSVM needs at least one positive bag")
    pos_ranges = [r for r, lab in zip(ranges, problem.labels) if lab == 1]

    K = kernel_matrix(X, kernel)
    changes = []
    converged = False
    for outer in range(1, max_outer + 1):
        model = train_kernel_svm(X, labels, slack_C, kernel, method=method, gram=K)
        f = K @ model.alpha + model.bias
        new = labels.copy()
        for a, b in pos_ranges:
            new[a:b] = np.where(f[a:b] > 0, 1.0, -1.0)
            if not np.any(new[a:b] > 0):
                new[a + int(np.argmax(f[a:b]))] = 1.0
        if callback is not None:
            callback(outer, new.copy())
        n_changed = int(np.sum(new != labels))
        changes.append(n_changed)
        if n_changed == 0:
            converged = True
            break
        labels = new
    else:
        log.info("miSVM hit max_outer=%d without a fixed point", max_outer)

    meta = dict(model.meta, outer_iterations=outer, converged=converged, label_changes=changes,
                instance_labels=labels.astype(int).tolist())
    return SvmModel(alpha=model.alpha, train_features=model.train_features, kernel=kernel,
                    bias=model.bias, method=method, meta=meta,
                    support_indices=model.support_indices, slack_C=model.slack_C)


def train_naive_swsl(supervised_features, supervised_labels, problem: MilProblem | None,
                     slack_C: float, kernel: KernelConfig, max_outer: int = 20,
                     callback=None) -> SvmModel:
    """naiveSWSL: supervised instances become singleton bags appended to the MIL bags."""
    S = np.atleast_2d(np.asarray(supervised_features, dtype=np.float64))
    ys = [int(v) for v in supervised_labels]
    if S.shape[0] != len(ys):
        raise DataError("supervised features and labels disagree in length")
    bags, labels, ids = [], [], []
    if problem is not None:
        bags, labels, ids = list(problem.bags), list(problem.labels), list(problem.bag_ids)
    for k, (x, lab) in enumerate(zip(S, ys)):
        bags.append(x[None, :])
        labels.append(lab)
        ids.append(f"supervised:{k}")
    merged = MilProblem(tuple(bags), tuple(labels), tuple(ids))
    return train_misvm(merged, slack_C, kernel, max_outer, callback, method="naive_swsl")


def svm_from_dataset(dataset: SwslDataset, slack_C: float, kernel: KernelConfig) -> SvmModel:
    """Supervised-only SVM on the strongly labeled instances."""
    sup = dataset.supervised
    if not sup:
        raise DataError("dataset has no supervised instances")
    return train_kernel_svm(np.vstack([i.features for i in sup]), [i.label for i in sup],
                            slack_C, kernel)


def misvm_from_dataset(dataset: SwslDataset, slack_C: float, kernel: KernelConfig,
                       max_outer: int = 20, callback=None) -> SvmModel:
    """Weak-only miSVM on the bags of ``dataset`` (supervised instances ignored)."""
    return train_misvm(MilProblem.from_dataset(dataset), slack_C, kernel, max_outer, callback)


def naive_swsl_from_dataset(dataset: SwslDataset, slack_C: float, kernel: KernelConfig,
                            max_outer: int = 20, callback=None) -> SvmModel:
    sup = dataset.supervised
    problem = MilProblem.from_dataset(dataset) if dataset.bags else None
    feats = np.vstack([i.features for i in sup]) if sup else np.zeros((0, dataset.dim))
    return train_naive_swsl(feats, [i.label for i in sup], problem, slack_C, kernel,
                            max_outer, callback)


def training_features(dataset: SwslDataset, method: str) -> np.ndarray:
    """The instances a method trains on; gamma estimation uses the same set."""
    if method == "svm":
        ids = [i.id for i in dataset.supervised]
    else:
        ids = [iid for b in dataset.bags for iid in b.instance_ids]
        if method in ("naive_swsl", "graphswsl"):
            ids += [i.id for i in dataset.supervised]
    return dataset.features(ids)


__all__ = [
    "MilProblem", "SmoResult", "smo", "dual_objective", "train_kernel_svm", "train_misvm",
    "train_naive_swsl", "bag_constraint_holds", "svm_from_dataset", "misvm_from_dataset",
    "naive_swsl_from_dataset", "training_features",
]
