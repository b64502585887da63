"""graphSWSL: manifold-regularized least squares with positive-bag constraints.

With ``beta = K alpha`` (scores of the training instances) the training
objective is::

    F(alpha) = |J (Y - beta)|^2 + lam1 alpha'K alpha + (lam2 / N^2) beta'L beta
               + lam3 * sum_t max(0, 1 - max_{j in bag t} beta_j)^2

The bag term is non-convex.  CCCP replaces each bag max by its linearization
``delta_t' beta`` at the current iterate, where ``delta_t`` spreads unit mass
uniformly over the instances attaining the max.  Each linearized problem is a
convex, once-differentiable piecewise quadratic; it is solved exactly by an
active-set Newton iteration (fix the set of bags with positive slack, solve
the resulting linear system, re-check the set) with an exact line search.

Because ``delta_t' beta <= max(beta over bag t)`` for every ``alpha``, the
linearized objective majorizes ``F`` and touches it at the iterate, so the
sequence ``F(alpha^k)`` never increases.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from swsl.data import IndexedDataset
from swsl.errors import DataError, SolverError
from swsl.kernels import KernelConfig, kernel_matrix, knn_graph
from swsl.models import GraphSwslModel, predict_bag, predict_instance, predict_instances

log = logging.getLogger(__name__)

__all__ = [
    "GraphSettings", "SolverConfig", "ProblemMatrices", "CccpState",
    "build_problem", "objective_value", "penalized_objective", "subgradient_weights",
    "subproblem_objective", "subproblem_gradient", "solve_subproblem", "supervised_solution",
    "cccp", "train", "predict_instance", "predict_instances", "predict_bag", "GraphSwslModel",
]


@dataclass(frozen=True)
class GraphSettings:
    k: int = 20
    sigma: float = 1.0
    metric: str = "chi2"


@dataclass(frozen=True)
class SolverConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float | str = "auto"
    cccp_tol: float = 1e-6
    cccp_max_iters: int = 50
    subproblem_tol: float = 1e-6
    subproblem_max_iters: int = 100
    tie_tol: float = 1e-9

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DataError(f"{name} must be positive, got {value!r}")
        if self.lambda3 != "auto" and not (np.isfinite(self.lambda3) and self.lambda3 > 0):
            raise DataError(f"lambda3 must be positive or 'auto', got {self.lambda3!r}")
        for name in ("cccp_tol", "subproblem_tol", "tie_tol"):
            if not getattr(self, name) > 0:
                raise DataError(f"{name} must be positive")
        if self.cccp_max_iters < 1 or self.subproblem_max_iters < 1:
            raise DataError("iteration limits must be at least 1")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ProblemMatrices:
    Y: np.ndarray
    K: np.ndarray
    L: np.ndarray
    n: int
    bag_ranges: tuple[tuple[int, int], ...]

    @property
    def N(self) -> int:
        return self.Y.size

    @property
    def m(self) -> int:
        return self.N - self.n

    @property
    def T(self) -> int:
        return len(self.bag_ranges)

    @property
    def labeled_mask(self) -> np.ndarray:
        mask = np.zeros(self.N)
        mask[:self.n] = 1.0
        return mask

    @property
    def J(self) -> np.ndarray:
        return np.diag(self.labeled_mask)


def build_problem(data: IndexedDataset, kernel: KernelConfig,
                  graph: GraphSettings | None = None) -> ProblemMatrices:
    """Kernel, Laplacian and label vector over all ``N`` training instances."""
    if data.N < 2:
        raise DataError(f"training needs at least 2 instances, got {data.N}")
    graph = graph or GraphSettings()
    X = np.asarray(data.features, dtype=np.float64)
    K = kernel_matrix(X, kernel)
    L = knn_graph(X, graph.k, graph.sigma, graph.metric).L
    Y = np.zeros(data.N)
    Y[:data.n] = data.labels[:data.n]
    return ProblemMatrices(Y=Y, K=K, L=L, n=data.n, bag_ranges=tuple(data.bag_ranges))


def resolve_lambda3(p: ProblemMatrices, cfg: SolverConfig) -> float:
    if cfg.lambda3 != "auto":
        return float(cfg.lambda3)
    if p.T == 0:
        raise DataError("lambda3='auto' (n/T) is undefined without positive bags; "
                        "give any positive value, it has no effect when T=0")
    if p.n == 0:
        raise DataError("lambda3='auto' (n/T) is zero without labeled instances")
    return p.n / p.T


def _quadratic_part(alpha, beta, p: ProblemMatrices, lam1, lam2):
    r = p.labeled_mask * (p.Y - beta)
    return float(r @ r + lam1 * (alpha @ beta) + lam2 / p.N ** 2 * (beta @ (p.L @ beta)))


def _check_finite(value, what):
    if not np.isfinite(value):
        raise SolverError(f"non-finite {what}", {"value": value})
    return value


def objective_value(alpha, xi, p: ProblemMatrices, cfg: SolverConfig) -> float:
    """Training objective with explicit bag slacks ``xi``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if alpha.shape != (p.N,) or xi.shape != (p.T,):
        raise DataError(f"expected alpha of length {p.N} and xi of length {p.T}")
    lam3 = resolve_lambda3(p, cfg) if p.T else 0.0
    beta = p.K @ alpha
    value = _quadratic_part(alpha, beta, p, cfg.lambda1, cfg.lambda2) + lam3 * float(xi @ xi)
    return _check_finite(value, "objective")


def bag_max_scores(beta, p: ProblemMatrices) -> np.ndarray:
    return np.array([beta[a:b].max() for a, b in p.bag_ranges])


def optimal_slacks(alpha, p: ProblemMatrices) -> np.ndarray:
    """Smallest feasible slack per bag: ``max(0, 1 - bag max)``."""
    beta = p.K @ np.asarray(alpha, dtype=np.float64)
    if p.T == 0:
        return np.zeros(0)
    return np.maximum(0.0, 1.0 - bag_max_scores(beta, p))


def penalized_objective(alpha, p: ProblemMatrices, cfg: SolverConfig) -> float:
    """Training objective with the slacks minimized out."""
    return objective_value(alpha, optimal_slacks(alpha, p), p, cfg)


def subgradient_weights(alpha, p: ProblemMatrices, t: int, tie_tol: float = 1e-9) -> np.ndarray:
    """Weights over the members of bag ``t`` spreading mass 1 over its maximizers.

    A member counts as a maximizer when its score lies within
    ``tie_tol * (1 + |max|)`` of the bag max.
    """
    start, stop = p.bag_ranges[t]
    scores = p.K[start:stop] @ np.asarray(alpha, dtype=np.float64)
    return _tie_weights(scores, tie_tol)


def _tie_weights(scores, tie_tol):
    top = scores.max()
    hit = scores >= top - tie_tol * (1.0 + abs(top))
    return hit / hit.sum()


def max_sets(alpha, p: ProblemMatrices, tie_tol: float) -> tuple[tuple[int, ...], ...]:
    beta = p.K @ alpha
    return tuple(_max_set(beta, a, b, tie_tol) for a, b in p.bag_ranges)


def _max_set(beta, start, stop, tie_tol):
    scores = beta[start:stop]
    top = scores.max()
    return tuple(int(i) + start for i in np.flatnonzero(scores >= top - tie_tol * (1.0 + abs(top))))


def linearization_matrix(alpha, p: ProblemMatrices, tie_tol: float) -> np.ndarray:
    """``N x T`` matrix whose column ``t`` is the bag-``t`` weight vector in full coordinates."""
    beta = p.K @ np.asarray(alpha, dtype=np.float64)
    D = np.zeros((p.N, p.T))
    for t, (a, b) in enumerate(p.bag_ranges):
        D[a:b, t] = _tie_weights(beta[a:b], tie_tol)
    return D


def subproblem_objective(alpha, p: ProblemMatrices, cfg: SolverConfig, D) -> float:
    """Linearized (convex) objective for weight matrix ``D``, slacks minimized out."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = p.K @ alpha
    value = _quadratic_part(alpha, beta, p, cfg.lambda1, cfg.lambda2)
    if p.T:
        h = np.maximum(0.0, 1.0 - D.T @ beta)
        value += resolve_lambda3(p, cfg) * float(h @ h)
    return _check_finite(value, "subproblem objective")


def _reduced_residual(alpha, beta, p, lam1, lam2, lam3, D):
    # gradient = 2 K r; r vanishes exactly at stationary points
    r = p.labeled_mask * (beta - p.Y) + lam1 * alpha + lam2 / p.N ** 2 * (p.L @ beta)
    if p.T:
        h = np.maximum(0.0, 1.0 - D.T @ beta)
        r = r - lam3 * (D @ h)
    return r


def subproblem_gradient(alpha, p: ProblemMatrices, cfg: SolverConfig, D) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = p.K @ alpha
    lam3 = resolve_lambda3(p, cfg) if p.T else 0.0
    return 2.0 * (p.K @ _reduced_residual(alpha, beta, p, cfg.lambda1, cfg.lambda2, lam3, D))


def _solve_linear(A, rhs, K):
    try:
        with np.errstate(all="raise"):
            lu = scipy.linalg.lu_factor(A, check_finite=True)
            x = scipy.linalg.lu_solve(lu, rhs)
        if np.all(np.isfinite(x)):
            return x
    except (FloatingPointError, ValueError, np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    jitter = 1e-10 * np.trace(K) / K.shape[0]
    log.warning("linear system ill-conditioned; retrying with diagonal jitter %.3g", jitter)
    x = scipy.linalg.solve(A + jitter * np.eye(A.shape[0]), rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite coefficients")
    return x


def _newton_point(p, lam1, lam2, lam3, D, active):
    """Stationary point of the subproblem when exactly ``active`` bags have slack."""
    P = np.diag(p.labeled_mask) + (lam2 / p.N ** 2) * p.L
    rhs = p.Y.copy()
    if np.any(active):
        Da = D[:, active]
        P = P + lam3 * (Da @ Da.T)
        rhs = rhs + lam3 * Da.sum(axis=1)
    A = P @ p.K
    A[np.diag_indices_from(A)] += lam1
    return _solve_linear(A, rhs, p.K)


def supervised_solution(p: ProblemMatrices, cfg: SolverConfig) -> np.ndarray:
    """Minimizer of the objective without the bag term.

    Solves ``(J K + lam1 I + (lam2 / N^2) L K) alpha = Y``.
    """
    return _newton_point(p, cfg.lambda1, cfg.lambda2, 0.0, np.zeros((p.N, 0)),
                         np.zeros(0, dtype=bool))


def _line_search(alpha, direction, p, lam1, lam2, lam3, D):
    """Exact minimizer over ``s`` in [0, 1] of the subproblem along ``direction``."""
    beta = p.K @ alpha
    bd = p.K @ direction
    j = p.labeled_mask
    c = lam2 / p.N ** 2
    Lb, Lbd = p.L @ beta, p.L @ bd
    # derivative of the smooth part is g0 + s * g1
    g0 = -2 * ((j * (p.Y - beta)) @ bd) + 2 * lam1 * (alpha @ bd) + 2 * c * (Lb @ bd)
    g1 = 2 * ((j * bd) @ bd) + 2 * lam1 * (direction @ bd) + 2 * c * (bd @ Lbd)
    margin = 1.0 - D.T @ beta
    slope = D.T @ bd

    def dphi(s):
        h = np.maximum(0.0, margin - s * slope)
        return g0 + s * g1 - 2 * lam3 * (h @ slope)

    d0 = dphi(0.0)
    if d0 >= 0:
        return 0.0
    if dphi(1.0) <= 0:
        return 1.0
    return scipy.optimize.brentq(dphi, 0.0, 1.0, xtol=1e-14, rtol=1e-14)


def solve_subproblem(p: ProblemMatrices, cfg: SolverConfig, alpha_k, D=None) -> np.ndarray:
    """Minimize the CCCP subproblem linearized at ``alpha_k``.

    ``D`` defaults to the tie weights at ``alpha_k``.  The returned point has
    subproblem gradient norm at most
    ``cfg.subproblem_tol * (1 + |gradient at alpha_k|)`` and objective no
    larger than at ``alpha_k``.
    """
    alpha_k = np.asarray(alpha_k, dtype=np.float64)
    if not np.all(np.isfinite(alpha_k)):
        raise SolverError("starting coefficients are not finite")
    if D is None:
        D = linearization_matrix(alpha_k, p, cfg.tie_tol)
    lam1, lam2 = cfg.lambda1, cfg.lambda2
    lam3 = resolve_lambda3(p, cfg) if p.T else 0.0

    def grad_norm(a):
        return float(np.linalg.norm(subproblem_gradient(a, p, cfg, D)))

    f_start = subproblem_objective(alpha_k, p, cfg, D)
    tol = cfg.subproblem_tol * (1.0 + grad_norm(alpha_k))

    def active_set(a):
        return (1.0 - D.T @ (p.K @ a)) > 0

    alpha = alpha_k
    for it in range(cfg.subproblem_max_iters):
        active = active_set(alpha)
        candidate = _newton_point(p, lam1, lam2, lam3, D, active)
        if np.array_equal(active_set(candidate), active):
            alpha = candidate
            break
        step = _line_search(alpha, candidate - alpha, p, lam1, lam2, lam3, D)
        if step == 0.0:
            break
        alpha = alpha + step * (candidate - alpha)

    if grad_norm(alpha) > tol:
        log.debug("active-set iteration stalled; falling back to L-BFGS")
        res = scipy.optimize.minimize(
            subproblem_objective, alpha, args=(p, cfg, D), jac=subproblem_gradient,
            method="L-BFGS-B", options={"maxiter": 20000, "gtol": tol * 1e-2, "ftol": 0.0})
        alpha = res.x
        if grad_norm(alpha) > tol:
            raise SolverError("CCCP subproblem did not converge", {
                "gradient_norm": grad_norm(alpha), "tolerance": tol,
                "objective": subproblem_objective(alpha, p, cfg, D),
            })

    if subproblem_objective(alpha, p, cfg, D) > f_start:
        # alpha_k is already optimal up to rounding
        return alpha_k.copy()
    return alpha


@dataclass
class CccpState:
    alpha: np.ndarray
    xi: np.ndarray
    max_sets: tuple
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    stop_reason: str = ""


def cccp(p: ProblemMatrices, cfg: SolverConfig, alpha0=None) -> CccpState:
    """Run CCCP from ``alpha0`` (default: the supervised-only solution)."""
    alpha = supervised_solution(p, cfg) if alpha0 is None else np.array(alpha0, dtype=np.float64)
    value = penalized_objective(alpha, p, cfg)
    trace = [value]
    sets = max_sets(alpha, p, cfg.tie_tol)
    state = CccpState(alpha=alpha, xi=optimal_slacks(alpha, p), max_sets=sets,
                      objective_trace=trace)
    if p.T == 0:
        state.stop_reason = "no positive bags"
        return state

    for k in range(cfg.cccp_max_iters):
        D = linearization_matrix(alpha, p, cfg.tie_tol)
        new_alpha = solve_subproblem(p, cfg, alpha, D)
        new_value = penalized_objective(new_alpha, p, cfg)
        trace.append(new_value)
        alpha = new_alpha
        state.iterations = k + 1
        new_sets = max_sets(alpha, p, cfg.tie_tol)
        decrease = value - new_value
        if decrease < cfg.cccp_tol * max(abs(value), np.finfo(float).tiny):
            state.stop_reason = "relative decrease below tolerance"
        elif new_sets == sets:
            state.stop_reason = "max sets unchanged"
        value, sets = new_value, new_sets
        if state.stop_reason:
            break
    else:
        state.stop_reason = "iteration limit"

    state.alpha = alpha
    state.xi = optimal_slacks(alpha, p)
    state.max_sets = sets
    return state


def train(data: IndexedDataset, kernel: KernelConfig, graph: GraphSettings | None = None,
          cfg: SolverConfig | None = None) -> GraphSwslModel:
    """Fit graphSWSL on an assembled training set."""
    if data.N == 0:
        raise DataError("empty training set")
    graph = graph or GraphSettings()
    cfg = cfg or SolverConfig()
    p = build_problem(data, kernel, graph)
    lam3 = resolve_lambda3(p, cfg)
    state = cccp(p, cfg)
    log.info("graphSWSL: %d CCCP iterations (%s), objective %.6g -> %.6g",
             state.iterations, state.stop_reason, state.objective_trace[0],
             state.objective_trace[-1])
    meta = {
        "objective_trace": [float(v) for v in state.objective_trace],
        "config": {"solver": cfg.to_dict(), "graph": asdict(graph), "lambda3": lam3},
        "n": p.n, "T": p.T, "N": p.N,
        "iterations": state.iterations, "stop_reason": state.stop_reason,
    }
    return GraphSwslModel(alpha=state.alpha, train_features=data.features, kernel=kernel,
                          method="graphswsl", meta=meta)
