"""Audio-word features: a diagonal-covariance GMM over frame vectors and
soft-count histograms of component posteriors per segment."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from swsl.errors import DataError

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class FrameSequence:
    segment_id: str
    frames: np.ndarray

    def __post_init__(self):
        F = np.array(self.frames, dtype=np.float64)
        if F.ndim == 1:
            F = F[None, :]
        if F.ndim != 2 or F.shape[0] == 0 or F.shape[1] == 0:
            raise DataError(f"segment {self.segment_id!r}: need at least one non-empty frame")
        if not np.all(np.isfinite(F)):
            raise DataError(f"segment {self.segment_id!r}: non-finite frame value")
        F.setflags(write=False)
        object.__setattr__(self, "frames", F)


@dataclass(frozen=True)
class EMSettings:
    tol: float = 1e-6
    max_iters: int = 200
    floor_scale: float = 1e-6


@dataclass(frozen=True, eq=False)
class DiagGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood_trace: list = field(default_factory=list)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        mu = np.array(self.means, dtype=np.float64)
        var = np.array(self.variances, dtype=np.float64)
        if w.ndim != 1 or mu.shape != (w.size, mu.shape[-1]) or var.shape != mu.shape:
            raise DataError("GMM weights, means and variances have inconsistent shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DataError("GMM weights must be non-negative and sum to 1")
        if np.any(var <= 0) or not np.all(np.isfinite(var)):
            raise DataError("GMM variances must be positive")
        for a in (w, mu, var):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_likelihood_trace": [float(v) for v in self.log_likelihood_trace],
        }

    @classmethod
    def from_dict(cls, doc) -> "DiagGmm":
        try:
            return cls(doc["weights"], doc["means"], doc["variances"],
                       list(doc.get("log_likelihood_trace", [])))
        except KeyError as exc:
            raise DataError(f"GMM document lacks field {exc}") from None


def _log_joint(F, weights, means, variances):
    """``log w_c + log N(f_t; mu_c, diag(var_c))`` as an (M, C) array."""
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    # one component at a time: exact differences, no (M, C, d) temporary
    maha = np.empty((F.shape[0], weights.size))
    for c in range(weights.size):
        diff = F - means[c]
        maha[:, c] = np.sum(diff * diff / variances[c], axis=1)
    log_det = np.sum(np.log(variances), axis=1)
    return log_w - 0.5 * (F.shape[1] * LOG_2PI + log_det + maha)


def _m_step(F, resp, floor):
    Nk = resp.sum(axis=0)
    # components that lost all mass keep a vanishing weight instead of dividing by zero
    Nk_safe = np.maximum(Nk, 10 * np.finfo(float).tiny)
    weights = Nk / Nk.sum()
    means = (resp.T @ F) / Nk_safe[:, None]
    variances = np.empty_like(means)
    for c in range(means.shape[0]):
        diff = F - means[c]
        variances[c] = resp[:, c] @ (diff * diff) / Nk_safe[c]
    return weights, means, np.maximum(variances, floor)


def _kmeans_pp_seeds(F, C, rng):
    M = F.shape[0]
    idx = [int(rng.integers(M))]
    d2 = np.sum((F - F[idx[0]]) ** 2, axis=1)
    for _ in range(1, C):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(M, p=d2 / total))
        else:
            nxt = int(rng.integers(M))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((F - F[nxt]) ** 2, axis=1))
    return F[idx].copy()


def train_gmm(frames: Sequence[FrameSequence] | np.ndarray, n_components: int, seed: int = 0,
              em: EMSettings | None = None) -> DiagGmm:
    """Fit a diagonal-covariance GMM by EM.

    Initialization picks k-means++ seeds and runs one hard-assignment M-step.
    Variances are floored at ``em.floor_scale`` times the global
    per-dimension variance after every M-step.  The fitted model records the
    mean log-likelihood per frame after each EM iteration.
    """
    em = em or EMSettings()
    if isinstance(frames, np.ndarray):
        F = np.asarray(frames, dtype=np.float64)
    else:
        if not frames:
            raise DataError("no frames given")
        dims = {seq.frames.shape[1] for seq in frames}
        if len(dims) != 1:
            raise DataError(f"frame sequences have different dimensions: {sorted(dims)}")
        F = np.vstack([seq.frames for seq in frames])
    if n_components < 1:
        raise DataError(f"number of components must be at least 1, got {n_components}")
    M = F.shape[0]
    if n_components > M:
        raise DataError(f"{n_components} components need at least as many frames, got {M}")

    global_var = F.var(axis=0)
    floor = em.floor_scale * global_var
    if np.any(floor <= 0):
        # constant dimensions have no scale to borrow; use an absolute floor
        floor = np.where(floor > 0, floor, em.floor_scale)

    rng = np.random.default_rng(seed)
    seeds = _kmeans_pp_seeds(F, n_components, rng)
    d2 = np.sum((F[:, None, :] - seeds[None, :, :]) ** 2, axis=2)
    hard = np.zeros((M, n_components))
    hard[np.arange(M), np.argmin(d2, axis=1)] = 1.0
    weights, means, variances = _m_step(F, hard, floor)
    empty = hard.sum(axis=0) == 0
    if np.any(empty):
        means[empty] = seeds[empty]
        variances[empty] = np.maximum(global_var, floor)
        weights = (hard.sum(axis=0) + empty) / (M + empty.sum())

    if np.unique(F, axis=0).shape[0] == 1 and n_components > 1:
        warnings.warn("all frames are identical; GMM components collapse onto floored variances",
                      RuntimeWarning, stacklevel=2)

    trace = []
    prev = None
    for it in range(em.max_iters):
        log_joint = _log_joint(F, weights, means, variances)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(np.mean(log_norm))
        trace.append(ll)
        if prev is not None and abs(ll - prev) <= em.tol * abs(prev):
            break
        prev = ll
        resp = np.exp(log_joint - log_norm[:, None])
        weights, means, variances = _m_step(F, resp, floor)
    else:
        ll = float(np.mean(logsumexp(_log_joint(F, weights, means, variances), axis=1)))
        trace.append(ll)
        log.info("GMM EM reached %d iterations without meeting tol=%g", em.max_iters, em.tol)
    return DiagGmm(weights / weights.sum(), means, variances, trace)


def _posteriors(gmm: DiagGmm, F: np.ndarray) -> np.ndarray:
    if F.shape[1] != gmm.dim:
        raise DataError(f"frame dimension {F.shape[1]} does not match GMM ({gmm.dim})")
    lj = _log_joint(F, gmm.weights, gmm.means, gmm.variances)
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def posterior(gmm: DiagGmm, frame) -> np.ndarray:
    """Component posteriors ``Pr(c | f)`` for one frame."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 1:
        raise DataError("posterior takes a single frame vector")
    return _posteriors(gmm, f[None, :])[0]


def soft_count_histogram(gmm: DiagGmm, seq: FrameSequence) -> np.ndarray:
    """Mean posterior over the frames of a segment, normalized to sum to 1."""
    frames = np.asarray(seq.frames if isinstance(seq, FrameSequence) else seq, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DataError("cannot build a histogram from an empty frame sequence")
    H = _posteriors(gmm, frames).mean(axis=0)
    return H / H.sum()


def read_frames_csv(path) -> FrameSequence:
    """One frame per row, comma separated, no header.  The file stem is the segment id."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except FileNotFoundError:
        raise DataError(f"frame file not found: {path}") from None
    try:
        F = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if F.ndim != 2:
        raise DataError(f"{path}: rows have different lengths")
    return FrameSequence(path.stem, F)


def save_gmm(gmm: DiagGmm, path) -> None:
    Path(path).write_text(json.dumps(gmm.to_dict()) + "\n", encoding="utf-8")


def load_gmm(path) -> DiagGmm:
    path = Path(path)
    try:
        return DiagGmm.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise DataError(f"GMM file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
