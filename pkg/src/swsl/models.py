"""Kernel-expansion models ``f(x) = sum_i alpha_i k(x, x_i) + bias`` and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from swsl.errors import DataError
from swsl.kernels import KernelConfig, kernel_matrix


@dataclass(frozen=True, eq=False)
class KernelModel:
    alpha: np.ndarray
    train_features: np.ndarray
    kernel: KernelConfig
    bias: float = 0.0
    method: str = "graphswsl"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64)
        X = np.array(self.train_features, dtype=np.float64)
        if alpha.ndim != 1 or X.ndim != 2 or X.shape[0] != alpha.size:
            raise DataError(
                f"model has {alpha.size} coefficients for {X.shape[0] if X.ndim == 2 else '?'} "
                "training vectors")
        if not np.all(np.isfinite(alpha)):
            raise DataError("model coefficients must be finite")
        alpha.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "train_features", X)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.train_features.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise DataError(f"feature dimension {X.shape[1]} does not match model ({self.dim})")
        if X.shape[0] == 0:
            return np.zeros(0)
        return kernel_matrix(X, self.kernel, self.train_features) @ self.alpha + self.bias

    def to_dict(self) -> dict:
        doc = {
            "method": self.method,
            "alpha": self.alpha.tolist(),
            "train_features": self.train_features.tolist(),
            "kernel": self.kernel.to_dict(),
            "meta": self.meta,
        }
        if self.method != "graphswsl":
            doc["bias"] = self.bias
        return doc


class GraphSwslModel(KernelModel):
    """Coefficients over the training instances; no bias term."""


@dataclass(frozen=True, eq=False)
class SvmModel(KernelModel):
    """Soft-margin kernel SVM; ``alpha`` holds label-signed dual coefficients."""

    support_indices: tuple = ()
    slack_C: float = 1.0

    def to_dict(self) -> dict:
        doc = super().to_dict()
        doc["meta"] = dict(self.meta, support_indices=list(self.support_indices),
                           slack_C=self.slack_C)
        return doc


def predict_instance(model: KernelModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("predict_instance takes a single feature vector")
    return float(model.decision_function(x)[0])


def predict_instances(model: KernelModel, X) -> np.ndarray:
    return model.decision_function(X)


def predict_bag(model: KernelModel, bag_features) -> float:
    """Bag score: the largest instance score in the bag."""
    X = np.asarray(bag_features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("predict_bag needs a non-empty 2-D array of instances")
    return float(np.max(model.decision_function(X)))


def model_from_dict(doc) -> KernelModel:
    try:
        method = doc.get("method", "graphswsl")
        kernel = KernelConfig.from_dict(doc["kernel"])
        common = dict(alpha=doc["alpha"], train_features=doc["train_features"],
                      kernel=kernel, method=method)
        meta = dict(doc.get("meta", {}))
        if method == "graphswsl":
            return GraphSwslModel(meta=meta, **common)
        support = tuple(meta.pop("support_indices", ()))
        slack_C = float(meta.pop("slack_C", 1.0))
        return SvmModel(bias=doc.get("bias", 0.0), meta=meta, support_indices=support,
                        slack_C=slack_C, **common)
    except (KeyError, TypeError, AttributeError) as exc:
        raise DataError(f"malformed model document: {exc!r}") from None


def save_model(model: KernelModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")


def load_model(path) -> KernelModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc)
