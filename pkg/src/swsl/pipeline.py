"""Training settings and one entry point that fits any of the four methods."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from swsl.data import SwslDataset, assemble_training_set
from swsl.errors import DataError
from swsl.graphswsl import GraphSettings, SolverConfig
from swsl.graphswsl import train as train_graphswsl
from swsl.kernels import KernelConfig, estimate_gamma
from swsl.misvm import misvm_from_dataset, naive_swsl_from_dataset, svm_from_dataset, training_features
from swsl.models import KernelModel

METHODS = ("graphswsl", "misvm", "naive_swsl", "svm")

# documented keys for --config files; nested JSON objects, one per section
CONFIG_KEYS = {
    "kernel": {"kind": "exp_chi2 | rbf", "gamma": "positive number or \"auto\"",
               "sigma": "rbf bandwidth"},
    "graph": {"k": "neighbours per node", "sigma": "edge-weight bandwidth",
              "metric": "chi2 | euclidean"},
    "solver": {"lambda1": "RKHS weight", "lambda2": "graph smoothness weight",
               "lambda3": "bag loss weight or \"auto\" (n/T)", "cccp_tol": "", "cccp_max_iters": "",
               "subproblem_tol": "", "subproblem_max_iters": "", "tie_tol": ""},
    "svm": {"C": "slack penalty", "max_outer": "miSVM relabeling rounds"},
}


@dataclass(frozen=True)
class TrainSettings:
    kernel_kind: str = "exp_chi2"
    gamma: float | str = "auto"
    kernel_sigma: float = 1.0
    graph: GraphSettings = field(default_factory=GraphSettings)
    solver: SolverConfig = field(default_factory=SolverConfig)
    slack_C: float = 1.0
    max_outer: int = 20

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainSettings":
        if not isinstance(doc, dict):
            raise DataError("config: top level must be an object")
        unknown = set(doc) - set(CONFIG_KEYS)
        if unknown:
            raise DataError(f"config: unknown section(s) {sorted(unknown)}")
        for section, body in doc.items():
            if not isinstance(body, dict):
                raise DataError(f"config: section '{section}' must be an object")
            bad = set(body) - set(CONFIG_KEYS[section])
            if bad:
                raise DataError(f"config: unknown key(s) {sorted(f'{section}.{k}' for k in bad)}")
        kernel = doc.get("kernel", {})
        svm = doc.get("svm", {})
        try:
            settings = cls(
                kernel_kind=kernel.get("kind", "exp_chi2"),
                gamma=kernel.get("gamma", "auto"),
                kernel_sigma=float(kernel.get("sigma", 1.0)),
                graph=GraphSettings(**doc.get("graph", {})),
                solver=SolverConfig(**doc.get("solver", {})),
                slack_C=float(svm.get("C", 1.0)),
                max_outer=int(svm.get("max_outer", 20)),
            )
        except TypeError as exc:
            raise DataError(f"config: {exc}") from None
        if settings.gamma != "auto":
            try:
                KernelConfig(settings.kernel_kind, float(settings.gamma), settings.kernel_sigma)
            except (TypeError, ValueError) as exc:
                raise DataError(f"config: kernel.gamma: {exc}") from None
        return settings

    def to_dict(self) -> dict:
        return {
            "kernel": {"kind": self.kernel_kind, "gamma": self.gamma, "sigma": self.kernel_sigma},
            "graph": asdict(self.graph),
            "solver": self.solver.to_dict(),
            "svm": {"C": self.slack_C, "max_outer": self.max_outer},
        }

    def with_values(self, **values) -> "TrainSettings":
        """Copy with solver fields (``lambda1``...) or ``slack_C`` overridden."""
        solver_names = {f.name for f in fields(SolverConfig)}
        solver_updates = {k: v for k, v in values.items() if k in solver_names}
        rest = {k: v for k, v in values.items() if k not in solver_names}
        out = replace(self, **rest)
        if solver_updates:
            out = replace(out, solver=replace(out.solver, **solver_updates))
        return out


def resolve_kernel(settings: TrainSettings, features) -> KernelConfig:
    if settings.kernel_kind == "rbf" or settings.gamma != "auto":
        gamma = 1.0 if settings.gamma == "auto" else float(settings.gamma)
        return KernelConfig(settings.kernel_kind, gamma, settings.kernel_sigma)
    return KernelConfig("exp_chi2", estimate_gamma(features), settings.kernel_sigma)


def fit_model(dataset: SwslDataset, method: str, settings: TrainSettings | None = None) -> KernelModel:
    """Train ``method`` on ``dataset``.

    ``graphswsl`` uses supervised instances and all bags, ``naive_swsl`` the
    same data as singleton plus real bags, ``misvm`` only the bags, and
    ``svm`` only the supervised instances.  A ``gamma`` of ``"auto"`` is
    estimated from the instances the method trains on.
    """
    settings = settings or TrainSettings()
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    X = training_features(dataset, method)
    if X.shape[0] < 2:
        raise DataError(f"method {method!r} has fewer than 2 training instances")
    kernel = resolve_kernel(settings, X)
    if method == "graphswsl":
        return train_graphswsl(assemble_training_set(dataset), kernel, settings.graph,
                               settings.solver)
    if method == "misvm":
        return misvm_from_dataset(dataset, settings.slack_C, kernel, settings.max_outer)
    if method == "naive_swsl":
        return naive_swsl_from_dataset(dataset, settings.slack_C, kernel, settings.max_outer)
    return svm_from_dataset(dataset, settings.slack_C, kernel)


def score_dataset(model: KernelModel, dataset: SwslDataset) -> tuple[dict, dict]:
    """Instance scores for every instance and bag scores (max over members)."""
    ids = [i.id for i in dataset.instances]
    if not ids:
        return {}, {}
    scores = model.decision_function(dataset.features(ids))
    inst = {i: float(s) for i, s in zip(ids, scores)}
    bags = {b.id: float(np.max([inst[i] for i in b.instance_ids])) for b in dataset.bags}
    return inst, bags
