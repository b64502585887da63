"""Average precision, bag/instance-level reports and grid cross-validation."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from swsl.data import FoldSpec, SwslDataset, subset
from swsl.errors import DataError, SolverError
from swsl.models import KernelModel
from swsl.pipeline import METHODS, TrainSettings, fit_model, score_dataset

log = logging.getLogger(__name__)

DEFAULT_CLASS = "event"


def default_grid_values() -> list[float]:
    """Seven log-spaced values, 1e-3 to 1e3 inclusive."""
    return [float(v) for v in np.logspace(-3, 3, 7)]


@dataclass(frozen=True)
class RankedResult:
    scores: tuple
    truth: tuple

    def __post_init__(self):
        if len(self.scores) != len(self.truth):
            raise DataError("scores and truth differ in length")


def average_precision(scores, truth=None) -> float:
    """Non-interpolated average precision.

    Items are ranked by decreasing score; equal scores keep their input
    order.  AP is the mean, over the positives, of the precision at each
    positive's rank.  Accepts a :class:`RankedResult` or two sequences.
    """
    if isinstance(scores, RankedResult):
        scores, truth = scores.scores, scores.truth
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truth)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and truth must be equal-length vectors")
    if not np.all(np.isin(y, (-1, 1))):
        raise DataError("truth labels must be -1 or +1")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise DataError("average precision is undefined without positives")
    order = np.argsort(-s, kind="stable")
    hits = (y[order] == 1)
    ranks = np.flatnonzero(hits) + 1
    # fsum is correctly rounded, so the result does not depend on summation order
    return math.fsum(np.arange(1, n_pos + 1) / ranks) / n_pos


@dataclass
class EvalReport:
    per_class_ap: dict
    map_value: float
    level: str
    counts: dict
    rankings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "per_class_ap": self.per_class_ap,
            "map": self.map_value,
            "counts": self.counts,
            "rankings": self.rankings,
        }


def _items(dataset: SwslDataset, truth: Mapping[str, int], level: str, inst_scores, bag_scores):
    if level == "instance":
        ids = [i.id for i in dataset.instances if i.id in truth]
        if not ids:
            raise DataError("no instance of the dataset has a ground-truth label")
        return ids, [inst_scores[i] for i in ids], [truth[i] for i in ids]
    if level == "bag":
        if not dataset.bags:
            raise DataError("bag-level evaluation needs bags")
        ids, scores, labels = [], [], []
        for bag in dataset.bags:
            members = [truth.get(i) for i in bag.instance_ids]
            if all(v is not None for v in members):
                label = max(members)
            elif bag.id in truth:
                label = truth[bag.id]
            else:
                label = bag.label
            ids.append(bag.id)
            scores.append(bag_scores[bag.id])
            labels.append(label)
        return ids, scores, labels
    raise DataError(f"unknown evaluation level {level!r}")


def evaluate(models, dataset: SwslDataset, truth, level: str = "bag") -> EvalReport:
    """Per-class AP and MAP at bag or instance level.

    ``models`` is one model or a mapping class name -> model; ``truth`` is
    one ``{instance_id: label}`` map or a mapping class name -> such a map.
    Bag truth is the max over member truths, falling back to the bag label.
    """
    if isinstance(models, KernelModel):
        models = {DEFAULT_CLASS: models}
        truth = {DEFAULT_CLASS: truth}
    if set(models) != set(truth):
        raise DataError("every class needs both a model and ground truth")
    per_class, counts, rankings = {}, {}, {}
    for name in sorted(models):
        inst_scores, bag_scores = score_dataset(models[name], dataset)
        ids, scores, labels = _items(dataset, truth[name], level, inst_scores, bag_scores)
        per_class[name] = average_precision(scores, labels)
        counts[name] = {"positives": int(sum(v == 1 for v in labels)),
                        "negatives": int(sum(v == -1 for v in labels))}
        order = np.argsort(-np.asarray(scores), kind="stable")
        rankings[name] = [[ids[k], float(scores[k]), int(labels[k])] for k in order]
    map_value = float(np.mean(list(per_class.values())))
    return EvalReport(per_class, map_value, level, counts, rankings)


@dataclass(frozen=True)
class GridSpec:
    lambda1_values: tuple = field(default_factory=lambda: tuple(default_grid_values()))
    lambda2_values: tuple = field(default_factory=lambda: tuple(default_grid_values()))
    slack_c_values: tuple = field(default_factory=lambda: tuple(default_grid_values()))
    selection_metric: str = "AP"

    def __post_init__(self):
        for name in ("lambda1_values", "lambda2_values", "slack_c_values"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values or any(not v > 0 for v in values):
                raise DataError(f"{name} must be a non-empty list of positive numbers")
            object.__setattr__(self, name, values)
        if self.selection_metric not in ("AP", "MAP"):
            raise DataError("selection_metric must be AP or MAP")

    def cells(self, method: str) -> list[dict]:
        if method == "graphswsl":
            return [{"lambda1": a, "lambda2": b}
                    for a in self.lambda1_values for b in self.lambda2_values]
        return [{"slack_C": c} for c in self.slack_c_values]


@dataclass
class CVResult:
    method: str
    best: dict
    table: list
    num_folds: int

    def to_dict(self) -> dict:
        return {"method": self.method, "best": self.best, "num_folds": self.num_folds,
                "table": self.table}


def heldout_score(model: KernelModel, heldout: SwslDataset) -> float | None:
    """AP over held-out items: supervised instances by their own score, bags
    by their max score.  ``None`` when the fold holds no positive."""
    inst_scores, bag_scores = score_dataset(model, heldout)
    scores = [inst_scores[i.id] for i in heldout.supervised]
    labels = [i.label for i in heldout.supervised]
    scores += [bag_scores[b.id] for b in heldout.bags]
    labels += [b.label for b in heldout.bags]
    if 1 not in labels:
        return None
    return average_precision(scores, labels)


def _sort_key(cell):
    return tuple(cell[k] for k in sorted(cell))


def cross_validate(dataset: SwslDataset, folds: FoldSpec, grid: GridSpec | None = None,
                   method: str = "graphswsl", settings: TrainSettings | None = None) -> CVResult:
    """Pick the grid cell with the best mean held-out AP.

    Each fold is held out in turn; the remaining folds train the model.
    Ties go to the smaller ``lambda1``, then the smaller ``lambda2`` (or the
    smaller ``slack_C`` for the SVM methods).  Cells whose training fails are
    reported as failed and skipped.
    """
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}")
    if folds.num_folds < 2:
        raise DataError("cross-validation needs at least 2 folds")
    grid = grid or GridSpec()
    settings = settings or TrainSettings()
    splits = []
    for f in range(folds.num_folds):
        held = set(folds.members(f))
        rest = [k for k, v in folds.fold_assignments.items() if v != f]
        splits.append((subset(dataset, rest), subset(dataset, held)))

    table = []
    for cell in grid.cells(method):
        cell_settings = settings.with_values(**cell)
        fold_scores = []
        status = "ok"
        try:
            for train_part, held_part in splits:
                model = fit_model(train_part, method, cell_settings)
                fold_scores.append(heldout_score(model, held_part))
        except (SolverError, DataError, np.linalg.LinAlgError) as exc:
            status = f"failed: {exc}"
            warnings.warn(f"CV cell {cell} failed: {exc}", RuntimeWarning, stacklevel=2)
        usable = [s for s in fold_scores if s is not None]
        if status == "ok" and not usable:
            status = "failed: no held-out fold contains a positive"
        mean = float(np.mean(usable)) if status == "ok" else None
        table.append({"params": cell, "fold_scores": fold_scores, "mean": mean,
                      "status": status})

    ok = [row for row in table if row["status"] == "ok"]
    if not ok:
        raise SolverError("every cross-validation cell failed", {"cells": len(table)})
    ok.sort(key=lambda row: (-row["mean"], _sort_key(row["params"])))
    best = ok[0]["params"]
    log.info("cross-validation picked %s (mean AP %.4f)", best, ok[0]["mean"])
    return CVResult(method=method, best=dict(best), table=table, num_folds=folds.num_folds)
