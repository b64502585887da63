import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import swsl.evaluation as evaluation
from swsl.data import Bag, Instance, SwslDataset, make_folds
from swsl.errors import DataError, SolverError
from swsl.evaluation import (
    GridSpec,
    RankedResult,
    average_precision,
    cross_validate,
    default_grid_values,
    evaluate,
)
from swsl.kernels import KernelConfig
from swsl.models import KernelModel
from swsl.synth import SynthConfig, generate


def brute_force_ap(scores, truth):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    precisions = []
    for pos, i in enumerate(order, start=1):
        if truth[i] == 1:
            above = sum(1 for j in order[:pos] if truth[j] == 1)
            precisions.append(above / pos)
    return math.fsum(precisions) / len(precisions)


class ColumnModel(KernelModel):
    """Scores an instance by one of its feature values."""

    def __init__(self, column):
        super().__init__(alpha=[0.0], train_features=[[0.0, 0.0]], kernel=KernelConfig())
        object.__setattr__(self, "column", column)

    def decision_function(self, X):
        return np.atleast_2d(np.asarray(X, dtype=float))[:, self.column]


def test_hand_case():
    assert average_precision([0.9, 0.5, 0.1], [1, -1, 1]) == pytest.approx(5 / 6, abs=1e-12)


def test_ranked_result_input():
    assert average_precision(RankedResult((3.0, 2.0, 1.0), (1, -1, 1))) == pytest.approx(5 / 6)


def test_perfect_ranking():
    assert average_precision([4, 3, 2, 1], [1, 1, -1, -1]) == 1.0


def test_ties_keep_input_order():
    assert average_precision([1.0, 1.0], [-1, 1]) == pytest.approx(0.5)
    assert average_precision([1.0, 1.0], [1, -1]) == pytest.approx(1.0)


def test_no_positives():
    with pytest.raises(DataError):
        average_precision([0.1, 0.2], [-1, -1])


def test_matches_brute_force_on_eight_items(rng):
    for _ in range(50):
        scores = rng.normal(size=8).round(1)
        truth = rng.choice([-1, 1], size=8)
        truth[0] = 1
        assert average_precision(scores, truth) == brute_force_ap(list(scores), list(truth))


@pytest.mark.parametrize("P, Neg", list(itertools.product(range(1, 5), range(0, 5))))
def test_reversed_ranking_closed_form(P, Neg):
    scores = np.arange(P + Neg, dtype=float)  # negatives first, all scored higher
    truth = [-1] * Neg + [1] * P
    scores = -scores  # negatives get the top scores
    expected = sum(i / (Neg + i) for i in range(1, P + 1)) / P
    assert average_precision(scores, truth) == pytest.approx(expected, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.sampled_from([-1, 1])),
                min_size=1, max_size=20).filter(lambda r: any(t == 1 for _, t in r)))
def test_monotone_transform_invariance(ranking):
    # integer scores keep every transform strictly monotone in floating point
    scores = np.array([s for s, _ in ranking], dtype=float)
    truth = [t for _, t in ranking]
    base = average_precision(scores, truth)
    for transformed in (np.exp(scores / 10), 2.5 * scores - 1, scores ** 3):
        assert average_precision(transformed, truth) == base


def two_class_dataset():
    x = np.array([0.9, 0.8, 0.7, 0.6, 0.5, 0.4])
    insts = [Instance(f"i{k}", [v, 1 - v], None) for k, v in enumerate(x)]
    bags = [Bag("B0", 1, ("i0", "i1")), Bag("B1", 1, ("i2", "i3")), Bag("B2", -1, ("i4", "i5"))]
    return SwslDataset(insts, bags)


def test_two_class_hand_table():
    ds = two_class_dataset()
    truth = {"A": dict(zip([f"i{k}" for k in range(6)], [1, -1, 1, -1, -1, 1])),
             "B": dict(zip([f"i{k}" for k in range(6)], [1, 1, -1, -1, -1, -1]))}
    models = {"A": ColumnModel(0), "B": ColumnModel(1)}
    report = evaluate(models, ds, truth, "instance")
    assert report.per_class_ap["A"] == pytest.approx((1 + 2 / 3 + 3 / 6) / 3, abs=1e-12)
    assert report.per_class_ap["B"] == pytest.approx((1 / 5 + 2 / 6) / 2, abs=1e-12)
    assert report.map_value == pytest.approx(np.mean(list(report.per_class_ap.values())))
    assert report.counts["A"] == {"positives": 3, "negatives": 3}


def test_bag_level_uses_member_truth():
    ds = two_class_dataset()
    truth = {f"i{k}": v for k, v in enumerate([-1, 1, -1, -1, -1, -1])}
    report = evaluate(ColumnModel(0), ds, truth, "bag")
    # bag truths [+, -, -], bag scores [0.9, 0.7, 0.5]
    assert report.map_value == 1.0
    assert [r[2] for r in report.rankings["event"]] == [1, -1, -1]


def test_perfect_model_scores_one_at_both_levels():
    ds = two_class_dataset()
    truth = {f"i{k}": (1 if k < 2 else -1) for k in range(6)}
    for level in ("bag", "instance"):
        report = evaluate(ColumnModel(0), ds, truth, level)
        assert report.map_value == 1.0 == report.per_class_ap["event"]


def test_missing_truth():
    with pytest.raises(DataError):
        evaluate(ColumnModel(0), two_class_dataset(), {}, "instance")


def test_default_grid():
    values = default_grid_values()
    np.testing.assert_allclose(values, [1e-3, 1e-2, 1e-1, 1, 10, 100, 1000])
    assert len(GridSpec().cells("graphswsl")) == 49


@pytest.fixture(scope="module")
def separable():
    ds, _ = generate(SynthConfig(seed=2, num_supervised_pos=6, num_supervised_neg=6,
                                 num_pos_bags=6, num_neg_bags=3, bag_size=4,
                                 cluster_separation=8.0, signal_noise_sd=0.3))
    return ds, make_folds(ds, 3, seed=0)


def test_single_cell_grid(separable):
    ds, folds = separable
    grid = GridSpec([0.5], [2.0], [1.0])
    result = cross_validate(ds, folds, grid, "graphswsl")
    assert result.best == {"lambda1": 0.5, "lambda2": 2.0}
    assert len(result.table) == 1 and result.table[0]["status"] == "ok"


def test_dominated_cell_loses(separable, monkeypatch):
    ds, folds = separable
    real_fit = evaluation.fit_model

    def fit(data, method, settings):
        model = real_fit(data, method, settings)
        if settings.solver.lambda1 == 0.1:
            return replace(model, alpha=-model.alpha)
        return model

    monkeypatch.setattr(evaluation, "fit_model", fit)
    result = cross_validate(ds, folds, GridSpec([0.1, 1.0], [1.0], [1.0]), "graphswsl")
    assert result.best["lambda1"] == 1.0
    best_row = next(r for r in result.table if r["params"] == result.best)
    assert best_row["mean"] == 1.0


def test_ties_prefer_small_lambdas(separable, monkeypatch):
    ds, folds = separable
    monkeypatch.setattr(evaluation, "heldout_score", lambda model, held: 0.5)
    result = cross_validate(ds, folds, GridSpec([10.0, 0.1], [3.0, 0.3], [1.0]), "graphswsl")
    assert result.best == {"lambda1": 0.1, "lambda2": 0.3}


def test_svm_grid_uses_slack_c(separable, monkeypatch):
    ds, folds = separable
    monkeypatch.setattr(evaluation, "heldout_score", lambda model, held: 0.5)
    result = cross_validate(ds, folds, GridSpec([1.0], [1.0], [5.0, 0.5]), "naive_swsl")
    assert result.best == {"slack_C": 0.5}


def test_failed_cells_are_skipped(separable, monkeypatch):
    ds, folds = separable
    real_fit = evaluation.fit_model

    def fit(data, method, settings):
        if settings.solver.lambda1 == 0.1:
            raise SolverError("boom")
        return real_fit(data, method, settings)

    monkeypatch.setattr(evaluation, "fit_model", fit)
    with pytest.warns(RuntimeWarning, match="failed"):
        result = cross_validate(ds, folds, GridSpec([0.1, 1.0], [1.0], [1.0]), "graphswsl")
    assert result.best["lambda1"] == 1.0
    assert result.table[0]["status"].startswith("failed")


def test_all_cells_failed(separable, monkeypatch):
    ds, folds = separable

    def fit(data, method, settings):
        raise SolverError("boom")

    monkeypatch.setattr(evaluation, "fit_model", fit)
    with pytest.warns(RuntimeWarning), pytest.raises(SolverError):
        cross_validate(ds, folds, GridSpec([1.0], [1.0], [1.0]), "graphswsl")


def test_cv_is_deterministic(separable):
    ds, folds = separable
    grid = GridSpec([0.1, 1.0], [1.0], [1.0])
    assert cross_validate(ds, folds, grid).to_dict() == cross_validate(ds, folds, grid).to_dict()


@pytest.mark.parametrize("bad", [dict(lambda1_values=[]), dict(lambda2_values=[0.0]),
                                 dict(selection_metric="F1")])
def test_grid_validation(bad):
    with pytest.raises(DataError):
        GridSpec(**bad)
