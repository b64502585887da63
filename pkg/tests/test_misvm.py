import numpy as np
import pytest
from conftest import random_histograms

from swsl.errors import DataError
from swsl.kernels import KernelConfig, kernel_matrix
from swsl.misvm import (
    MilProblem,
    bag_constraint_holds,
    dual_objective,
    smo,
    train_kernel_svm,
    train_misvm,
    train_naive_swsl,
)
from swsl.synth import SynthConfig, generate


def two_blobs(rng, n=20, gap=3.0):
    X = np.vstack([rng.normal(-gap / 2, 1.0, size=(n, 2)), rng.normal(gap / 2, 1.0, size=(n, 2))])
    y = np.r_[-np.ones(n), np.ones(n)]
    return X, y


def kkt_violation(a, y, K, C, bias):
    f = K @ (a * y) + bias
    m = y * f
    worst = 0.0
    for ai, mi in zip(a, m):
        if ai <= 1e-12:
            worst = max(worst, 1 - mi)
        elif ai >= C - 1e-12:
            worst = max(worst, mi - 1)
        else:
            worst = max(worst, abs(mi - 1))
    return worst


def test_smo_satisfies_kkt(rng):
    X, y = two_blobs(rng)
    K = kernel_matrix(X, KernelConfig("rbf", sigma=1.0))
    res = smo(K, y, C=2.0)
    assert res.converged
    assert abs(res.coef @ y) <= 1e-10
    assert np.all((res.coef >= 0) & (res.coef <= 2.0))
    assert kkt_violation(res.coef, y, K, 2.0, res.bias) <= 1e-4


def test_smo_dual_beats_random_feasible_points(rng):
    X, y = two_blobs(rng, n=10)
    K = kernel_matrix(X, KernelConfig("rbf", sigma=1.5))
    res = smo(K, y, C=1.0)
    best = dual_objective(res.coef, K, y)
    for _ in range(200):
        a = rng.uniform(0, 1, size=y.size)
        # project onto y'a = 0 by rescaling the larger class
        pos, neg = a[y > 0].sum(), a[y < 0].sum()
        if pos > neg:
            a[y > 0] *= neg / pos
        else:
            a[y < 0] *= pos / neg
        assert dual_objective(a, K, y) <= best + 1e-6


def test_smo_matches_libsvm(rng):
    svm = pytest.importorskip("sklearn.svm")
    X, y = two_blobs(rng, gap=1.5)
    K = kernel_matrix(X, KernelConfig("rbf", sigma=1.0))
    ours = smo(K, y, C=0.7, tol=1e-8)
    ref = svm.SVC(C=0.7, kernel="precomputed", tol=1e-10).fit(K, y)
    np.testing.assert_allclose(K @ (ours.coef * y) + ours.bias, ref.decision_function(K),
                               atol=1e-5)


def test_separable_set_classified(rng):
    X, y = two_blobs(rng, gap=8.0)
    model = train_kernel_svm(X, y, 10.0, KernelConfig("rbf", sigma=2.0))
    np.testing.assert_array_equal(np.sign(model.decision_function(X)), y)


def test_svm_needs_both_classes():
    with pytest.raises(DataError):
        train_kernel_svm(np.eye(3), [1, 1, 1], 1.0, KernelConfig("rbf"))


def mil_problem(seed, noise=0.0):
    ds, truth = generate(SynthConfig(seed=seed, num_supervised_pos=0, num_supervised_neg=0,
                                     num_pos_bags=8, num_neg_bags=4, bag_size=5,
                                     bag_label_noise=noise))
    return MilProblem.from_dataset(ds), ds, truth


@pytest.mark.parametrize("seed", range(4))
def test_misvm_labels_respect_bags_every_round(seed):
    problem, ds, _ = mil_problem(seed, noise=0.25)
    seen = []

    def check(outer, labels):
        seen.append(outer)
        assert bag_constraint_holds(labels, problem)

    model = train_misvm(problem, 1.0, KernelConfig(gamma=5.0), callback=check)
    assert seen == list(range(1, model.meta["outer_iterations"] + 1))
    assert bag_constraint_holds(np.array(model.meta["instance_labels"]), problem)


def test_misvm_stops_at_fixed_point():
    problem, _, _ = mil_problem(3)
    model = train_misvm(problem, 1.0, KernelConfig(gamma=5.0), max_outer=50)
    if model.meta["converged"]:
        assert model.meta["label_changes"][-1] == 0


def test_misvm_respects_iteration_cap():
    problem, _, _ = mil_problem(4)
    model = train_misvm(problem, 1.0, KernelConfig(gamma=5.0), max_outer=1)
    assert model.meta["outer_iterations"] == 1


def test_bag_constraint_check():
    problem = MilProblem((np.zeros((2, 1)), np.zeros((1, 1))), (1, -1))
    assert bag_constraint_holds(np.array([-1, 1, -1]), problem)
    assert not bag_constraint_holds(np.array([-1, -1, -1]), problem)
    assert not bag_constraint_holds(np.array([1, 1, 1]), problem)


@pytest.mark.parametrize("seed", range(3))
def test_naive_without_bags_equals_svm(seed):
    rng = np.random.default_rng(seed)
    X = random_histograms(rng, 30, 5)
    y = np.where(X[:, 0] > np.median(X[:, 0]), 1, -1)
    kernel = KernelConfig(gamma=2.0)
    naive = train_naive_swsl(X, y, None, 1.0, kernel)
    plain = train_kernel_svm(X, y, 1.0, kernel)
    Z = random_histograms(rng, 100, 5)
    np.testing.assert_allclose(naive.decision_function(Z), plain.decision_function(Z), atol=1e-6)


def test_naive_appends_singletons(rng):
    problem, _, _ = mil_problem(0)
    X = random_histograms(rng, 4, problem.bags[0].shape[1])
    model = train_naive_swsl(X, [1, -1, 1, -1], problem, 1.0, KernelConfig(gamma=5.0))
    assert model.method == "naive_swsl"
    assert len(model.meta["instance_labels"]) == sum(b.shape[0] for b in problem.bags) + 4
    np.testing.assert_array_equal(model.meta["instance_labels"][-4:], [1, -1, 1, -1])


def test_mil_problem_validation():
    with pytest.raises(DataError):
        MilProblem((np.zeros((0, 2)),), (1,))
    with pytest.raises(DataError):
        MilProblem((np.zeros((1, 2)), np.zeros((1, 3))), (1, -1))
