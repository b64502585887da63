import numpy as np
import pytest

from swsl.data import Bag, IndexedDataset, Instance, SwslDataset


def random_histograms(rng, n, dim=6):
    X = rng.gamma(1.0, size=(n, dim)) + 1e-3
    return X / X.sum(axis=1, keepdims=True)


def random_indexed(rng, n=8, bag_sizes=(3, 4), dim=6, shift=0.0):
    """Labeled block of ``n`` rows followed by positive bags of the given sizes."""
    N = n + sum(bag_sizes)
    X = random_histograms(rng, N, dim)
    labels = np.zeros(N, dtype=np.int64)
    labels[:n] = np.where(np.arange(n) % 2 == 0, 1, -1)
    ranges, start = [], n
    for size in bag_sizes:
        ranges.append((start, start + size))
        start += size
    provenance = tuple((f"i{k}", None) for k in range(N))
    return IndexedDataset(X, labels, n, tuple(ranges), provenance)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def layout_dataset():
    """2 supervised, 1 negative bag of 3, positive bags of 2 and 3."""
    rng = np.random.default_rng(0)
    X = random_histograms(rng, 10, 4)
    insts = [Instance("a", X[0], 1), Instance("b", X[1], -1)]
    insts += [Instance(f"n{k}", X[2 + k], None) for k in range(3)]
    insts += [Instance(f"p{k}", X[5 + k], None) for k in range(5)]
    bags = [Bag("P1", 1, ("p0", "p1")), Bag("N1", -1, ("n0", "n1", "n2")),
            Bag("P2", 1, ("p2", "p3", "p4"))]
    return SwslDataset(insts, bags)


def synth_problem(seed, n_sup=10, n_pos_bags=3, n_neg_bags=1, bag_size=4, dim=8, k=5,
                  separation=2.0, noise_sd=1.0, witness_rate=0.3):
    """Assembled training set and problem matrices drawn from the synthetic family."""
    from swsl.graphswsl import GraphSettings, build_problem
    from swsl.kernels import KernelConfig, estimate_gamma
    from swsl.synth import SynthConfig, generate

    cfg = SynthConfig(seed=seed, dim=dim, num_supervised_pos=n_sup // 2,
                      num_supervised_neg=n_sup - n_sup // 2, num_pos_bags=n_pos_bags,
                      num_neg_bags=n_neg_bags, bag_size=bag_size, witness_rate=witness_rate,
                      signal_noise_sd=noise_sd, cluster_separation=separation)
    dataset, truth = generate(cfg)
    from swsl.data import assemble_training_set
    data = assemble_training_set(dataset)
    kernel = KernelConfig("exp_chi2", estimate_gamma(data.features))
    p = build_problem(data, kernel, GraphSettings(k=min(k, data.N - 1)))
    return data, kernel, p


def dual_reference(p, cfg, D, iters=200_000, tol=1e-13):
    """Subproblem minimizer via accelerated projected gradient on the dual.

    Primal: min_a a'Ha - 2b'a + lam3 |xi|^2  s.t.  xi >= 1 - D'K a.  With
    multipliers mu >= 0 the dual is a concave quadratic in mu whose only
    constraint is the non-negative orthant, so projection is a clip.
    """
    K, N = p.K, p.N
    J = np.diag(p.labeled_mask)
    c = cfg.lambda2 / N ** 2
    lam3 = p.n / p.T if cfg.lambda3 == "auto" else cfg.lambda3
    H = K @ J @ K + cfg.lambda1 * K + c * K @ p.L @ K
    H = 0.5 * (H + H.T)
    b = K @ J @ p.Y
    A = D.T @ K
    Hinv_b = np.linalg.solve(H, b)
    Hinv_At = np.linalg.solve(H, A.T)

    def primal(mu):
        return Hinv_b + 0.5 * Hinv_At @ mu

    # dual gradient is the constraint residual 1 - A a(mu) - mu / (2 lam3)
    Q = 0.5 * A @ Hinv_At + np.eye(A.shape[0]) / (2 * lam3)
    Q = 0.5 * (Q + Q.T)
    r0 = 1.0 - A @ Hinv_b
    step = 1.0 / np.linalg.eigvalsh(Q).max()
    mu = np.zeros(A.shape[0])
    y, t = mu.copy(), 1.0
    for _ in range(iters):
        new = np.maximum(0.0, y + step * (r0 - Q @ y))
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = new + ((t - 1) / t_new) * (new - mu)
        if np.max(np.abs(new - mu)) <= tol * (1 + np.max(np.abs(new))):
            mu = new
            break
        mu, t = new, t_new
    return primal(mu)
