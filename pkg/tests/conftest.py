import numpy as np
import pytest

from gseat import (
    Graph,
    SbmConfig,
    inductive_split,
    init_params,
    loss_and_grads,
    masked_cross_entropy,
    model_forward,
    normalize_adjacency,
    sbm_generate,
)


def random_symmetric(n, rng, scale=1.0):
    m = rng.standard_normal((n, n)) * scale
    return 0.5 * (m + m.T)


def random_weighted_graph(n, rng, density=0.3):
    """Binary symmetric adjacency with no self-loops."""
    m = (rng.random((n, n)) < density).astype(float)
    m = np.triu(m, 1)
    return m + m.T


def cycle_adjacency(n):
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = 1.0
        a[(i + 1) % n, i] = 1.0
    return a


@pytest.fixture
def small_sbm():
    g = sbm_generate(SbmConfig(block_sizes=(30, 30), p_in=0.25, p_out=0.03,
                               feature_dim=6, feature_shift=0.9, seed=11))
    return inductive_split(g, per_class=8, test_frac=0.1, seed=11)


def finite_difference_grad_check(model, seed, n=12, d=3, h=5, c=3, hops=3,
                                 step=1e-5, rel_tol=1e-4):
    """Central-difference oracle for every parameter and adjacency coordinate.

    Adjacency entries are bumped symmetrically, so the analytic counterpart of
    the difference quotient is twice the symmetrized gradient entry.  Returns
    (checked, passed) counts over coordinates with |fd| > 1e-6.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.2, 0.8, (n, n))
    a = np.triu(a, 1)
    a = a + a.T
    x = rng.standard_normal((n, d))
    labels = rng.integers(0, c, n)
    mask = np.zeros(n, bool)
    mask[rng.permutation(n)[: n // 2]] = True
    params = init_params(model, d, c, rng, hidden=h, hops=hops)

    def loss_of(a_mod):
        return masked_cross_entropy(
            model_forward(params, normalize_adjacency(a_mod), x), labels, mask)

    bundle = loss_and_grads(params, a, x, labels, mask)
    checked = passed = 0
    for u in range(n):
        for v in range(u + 1, n):
            ap, am = a.copy(), a.copy()
            ap[u, v] = ap[v, u] = a[u, v] + step
            am[u, v] = am[v, u] = a[u, v] - step
            fd = (loss_of(ap) - loss_of(am)) / (2 * step)
            analytic = 2.0 * bundle.grad_adjacency[u, v]
            if abs(fd) > 1e-6:
                checked += 1
                passed += abs(fd - analytic) / abs(fd) < rel_tol

    grad_map = dict(bundle.grad_params.arrays())
    for name, arr in params.arrays():
        arr = np.atleast_1d(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_of(a)
            arr[idx] = orig - step
            down = loss_of(a)
            arr[idx] = orig
            fd = (up - down) / (2 * step)
            analytic = np.atleast_1d(grad_map[name])[idx]
            if abs(fd) > 1e-6:
                checked += 1
                passed += abs(fd - analytic) / abs(fd) < rel_tol
    return checked, passed


@pytest.fixture
def tiny_graph():
    """Deterministic 10-node weighted graph with masks, for gradient work."""
    rng = np.random.default_rng(42)
    n = 10
    a = rng.uniform(0.2, 0.8, (n, n))
    a = np.triu(a, 1)
    a = a + a.T
    features = rng.standard_normal((n, 4))
    labels = rng.integers(0, 3, n)
    train = np.zeros(n, bool)
    val = np.zeros(n, bool)
    train[:4] = True
    val[4:7] = True
    return Graph(adjacency=a, features=features, labels=labels,
                 train_mask=train, val_mask=val)
