import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gseat import (
    ConfigError,
    DataError,
    Graph,
    Perturbation,
    SbmConfig,
    apply_perturbation,
    dataset_hash,
    inductive_split,
    load_bundle,
    load_edge_list,
    sbm_generate,
    save_bundle,
    training_view,
)


def test_two_disjoint_triangles():
    g = sbm_generate(SbmConfig(block_sizes=(3, 3), p_in=1.0, p_out=0.0,
                               feature_dim=2, seed=0))
    a = g.dense()
    assert g.num_edges == 6  # two complete triangles
    assert a[:3, 3:].sum() == 0
    assert (a[:3, :3].sum() == 6) and (a[3:, 3:].sum() == 6)


def test_empty_edge_set():
    g = sbm_generate(SbmConfig(block_sizes=(4, 4), p_in=0.0, p_out=0.0,
                               feature_dim=2, seed=0))
    assert g.num_edges == 0


def test_sbm_edge_count_within_3_sigma():
    # binomial oracle: expected within- and cross-block pair counts
    blocks = (500, 480)
    p_in, p_out = 0.02, 0.002
    g = sbm_generate(SbmConfig(block_sizes=blocks, p_in=p_in, p_out=p_out,
                               feature_dim=4, seed=7))
    pairs_in = sum(b * (b - 1) // 2 for b in blocks)
    pairs_out = blocks[0] * blocks[1]
    mean = pairs_in * p_in + pairs_out * p_out
    var = pairs_in * p_in * (1 - p_in) + pairs_out * p_out * (1 - p_out)
    assert abs(g.num_edges - mean) <= 3 * np.sqrt(var)


def test_sbm_invalid_probability():
    with pytest.raises(ConfigError):
        sbm_generate(SbmConfig(block_sizes=(4,), p_in=1.2, p_out=0.0, feature_dim=2))


def test_sbm_deterministic():
    cfg = SbmConfig(block_sizes=(20, 20), p_in=0.2, p_out=0.05, feature_dim=3, seed=5)
    g1, g2 = sbm_generate(cfg), sbm_generate(cfg)
    assert dataset_hash(g1) == dataset_hash(g2)


def test_sbm_feature_means_shift():
    cfg = SbmConfig(block_sizes=(400, 400), p_in=0.01, p_out=0.01,
                    feature_dim=3, feature_shift=2.0, seed=3)
    g = sbm_generate(cfg)
    mean0 = g.features[g.labels == 0].mean(axis=0)
    assert mean0[0] == pytest.approx(2.0, abs=0.2)
    assert abs(mean0[1]) < 0.2


def test_load_edge_list_path_graph(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("0 1\n1 2\n")
    adj = load_edge_list(path, 3)
    assert adj.nnz == 4
    assert adj[0, 1] == 1 and adj[1, 2] == 1 and adj[0, 2] == 0


def test_load_edge_list_duplicates_collapse(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("0 1\n1 0\n")
    adj = load_edge_list(path, 2)
    assert adj.nnz == 2
    assert adj[0, 1] == 1.0


def test_load_edge_list_drops_self_loop(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("0 0\n")
    assert load_edge_list(path, 1).nnz == 0


def test_load_edge_list_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("0 1\n0 9\n")
    with pytest.raises(DataError, match=":2"):
        load_edge_list(path, 3)
    path.write_text("0 1\nnope\n")
    with pytest.raises(DataError, match=":2"):
        load_edge_list(path, 3)


def _triangle_graph():
    a = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
    return Graph(adjacency=a, features=np.zeros((3, 1)), labels=np.zeros(3, int))


def test_apply_perturbation_empty():
    g = _triangle_graph()
    out = apply_perturbation(g, Perturbation(flips=frozenset(), budget=0))
    assert np.array_equal(out.dense(), g.dense())


def test_apply_perturbation_triangle_to_path():
    g = _triangle_graph()
    out = apply_perturbation(g, Perturbation(flips=frozenset({(0, 1)}), budget=1))
    assert out.num_edges == 2
    assert out.dense()[0, 1] == 0


def test_apply_perturbation_zero_norm_counts_both_triangles():
    g = sbm_generate(SbmConfig(block_sizes=(25, 25), p_in=0.2, p_out=0.05,
                               feature_dim=2, seed=9))
    rng = np.random.default_rng(0)
    pairs = set()
    while len(pairs) < 30:
        u, v = rng.integers(0, g.n, 2)
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    pert = Perturbation(flips=frozenset(pairs), budget=30)
    out = apply_perturbation(g, pert)
    diff = out.dense() - g.dense()
    assert np.count_nonzero(diff) == 2 * len(pairs)


def test_apply_perturbation_out_of_range():
    g = _triangle_graph()
    with pytest.raises(IndexError):
        apply_perturbation(g, Perturbation(flips=frozenset({(0, 7)}), budget=1))


def test_perturbation_rejects_self_pair_and_overbudget():
    with pytest.raises(ValueError):
        Perturbation(flips=frozenset({(2, 2)}), budget=5)
    with pytest.raises(ValueError):
        Perturbation(flips=frozenset({(0, 1), (1, 2)}), budget=1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(4, 16), flips=st.integers(1, 6))
def test_perturbation_is_involution(seed, n, flips):
    rng = np.random.default_rng(seed)
    a = (rng.random((n, n)) < 0.4).astype(float)
    a = np.triu(a, 1)
    g = Graph(adjacency=a + a.T, features=np.zeros((n, 1)), labels=np.zeros(n, int))
    pairs = set()
    while len(pairs) < flips:
        u, v = rng.integers(0, n, 2)
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    pert = Perturbation(flips=frozenset(pairs), budget=flips)
    back = apply_perturbation(apply_perturbation(g, pert), pert)
    assert np.array_equal(back.dense(), g.dense())


def test_inductive_split_tiny():
    rng = np.random.default_rng(1)
    a = np.zeros((10, 10))
    labels = np.array([0] * 5 + [1] * 5)
    g = Graph(adjacency=a, features=rng.standard_normal((10, 2)), labels=labels)
    out = inductive_split(g, per_class=1, test_frac=0.0, seed=4)
    assert out.train_mask.sum() == 2
    assert out.val_mask.sum() == 2
    assert out.test_mask.sum() == 0
    assert not (out.train_mask & out.val_mask).any()


def test_inductive_split_standard_sizes():
    g = sbm_generate(SbmConfig(block_sizes=(500, 480), p_in=0.01, p_out=0.002,
                               feature_dim=4, seed=2))
    out = inductive_split(g, per_class=20, test_frac=0.1, seed=2)
    assert out.train_mask.sum() == 40
    assert out.val_mask.sum() == 40
    assert out.test_mask.sum() == int(0.1 * g.n)


def test_inductive_split_deterministic():
    g = sbm_generate(SbmConfig(block_sizes=(30, 30), p_in=0.2, p_out=0.02,
                               feature_dim=3, seed=8))
    a = inductive_split(g, per_class=5, test_frac=0.2, seed=3)
    b = inductive_split(g, per_class=5, test_frac=0.2, seed=3)
    for name in ("train_mask", "val_mask", "test_mask"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_inductive_split_small_class_names_class():
    labels = np.array([0] * 8 + [1] * 2)
    g = Graph(adjacency=np.zeros((10, 10)), features=np.zeros((10, 1)), labels=labels)
    with pytest.raises(DataError, match="class 1"):
        inductive_split(g, per_class=2, test_frac=0.0, seed=0)


def test_training_view_removes_test_nodes(small_sbm):
    view, kept = training_view(small_sbm)
    assert view.n == small_sbm.n - small_sbm.test_mask.sum()
    assert not view.test_mask.any()
    assert view.train_mask.sum() == small_sbm.train_mask.sum()
    # adjacency rows/cols match the original restricted to kept nodes
    expected = small_sbm.dense()[np.ix_(kept, kept)]
    assert np.array_equal(view.dense(), expected)


def test_graph_invariants_enforced():
    bad = np.array([[0, 1], [0, 0]], dtype=float)  # asymmetric
    with pytest.raises(ValueError):
        Graph(adjacency=bad, features=np.zeros((2, 1)), labels=np.zeros(2, int))
    loop = np.array([[1.0, 0], [0, 0]])
    with pytest.raises(ValueError):
        Graph(adjacency=loop, features=np.zeros((2, 1)), labels=np.zeros(2, int))
    neg = np.array([[0, -1.0], [-1.0, 0]])
    with pytest.raises(ValueError):
        Graph(adjacency=neg, features=np.zeros((2, 1)), labels=np.zeros(2, int))


def test_bundle_roundtrip(tmp_path, small_sbm):
    save_bundle(small_sbm, tmp_path / "bundle")
    loaded = load_bundle(tmp_path / "bundle")
    assert loaded.n == small_sbm.n
    assert np.array_equal(loaded.dense(), small_sbm.dense())
    assert np.array_equal(loaded.labels, small_sbm.labels)
    assert np.allclose(loaded.features, small_sbm.features)


def test_bundle_missing_meta(tmp_path):
    with pytest.raises(DataError):
        load_bundle(tmp_path)
