"""Graph data model, synthetic block-model generation, ingestion, and splits.

Adjacencies are stored as symmetric ``scipy.sparse`` CSR matrices with sorted
indices and no stored self-loops; dense views are an explicit conversion.
Every operation returns a new :class:`Graph` value, leaving inputs untouched.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError
from .rng import stream_rng

__all__ = [
    "Graph",
    "Perturbation",
    "SbmConfig",
    "sbm_generate",
    "load_edge_list",
    "apply_perturbation",
    "inductive_split",
    "training_view",
    "save_bundle",
    "load_bundle",
    "dataset_hash",
]

_SYMMETRY_TOL = 1e-9


@dataclass
class Graph:
    """Undirected graph with features, class labels, and split masks.

    Masks are pairwise disjoint boolean vectors; nodes outside all three
    masks are unlabeled context.  Treat instances as immutable: operations
    that change a graph return a new one.
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray | None = None
    val_mask: np.ndarray | None = None
    test_mask: np.ndarray | None = None

    def __post_init__(self):
        adj = sp.csr_matrix(self.adjacency, dtype=np.float64)
        adj.sort_indices()
        adj.eliminate_zeros()
        self.adjacency = adj
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = adj.shape[0]
        for name in ("train_mask", "val_mask", "test_mask"):
            mask = getattr(self, name)
            mask = np.zeros(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
            setattr(self, name, mask)
        self._validate()

    def _validate(self):
        adj = self.adjacency
        n = adj.shape[0]
        if adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        asym = adj - adj.T
        if asym.nnz and np.abs(asym.data).max() > _SYMMETRY_TOL:
            raise ValueError("adjacency must be symmetric")
        if np.any(adj.diagonal() != 0):
            raise ValueError("adjacency must not store self-loops")
        if adj.nnz and adj.data.min() < 0:
            raise ValueError("edge weights must be nonnegative")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must be (n, d), got {self.features.shape}")
        if self.labels.shape != (n,):
            raise ValueError(f"labels must have length n={n}")
        for name in ("train_mask", "val_mask", "test_mask"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have length n={n}")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise ValueError("split masks must be pairwise disjoint")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return self.adjacency.nnz // 2

    def dense(self) -> np.ndarray:
        """Explicit dense copy of the adjacency."""
        return self.adjacency.toarray()

    def with_masks(self, train, val, test) -> "Graph":
        return replace(self, train_mask=train, val_mask=val, test_mask=test)


@dataclass(frozen=True)
class Perturbation:
    """A set of undirected node pairs to toggle, within a flip budget."""

    flips: frozenset
    budget: int

    def __post_init__(self):
        canonical = set()
        for pair in self.flips:
            u, v = int(pair[0]), int(pair[1])
            if u == v:
                raise ValueError(f"self-pair ({u},{u}) not allowed")
            canonical.add((min(u, v), max(u, v)))
        object.__setattr__(self, "flips", frozenset(canonical))
        object.__setattr__(self, "budget", int(self.budget))
        if len(self.flips) > self.budget:
            raise ValueError(
                f"{len(self.flips)} flips exceed budget {self.budget}"
            )

    def sorted_pairs(self) -> list:
        return sorted(self.flips)


@dataclass(frozen=True)
class SbmConfig:
    """Stochastic block model: one class per block, Gaussian features."""

    block_sizes: tuple
    p_in: float
    p_out: float
    feature_dim: int
    feature_shift: float = 1.0
    seed: int = 0


def sbm_generate(config: SbmConfig) -> Graph:
    """Sample a block-model graph with class-dependent Gaussian features.

    Within-block pairs connect independently with ``p_in``, cross-block pairs
    with ``p_out``.  Node features are unit-variance Gaussians whose mean for
    class ``c`` is ``feature_shift`` along coordinate ``c``.  Deterministic
    given ``config.seed``.
    """
    blocks = tuple(int(b) for b in config.block_sizes)
    if not blocks or any(b <= 0 for b in blocks):
        raise ConfigError(f"block_sizes must be nonempty positive, got {config.block_sizes}")
    for name in ("p_in", "p_out"):
        p = getattr(config, name)
        if not (0.0 <= p <= 1.0):
            raise ConfigError(f"{name} must lie in [0, 1], got {p}")
    num_classes = len(blocks)
    if config.feature_dim < num_classes:
        raise ConfigError(
            f"feature_dim={config.feature_dim} smaller than {num_classes} classes"
        )

    rng = stream_rng(config.seed, "sbm")
    n = sum(blocks)
    labels = np.repeat(np.arange(num_classes), blocks)

    rows, cols = np.triu_indices(n, k=1)
    prob = np.where(labels[rows] == labels[cols], config.p_in, config.p_out)
    keep = rng.random(rows.size) < prob
    r, c = rows[keep], cols[keep]
    data = np.ones(r.size, dtype=np.float64)
    adjacency = sp.coo_matrix(
        (np.concatenate([data, data]), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(n, n),
    ).tocsr()

    features = rng.standard_normal((n, config.feature_dim))
    features[np.arange(n), labels] += config.feature_shift
    return Graph(adjacency=adjacency, features=features, labels=labels)


def load_edge_list(path, num_nodes: int) -> sp.csr_matrix:
    """Read whitespace-separated "u v" pairs into a symmetric 0/1 adjacency.

    Duplicate pairs collapse to weight one; self-loops are dropped.  Node ids
    must be 0-based and below ``num_nodes``.
    """
    rows, cols = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'u v', got {stripped!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer node id in {stripped!r}") from None
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise DataError(
                    f"{path}:{lineno}: node id out of range [0, {num_nodes}) in {stripped!r}"
                )
            if u == v:
                continue
            rows += [u, v]
            cols += [v, u]
    adjacency = sp.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(num_nodes, num_nodes)
    ).tocsr()
    adjacency.data[:] = 1.0
    return adjacency


def apply_perturbation(graph: Graph, pert: Perturbation) -> Graph:
    """Toggle each listed pair (edge becomes non-edge and vice versa)."""
    n = graph.n
    for u, v in pert.sorted_pairs():
        if not (0 <= u < n and 0 <= v < n):
            raise IndexError(f"pair ({u},{v}) out of range for n={n}")
    adj = graph.adjacency.tolil()
    for u, v in pert.sorted_pairs():
        new = 0.0 if adj[u, v] != 0 else 1.0
        adj[u, v] = new
        adj[v, u] = new
    return replace(graph, adjacency=adj.tocsr())


def inductive_split(graph: Graph, per_class: int, test_frac: float, seed: int) -> Graph:
    """Assign labeled train/val nodes per class and a random test set.

    ``per_class`` nodes of every class go to train and, disjointly, to val.
    ``floor(test_frac * n)`` nodes drawn from the remainder form the test
    set; everything else is unlabeled context.  Deterministic given ``seed``.
    """
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    if not (0.0 <= test_frac <= 1.0):
        raise ConfigError(f"test_frac must lie in [0, 1], got {test_frac}")
    rng = stream_rng(seed, "inductive-split")
    n = graph.n
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    for c in range(graph.num_classes):
        members = np.flatnonzero(graph.labels == c)
        if members.size < 2 * per_class:
            raise DataError(
                f"class {c} has {members.size} nodes, needs at least {2 * per_class}"
            )
        picked = rng.permutation(members)
        train[picked[:per_class]] = True
        val[picked[per_class : 2 * per_class]] = True
    pool = np.flatnonzero(~(train | val))
    n_test = int(np.floor(test_frac * n))
    if n_test > pool.size:
        raise DataError(
            f"test fraction {test_frac} needs {n_test} nodes, only {pool.size} unlabeled left"
        )
    test = np.zeros(n, dtype=bool)
    test[rng.permutation(pool)[:n_test]] = True
    return graph.with_masks(train, val, test)


def training_view(graph: Graph):
    """Drop test rows/columns from the graph seen during training.

    Validation nodes stay in the training-time graph as unlabeled context.
    Returns the reduced graph and the original indices of the kept nodes.
    """
    keep = np.flatnonzero(~graph.test_mask)
    adj = graph.adjacency[keep][:, keep]
    view = Graph(
        adjacency=adj,
        features=graph.features[keep],
        labels=graph.labels[keep],
        train_mask=graph.train_mask[keep],
        val_mask=graph.val_mask[keep],
        test_mask=np.zeros(keep.size, dtype=bool),
    )
    return view, keep


def save_bundle(graph: Graph, dirpath) -> None:
    """Write the bundle layout: edges.txt, features.csv, labels.csv, meta.json."""
    os.makedirs(dirpath, exist_ok=True)
    upper = sp.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(os.path.join(dirpath, "edges.txt"), "w", encoding="utf-8") as fh:
        for i in order:
            fh.write(f"{upper.row[i]} {upper.col[i]}\n")
    with open(os.path.join(dirpath, "features.csv"), "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")
    with open(os.path.join(dirpath, "labels.csv"), "w", encoding="utf-8") as fh:
        for y in graph.labels:
            fh.write(f"{y}\n")
    meta = {"n": graph.n, "d": graph.num_features, "C": graph.num_classes}
    with open(os.path.join(dirpath, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_bundle(dirpath) -> Graph:
    """Read a bundle directory back into a Graph (masks left empty)."""
    meta_path = os.path.join(dirpath, "meta.json")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON in {meta_path}: {exc}") from exc
    for key in ("n", "d", "C"):
        if key not in meta:
            raise DataError(f"{meta_path}: missing key {key!r}")
    n = int(meta["n"])
    adjacency = load_edge_list(os.path.join(dirpath, "edges.txt"), n)

    feat_path = os.path.join(dirpath, "features.csv")
    rows = []
    with open(feat_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split(",")
            try:
                rows.append([float(x) for x in parts])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise DataError(f"{feat_path}:{lineno}: non-numeric feature row") from None
    features = np.asarray(rows, dtype=np.float64)
    if features.shape != (n, int(meta["d"])):
        raise DataError(
            f"{feat_path}: expected shape ({n}, {meta['d']}), got {features.shape}"
        )

    label_path = os.path.join(dirpath, "labels.csv")
    labels = []
    with open(label_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                labels.append(int(stripped))
            except ValueError:
                if lineno == 1:
                    continue
                raise DataError(f"{label_path}:{lineno}: non-integer label") from None
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DataError(f"{label_path}: expected {n} labels, got {labels.size}")
    if labels.size and (labels.min() < 0 or labels.max() >= int(meta["C"])):
        raise DataError(f"{label_path}: labels outside [0, {meta['C']})")
    return Graph(adjacency=adjacency, features=features, labels=labels)


def dataset_hash(graph: Graph) -> str:
    """Stable content hash of a graph, independent of storage details."""
    h = hashlib.sha256()
    coo = sp.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    h.update(coo.row[order].astype(np.int64).tobytes())
    h.update(coo.col[order].astype(np.int64).tobytes())
    h.update(coo.data[order].astype(np.float64).tobytes())
    h.update(np.ascontiguousarray(graph.features).tobytes())
    h.update(graph.labels.tobytes())
    for mask in (graph.train_mask, graph.val_mask, graph.test_mask):
        h.update(mask.astype(np.uint8).tobytes())
    return h.hexdigest()
