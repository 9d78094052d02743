"""Topology evasion attacks against frozen models.

The block-coordinate attack here is a simplified reimplementation of the
randomized-block-coordinate-descent family: candidate pair blocks are drawn
uniformly, the budget projection is a hard top-k on continuous flip weights,
and discretization keeps the heaviest pairs.  An optional per-node flip cap
stands in for locally constrained variants.  The energy-maximizing random
attack samples a fixed number of candidate perturbations and keeps the one
with the largest windowed subspace energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn import accuracy, loss_and_grads
from .graphs import Graph, Perturbation, apply_perturbation
from .rng import stream_rng
from .spectral import gse

__all__ = [
    "AttackConfig",
    "rbcd_attack",
    "rnd_gse_attack",
    "evaluate_attack",
    "save_perturbation",
    "load_perturbation",
]


@dataclass(frozen=True)
class AttackConfig:
    """Budget as a fraction of the edge count, plus block-descent knobs."""

    budget_ratio: float
    block_size: int = 2048
    iterations: int = 40
    lr: float = 100.0
    seed: int = 0
    local_degree_cap: int | None = None

    def __post_init__(self):
        if not (0.0 < self.budget_ratio <= 1.0):
            raise ValueError(f"budget_ratio must lie in (0, 1], got {self.budget_ratio}")
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.local_degree_cap is not None and self.local_degree_cap < 1:
            raise ValueError(f"local_degree_cap must be >= 1, got {self.local_degree_cap}")


def pairs_from_linear(n: int, lin: np.ndarray):
    """Map linear upper-triangle indices (row-major, diagonal excluded) to (i, j)."""
    lin = np.asarray(lin, dtype=np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * lin)) / 2.0).astype(np.int64)
    # guard against float rounding at row boundaries
    offset = i * n - i * (i + 1) // 2
    too_high = offset > lin
    i[too_high] -= 1
    offset = i * n - i * (i + 1) // 2
    too_low = lin - offset >= (n - 1 - i)
    i[too_low] += 1
    offset = i * n - i * (i + 1) // 2
    j = lin - offset + i + 1
    return i, j


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def _greedy_select(lin, weights, n, delta, cap):
    """Top-delta pairs by weight (ties by index), honoring a per-node cap."""
    order = np.lexsort((lin, -weights))
    rows, cols = pairs_from_linear(n, lin)
    counts = np.zeros(n, dtype=np.int64)
    chosen = []
    for idx in order:
        if len(chosen) == delta:
            break
        if weights[idx] <= 0.0:
            break
        u, v = int(rows[idx]), int(cols[idx])
        if cap is not None and (counts[u] >= cap or counts[v] >= cap):
            continue
        counts[u] += 1
        counts[v] += 1
        chosen.append((u, v))
    return chosen


def rbcd_attack(params, graph: Graph, cfg: AttackConfig, mask=None) -> Perturbation:
    """Block-coordinate ascent on flip weights, projected onto the budget.

    Per iteration: sample a random block of candidate pairs, take the masked
    loss gradient with respect to their continuous flip weights, ascend, and
    keep only the top-budget weights.  The final perturbation is the
    heaviest budget-many pairs (cap-respecting when configured).
    """
    mask = graph.test_mask if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("attack mask selects no nodes")
    n = graph.n
    if n < 2:
        raise ValueError("graph too small to perturb")
    delta = int(round(cfg.budget_ratio * graph.num_edges))
    delta = max(1, delta)
    total = _pair_count(n)
    delta = min(delta, total)

    rng = stream_rng(cfg.seed, "rbcd")
    a0 = graph.dense()
    x, y = graph.features, graph.labels

    cand_lin = np.empty(0, dtype=np.int64)
    cand_w = np.empty(0, dtype=np.float64)
    for _ in range(cfg.iterations):
        block = rng.choice(total, size=min(cfg.block_size, total), replace=False)
        merged = np.union1d(cand_lin, block.astype(np.int64))
        weights = np.zeros(merged.size)
        weights[np.searchsorted(merged, cand_lin)] = cand_w
        cand_lin, cand_w = merged, weights

        rows, cols = pairs_from_linear(n, cand_lin)
        sign = 1.0 - 2.0 * a0[rows, cols]
        a_t = a0.copy()
        contrib = cand_w * sign
        a_t[rows, cols] += contrib
        a_t[cols, rows] += contrib
        bundle = loss_and_grads(params, a_t, x, y, mask)
        grad = 2.0 * sign * bundle.grad_adjacency[rows, cols]
        cand_w = np.clip(cand_w + cfg.lr * grad, 0.0, 1.0)

        if np.count_nonzero(cand_w) > delta:
            keep = np.lexsort((cand_lin, -cand_w))[:delta]
        else:
            keep = np.flatnonzero(cand_w > 0.0)
        keep.sort()
        cand_lin, cand_w = cand_lin[keep], cand_w[keep]

    chosen = _greedy_select(cand_lin, cand_w, n, delta, cfg.local_degree_cap)
    if not chosen:
        # gradient never favored any pair; fall back to the first sampled one
        rows, cols = pairs_from_linear(n, rng.choice(total, size=1))
        chosen = [(int(rows[0]), int(cols[0]))]
    return Perturbation(flips=frozenset(chosen), budget=delta)


def rnd_gse_attack(graph: Graph, budget: int, trials: int, beta1: float,
                   beta2: float, seed: int = 0) -> Perturbation:
    """Among `trials` random budget-sized flip sets, keep the max-energy one."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    n = graph.n
    total = _pair_count(n)
    budget = int(budget)
    if not (1 <= budget <= total):
        raise ValueError(f"budget must lie in [1, {total}], got {budget}")
    rng = stream_rng(seed, "rndgse")
    base = graph.dense()
    best_energy = -np.inf
    best_lin = None
    for _ in range(trials):
        lin = np.sort(rng.choice(total, size=budget, replace=False).astype(np.int64))
        rows, cols = pairs_from_linear(n, lin)
        flip = 1.0 - 2.0 * base[rows, cols]
        candidate = base.copy()
        candidate[rows, cols] += flip
        candidate[cols, rows] += flip
        energy = gse(candidate, beta1, beta2)
        if energy > best_energy:
            best_energy = energy
            best_lin = lin
    rows, cols = pairs_from_linear(n, best_lin)
    pairs = frozenset((int(u), int(v)) for u, v in zip(rows, cols))
    return Perturbation(flips=pairs, budget=budget)


def evaluate_attack(params, clean: Graph, pert: Perturbation, mask=None):
    """Accuracy on the mask before and after the perturbation, params frozen."""
    mask = clean.test_mask if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("evaluation mask selects no nodes")
    clean_acc = accuracy(params, clean.dense(), clean.features, clean.labels, mask)
    attacked = apply_perturbation(clean, pert)
    adv_acc = accuracy(params, attacked.dense(), attacked.features, attacked.labels, mask)
    return clean_acc, adv_acc


def save_perturbation(pert: Perturbation, path) -> None:
    """One "u v" line per flipped pair, sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in pert.sorted_pairs():
            fh.write(f"{u} {v}\n")


def load_perturbation(path, budget: int | None = None) -> Perturbation:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            u, v = stripped.split()
            pairs.append((int(u), int(v)))
    if budget is None:
        budget = len(pairs)
    return Perturbation(flips=frozenset(pairs), budget=budget)
