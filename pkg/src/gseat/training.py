"""Training loops: natural descent and the spectral adversarial variants.

Every adversarial variant shares one loop shape: warm-up epochs of plain
descent, then per epoch an inner maximization that ascends the training
adjacency and pushes it through a spectral step (offset proximal operator,
its randomized-SVD form, or column-sampled reconstruction), an outer
parameter descent on the perturbed graph, an analogous perturbation of the
validation graph, and checkpoint selection by perturbed-validation loss.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .attack import rnd_gse_attack
from .errors import ConfigError, NumericError
from .gnn import (
    init_params,
    loss_and_grads,
    masked_cross_entropy,
    model_forward,
    normalize_adjacency,
    params_hash,
    step_params,
)
from .graphs import Graph, apply_perturbation, dataset_hash, training_view
from .rng import child_seed, stream_rng
from .spectral import (
    GseParams,
    RndSvdConfig,
    alpha_budget,
    gse_offset_prox,
    nystrom_approx,
)

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainReport",
    "perturb_adjacency",
    "natural_train",
    "at_gse_train",
    "at_rndsvd_train",
    "at_nystrom_train",
    "rnd_gse_augment_train",
    "train",
    "select_model",
    "TRAIN_METHODS",
]


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for all training loops; spectral fields are ignored by natural runs.

    ``budget`` is the flip budget (defaults to 10% of the training-view edge
    count) and bounds the continuous perturbation mass ||A~ - A||_F^2.  When
    ``gse`` is omitted the window is (0.1, 0.5) with offset sqrt(budget/n).
    """

    epochs: int = 200
    warmup: int = 10
    lr: float = 0.01
    inner_steps: int = 5
    gse: GseParams | None = None
    budget: int | None = None
    backend: str = "exact"  # "exact" | "rndsvd" | "nystrom"
    rndsvd_p: int = 5
    rndsvd_q: int = 1
    nystrom_rank: int | None = None
    nystrom_scale: float | None = None
    adj_lr: float | None = None
    momentum: float = 0.0
    reinit_each_epoch: bool = True
    inner_tol: float = 1e-6
    hidden: int = 64
    gpr_hops: int = 10
    ppr_teleport: float = 0.1
    trials: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.warmup > self.epochs or self.warmup < 0:
            raise ConfigError(f"need 0 <= warmup <= epochs, got W={self.warmup}, E={self.epochs}")
        if self.inner_steps < 1:
            raise ConfigError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.backend not in ("exact", "rndsvd", "nystrom"):
            raise ConfigError(f"unknown backend {self.backend!r}")


@dataclass
class EpochRecord:
    epoch: int
    phase: str  # "natural" | "warmup" | "adversarial"
    train_loss: float
    val_loss: float
    checkpoint_id: str
    time_inner: float = 0.0
    time_prox: float = 0.0
    time_outer: float = 0.0
    adjacency_dev: float = 0.0


@dataclass
class TrainReport:
    method: str
    model: str
    seed: int
    dataset: str
    selected_epoch: int
    best_checkpoint: str
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainReport":
        records = [EpochRecord(**r) for r in payload.pop("records", [])]
        return cls(records=records, **payload)


def select_model(records) -> str:
    """Checkpoint with minimal validation loss; ties go to the earliest epoch."""
    records = list(records)
    if not records:
        raise ValueError("no epoch records to select from")
    best = records[0]
    for rec in records[1:]:
        if rec.val_loss < best.val_loss:
            best = rec
    return best.checkpoint_id


def perturb_adjacency(params, a_base: np.ndarray, x, labels, mask, *,
                      steps: int, adj_lr: float, budget: float,
                      spectral_step, tol: float = 1e-6, a_start=None):
    """Inner maximization: loss ascent on the adjacency plus a spectral step.

    Each iteration ascends the masked loss gradient from the clamped matrix,
    applies ``spectral_step`` to the unclamped iterate, and rescales the
    perturbation direction whenever its squared Frobenius mass exceeds
    ``budget``.  Stops early once the loss change drops below ``tol``.

    Returns (perturbed matrix, ascent seconds, spectral-step seconds).
    """
    a_t = (a_base if a_start is None else a_start).copy()
    sqrt_budget = float(np.sqrt(budget))
    prev_loss = None
    t_inner = 0.0
    t_prox = 0.0
    for _ in range(steps):
        t0 = time.perf_counter()
        bundle = loss_and_grads(params, np.clip(a_t, 0.0, 1.0), x, labels, mask)
        a_t = a_t + adj_lr * bundle.grad_adjacency
        t_inner += time.perf_counter() - t0

        t0 = time.perf_counter()
        a_t = spectral_step(a_t)
        direction = a_t - a_base
        dev = float(np.linalg.norm(direction))
        if dev > sqrt_budget:
            a_t = a_base + direction * (sqrt_budget / dev)
        t_prox += time.perf_counter() - t0

        if prev_loss is not None and abs(bundle.loss - prev_loss) < tol:
            break
        prev_loss = bundle.loss
    return a_t, t_inner, t_prox


def _resolve_spectral_step(method: str, cfg: TrainConfig, gse_params: GseParams,
                           n: int, prox_rng):
    k1, k2 = gse_params.window(n)
    if method == "at_gse":
        if k2 == 0:
            raise ConfigError(f"window floor({gse_params.beta2}*{n}) is empty")
        return lambda m: gse_offset_prox(m, gse_params)
    if method == "at_rndsvd":
        if k2 + cfg.rndsvd_p > n:
            raise ConfigError(f"rank {k2}+{cfg.rndsvd_p} exceeds n={n}")

        def rndsvd_step(m):
            backend = RndSvdConfig(k=k2, p=cfg.rndsvd_p, q=cfg.rndsvd_q,
                                   seed=child_seed(prox_rng))
            return gse_offset_prox(m, gse_params, svd_backend=backend)

        return rndsvd_step
    if method == "at_nystrom":
        rank = cfg.nystrom_rank if cfg.nystrom_rank is not None else max(1, k2)
        if not (1 <= rank <= n):
            raise ConfigError(f"nystrom rank must lie in [1, {n}], got {rank}")
        scale = (cfg.nystrom_scale if cfg.nystrom_scale is not None
                 else 1.0 + gse_params.alpha)

        def nystrom_step(m):
            approx = scale * nystrom_approx(m, rank, seed=child_seed(prox_rng))
            return 0.5 * (approx + approx.T)

        return nystrom_step
    raise ConfigError(f"unknown adversarial method {method!r}")


_BACKEND_FOR_METHOD = {
    "at_gse": "exact",
    "at_rndsvd": "rndsvd",
    "at_nystrom": "nystrom",
}

TRAIN_METHODS = ("natural", "at_gse", "at_rndsvd", "at_nystrom", "rnd_gse_augment")


def _train_loop(model: str, graph: Graph, cfg: TrainConfig, method: str):
    view, _ = training_view(graph)
    if not view.train_mask.any():
        raise ValueError("graph has no training nodes; run inductive_split first")
    if not view.val_mask.any():
        raise ValueError("graph has no validation nodes; run inductive_split first")
    n = view.n
    x = view.features
    y = view.labels
    a_clean = view.dense()

    num_classes = max(graph.num_classes, 2)
    params = init_params(model, view.num_features, num_classes,
                         stream_rng(cfg.seed, "init"), hidden=cfg.hidden,
                         hops=cfg.gpr_hops, teleport=cfg.ppr_teleport)

    delta = cfg.budget if cfg.budget is not None else max(1, round(0.1 * view.num_edges))
    gse_params = cfg.gse if cfg.gse is not None else GseParams(
        0.1, 0.5, alpha=alpha_budget(delta, n))
    adj_lr = cfg.adj_lr if cfg.adj_lr is not None else cfg.lr

    adversarial = method != "natural"
    spectral_step = None
    if adversarial and method != "rnd_gse_augment":
        spectral_step = _resolve_spectral_step(method, cfg, gse_params, n,
                                               stream_rng(cfg.seed, "spectral-seq"))
    augment_rng = stream_rng(cfg.seed, "augment-seq")

    records: list[EpochRecord] = []
    selectable: list[EpochRecord] = []
    velocity = {}
    best_loss = np.inf
    best_params = params
    a_train_state = None
    a_val_state = None

    for epoch in range(cfg.epochs):
        in_warmup = adversarial and epoch < cfg.warmup
        perturbing = adversarial and not in_warmup
        t_inner = t_prox = 0.0
        dev = 0.0

        try:
            if perturbing and method == "rnd_gse_augment":
                t0 = time.perf_counter()
                pert = rnd_gse_attack(view, delta, cfg.trials, gse_params.beta1,
                                      gse_params.beta2, seed=child_seed(augment_rng))
                g_train = apply_perturbation(view, pert).dense()
                t_inner = time.perf_counter() - t0
                g_val = g_train
            elif perturbing:
                a_t, ti, tp = perturb_adjacency(
                    params, a_clean, x, y, view.train_mask,
                    steps=cfg.inner_steps, adj_lr=adj_lr, budget=delta,
                    spectral_step=spectral_step, tol=cfg.inner_tol,
                    a_start=None if cfg.reinit_each_epoch else a_train_state)
                a_train_state = a_t
                g_train = np.clip(a_t, 0.0, 1.0)
                t_inner, t_prox = ti, tp
            else:
                g_train = a_clean

            t0 = time.perf_counter()
            bundle = loss_and_grads(params, g_train, x, y, view.train_mask)
            params, velocity = step_params(params, bundle.grad_params, cfg.lr,
                                           velocity, cfg.momentum)
            t_outer = time.perf_counter() - t0

            if perturbing and method != "rnd_gse_augment":
                a_v, ti, tp = perturb_adjacency(
                    params, a_clean, x, y, view.val_mask,
                    steps=cfg.inner_steps, adj_lr=adj_lr, budget=delta,
                    spectral_step=spectral_step, tol=cfg.inner_tol,
                    a_start=None if cfg.reinit_each_epoch else a_val_state)
                a_val_state = a_v
                g_val = np.clip(a_v, 0.0, 1.0)
                t_inner += ti
                t_prox += tp
            elif not perturbing:
                g_val = a_clean

            val_logits = model_forward(params, normalize_adjacency(g_val), x)
            val_loss = masked_cross_entropy(val_logits, y, view.val_mask)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch}: {exc}") from exc
        if not np.isfinite(val_loss):
            raise NumericError(f"epoch {epoch}: non-finite validation loss")

        if perturbing:
            dev = float(np.linalg.norm(g_train - a_clean))
        rec = EpochRecord(
            epoch=epoch,
            phase="adversarial" if perturbing else ("warmup" if adversarial else "natural"),
            train_loss=bundle.loss,
            val_loss=val_loss,
            checkpoint_id=params_hash(params),
            time_inner=t_inner,
            time_prox=t_prox,
            time_outer=t_outer,
            adjacency_dev=dev,
        )
        records.append(rec)
        if perturbing or not adversarial:
            selectable.append(rec)
            if val_loss < best_loss:
                best_loss = val_loss
                best_params = params

    if selectable:
        chosen = min(selectable, key=lambda r: (r.val_loss, r.epoch))
        best_id = chosen.checkpoint_id
        selected_epoch = chosen.epoch
    else:
        # zero selectable epochs (E == 0 or E == W): fall back to final params
        best_params = params
        best_id = params_hash(params)
        selected_epoch = -1

    report = TrainReport(
        method=method,
        model=model,
        seed=cfg.seed,
        dataset=dataset_hash(graph),
        selected_epoch=selected_epoch,
        best_checkpoint=best_id,
        records=records,
    )
    return best_params, report


def natural_train(model: str, graph: Graph, cfg: TrainConfig):
    """Plain descent on the masked training loss, selected on clean val loss."""
    return _train_loop(model, graph, cfg, "natural")


def at_gse_train(model: str, graph: Graph, cfg: TrainConfig):
    """Adversarial training with the exact offset proximal operator."""
    if cfg.backend != "exact":
        raise ConfigError(f"at_gse_train needs backend='exact', got {cfg.backend!r}")
    return _train_loop(model, graph, cfg, "at_gse")


def at_rndsvd_train(model: str, graph: Graph, cfg: TrainConfig):
    """Adversarial training with the prox SVD computed by randomized projection."""
    if cfg.backend != "rndsvd":
        raise ConfigError(f"at_rndsvd_train needs backend='rndsvd', got {cfg.backend!r}")
    return _train_loop(model, graph, cfg, "at_rndsvd")


def at_nystrom_train(model: str, graph: Graph, cfg: TrainConfig):
    """Adversarial training with scaled column-sampled reconstruction."""
    if cfg.backend != "nystrom":
        raise ConfigError(f"at_nystrom_train needs backend='nystrom', got {cfg.backend!r}")
    return _train_loop(model, graph, cfg, "at_nystrom")


def rnd_gse_augment_train(model: str, graph: Graph, cfg: TrainConfig):
    """Adversarial training by max-energy random-flip augmentation."""
    return _train_loop(model, graph, cfg, "rnd_gse_augment")


def train(model: str, graph: Graph, cfg: TrainConfig, method: str):
    """Dispatch by method name, forcing the matching spectral backend."""
    if method not in TRAIN_METHODS:
        raise ConfigError(f"unknown method {method!r}, expected one of {TRAIN_METHODS}")
    wanted = _BACKEND_FOR_METHOD.get(method)
    if wanted is not None and cfg.backend != wanted:
        cfg = TrainConfig(**{**asdict(cfg), "backend": wanted, "gse": cfg.gse})
    if method == "natural":
        return natural_train(model, graph, cfg)
    if method == "at_gse":
        return at_gse_train(model, graph, cfg)
    if method == "at_rndsvd":
        return at_rndsvd_train(model, graph, cfg)
    if method == "at_nystrom":
        return at_nystrom_train(model, graph, cfg)
    return rnd_gse_augment_train(model, graph, cfg)
