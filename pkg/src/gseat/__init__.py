"""Adversarial training for graph neural networks via graph subspace energy."""

from .errors import ConfigError, DataError, NumericError
from .graphs import (
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
from .spectral import (
    GseParams,
    RndSvdConfig,
    SvdFactors,
    alpha_budget,
    full_svd,
    gse,
    gse_offset_prox,
    hoffman_wielandt_gap,
    normalized_gse,
    nystrom_approx,
    pseudo_inverse,
    randomized_svd,
    singular_spectrum,
)
from .gnn import (
    GcnParams,
    GprgnnParams,
    LossBundle,
    accuracy,
    gcn_forward,
    gprgnn_forward,
    init_params,
    load_params,
    loss_and_grads,
    masked_cross_entropy,
    model_forward,
    normalize_adjacency,
    save_params,
)
from .attack import (
    AttackConfig,
    evaluate_attack,
    load_perturbation,
    rbcd_attack,
    rnd_gse_attack,
    save_perturbation,
)
from .training import (
    TrainConfig,
    TrainReport,
    at_gse_train,
    at_nystrom_train,
    at_rndsvd_train,
    natural_train,
    perturb_adjacency,
    rnd_gse_augment_train,
    select_model,
    train,
)

__version__ = "0.1.0"
