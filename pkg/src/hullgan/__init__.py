"""Class-imbalance rebalancing with a convex-hull-constrained generator.

A three-player adversarial setup: the generator emits softmax-weighted
combinations of real per-class anchor samples (so its outputs can never leave
the class hull), a Wasserstein-style critic keeps it on the class
distribution, and a prior-weighted classifier pushes it toward the class
periphery. Rebalanced datasets feed a retrained classifier; evaluation covers
per-class F1 and four confidence-based uncertainty measures.
"""

__version__ = "0.1.0"

from .backend import USING_NUMBA
from .data import (
    ClassPriors,
    Dataset,
    apply_imbalance,
    class_priors,
    load_csv,
    load_idx,
    make_blobs,
    make_rings,
    random_oversample,
    save_csv,
    save_idx,
    smote_oversample,
    split_dataset,
)
from .hull import HullResult, convex_hull_2d, hull_contains, hull_membership
from .metrics import (
    MetricsReport,
    UncertaintyReport,
    distribution_shift,
    emd_1d_cdf,
    emd_discrete,
    f1_report,
    kl_divergence,
    uncertainty_metrics,
)
from .models import (
    ClassBank,
    GeneratorParams,
    HullGanModel,
    LatentConditioner,
    autoencoder_pretrain,
    build_bank,
    classify,
    critic_score,
    extract_features,
    generator_forward,
    init_generator_from_ae,
    load_model,
    sample_latent,
    save_model,
)
from .training import (
    DivergenceError,
    LossCurve,
    TrainingConfig,
    TrainResult,
    classifier_objective,
    critic_objective,
    gradient_penalty,
    init_model,
    rebalance_dataset,
    sample_minority_labels,
    train_cgan,
    train_hull_gan,
    train_plain_classifier,
    train_vanilla_gan,
)
