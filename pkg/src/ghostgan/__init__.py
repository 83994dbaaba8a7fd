"""Ghost-image simulation with unpaired adversarial reconstruction.

Pipeline: simulate the single-pixel acquisition chain at a chosen SNR
coefficient, train a gradient-penalty Wasserstein GAN with two similarity
regularizers (pixel-space and shadow-manifold) on unpaired data, and score
reconstructions with inception-score and macro-F1 metrics.
"""

from .cgi import (
    GhostDataset,
    GhostImage,
    ObjectImage,
    SpeckleBank,
    build_ghost_dataset,
    bucket_measure,
    generate_speckle_bank,
    normalize_ghost,
    reconstruct_ghost,
    snr_coefficient,
)
from .data import LabeledImageSet, UnpairedSplit, cache_dataset, load_cache, load_mnist, unpaired_split
from .evaluate import (
    DigitClassifier,
    EvaluationReport,
    inception_score,
    macro_f1,
    regularized_inception_score,
    train_classifier,
)
from .grids import ablation_grid, cross_beta_evaluation
from .losses import critic_loss, generator_loss, gradient_penalty, mse1, mse2
from .models import Critic, Generator, ShadowGenerator, init_critic, init_generator, shadow_update
from .train import MetricsRecord, TrainingConfig, load_models, train

__version__ = "0.1.0"
