"""Few-shot generator adaptation with paired image reconstruction."""

from ._validation import InvalidArgumentError, InvalidConfigError, NumericalError, TrainingAborted
from .config import LossConfig, ModelConfig, TrainingConfig, load_config, save_config
from .data import FewShotDataset, ToySpec, emit_grid, generate_toy_domains, load_dataset, select_k_shot
from .estimators import PIRAdapter, SourceGAN
from .losses import (
    adversarial_d_loss,
    adversarial_g_loss,
    generator_recon_loss,
    perceptual_distance,
    translator_recon_loss,
)
from .metrics import MetricsReport, balance_index, extract_feature_stats, fid, intra_cluster_distance
from .models import (
    Discriminator,
    Generator,
    clone_source_to_target,
    discriminate,
    generate,
    sample_latent,
)
from .probes import ContentProbe, DomainProbe
from .trainer import TrainState, init_training, pretrain_source, train, train_iteration
from .translator import Translator, adain, encode_content, encode_style, translate

__version__ = "0.1.0"
