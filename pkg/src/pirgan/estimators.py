"""scikit-learn style front ends for source pretraining and few-shot adaptation.

Both estimators take images as (N, 3, R, R) arrays in [-1, 1]. Hyperparameters
are constructor arguments so ``get_params``/``set_params``/``clone`` work.
"""

import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidConfigError, as_image_batch
from .config import LossConfig, ModelConfig, TrainingConfig
from .data import FewShotDataset
from .metrics import sample_images
from .models import Generator
from .trainer import pretrain_source, train
from .translator import translate


class SourceGAN(BaseEstimator):
    """Pretrains a source generator on a data-rich domain."""

    def __init__(self, z_dim=128, g_channels=32, d_channels=16, iterations=3000, batch_size=32,
                 lr=2e-3, r1_gamma=1.0, seed=0):
        self.z_dim = z_dim
        self.g_channels = g_channels
        self.d_channels = d_channels
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.r1_gamma = r1_gamma
        self.seed = seed

    def _config(self, resolution):
        model = ModelConfig(resolution=resolution, z_dim=self.z_dim, g_channels=self.g_channels,
                            d_channels=self.d_channels)
        return TrainingConfig(model=model).validate()

    def fit(self, X, y=None):
        X = as_image_batch(X, name="X")
        cfg = self._config(X.shape[-1])
        ds = FewShotDataset(X, "source")
        self.generator_ = pretrain_source(ds, cfg, self.iterations, self.batch_size, self.lr,
                                          self.r1_gamma, seed=self.seed)
        self.config_ = cfg
        return self

    def sample(self, n, seed=0):
        check_is_fitted(self, "generator_")
        return sample_images(self.generator_, n, seed)


class PIRAdapter(TransformerMixin, BaseEstimator):
    """Adapts a pretrained generator to a handful of target images.

    ``fit(X)`` runs the three-phase loop on the k-shot images in ``X``.
    ``sample`` draws from the adapted generator; ``transform`` re-renders
    images in the target style through the jointly trained translator.
    With ``baseline_mode=True`` only the adversarial fine-tune runs.
    """

    def __init__(self, source_generator=None, iterations=2000, f_steps_per_iter=4, batch_size=8,
                 lr_d=2e-3, lr_g=2e-3, lr_f=1e-3, lambda1=1.0, lambda2=1.0,
                 recon_metric="perceptual", recon_direction="both", patch_weight=0.5, k_shot=10,
                 seed=0, baseline_mode=False, share_z=False, checkpoint_dir=None,
                 checkpoint_interval=500, log_path=None):
        self.source_generator = source_generator
        self.iterations = iterations
        self.f_steps_per_iter = f_steps_per_iter
        self.batch_size = batch_size
        self.lr_d = lr_d
        self.lr_g = lr_g
        self.lr_f = lr_f
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.recon_metric = recon_metric
        self.recon_direction = recon_direction
        self.patch_weight = patch_weight
        self.k_shot = k_shot
        self.seed = seed
        self.baseline_mode = baseline_mode
        self.share_z = share_z
        self.checkpoint_dir = checkpoint_dir
        self.checkpoint_interval = checkpoint_interval
        self.log_path = log_path

    def to_config(self, resolution=None):
        g = self.source_generator
        model = g.config if isinstance(g, Generator) else ModelConfig()
        if resolution is not None and model.resolution != resolution:
            raise InvalidConfigError(f"source generator resolution {model.resolution} != data {resolution}")
        loss = LossConfig(self.lambda1, self.lambda2, self.recon_metric, self.recon_direction,
                          self.patch_weight)
        return TrainingConfig(
            iterations=self.iterations, f_steps_per_iter=self.f_steps_per_iter,
            batch_size=self.batch_size, lr_d=self.lr_d, lr_g=self.lr_g, lr_f=self.lr_f,
            loss=loss, model=model, k_shot=self.k_shot, seed=self.seed,
            checkpoint_interval=self.checkpoint_interval, baseline_mode=self.baseline_mode,
            share_z=self.share_z,
        )

    def fit(self, X, y=None):
        if not isinstance(self.source_generator, Generator):
            raise InvalidConfigError("source_generator must be a pretrained Generator")
        X = as_image_batch(X, name="X")
        cfg = self.to_config(X.shape[-1]).validate(len(X))
        ds = FewShotDataset(X, "target")
        self.state_, self.checkpoints_ = train(cfg, ds, self.source_generator,
                                               out_dir=self.checkpoint_dir, log_path=self.log_path)
        self.generator_ = self.state_.g_t
        self.translator_ = self.state_.f
        self.history_ = self.state_.history
        return self

    def sample(self, n, seed=0):
        check_is_fitted(self, "generator_")
        return sample_images(self.generator_, n, seed)

    def transform(self, X, style=None):
        """Translate ``X`` using ``style`` images (default: the k-shot set, cycled)."""
        check_is_fitted(self, "generator_")
        if self.translator_ is None:
            raise InvalidConfigError("baseline_mode has no translator")
        X = as_image_batch(X, self.generator_.resolution, name="X")
        if style is None:
            reals = self.state_.reals
            style = reals[torch.arange(len(X)) % len(reals)]
        with torch.no_grad():
            return translate(self.translator_, X, style)
