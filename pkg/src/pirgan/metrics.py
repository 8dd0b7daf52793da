"""FID, intra-cluster perceptual distance and the balance index."""

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
import yaml
from torch import nn

from ._validation import InvalidArgumentError, NumericalError
from .losses import default_backend
from .models import generate, sample_latent

DEFAULT_BALANCE_CONSTANT = 1000.0


@dataclass
class FeatureGaussian:
    mean: np.ndarray
    cov: np.ndarray
    sample_count: int

    @property
    def dim(self):
        return self.mean.shape[0]


class RandomConvFeatures(nn.Module):
    """Deterministic fixed-seed convolutional projector for FID features.

    Returns globally pooled activations of three random conv layers,
    concatenated (16 + 32 + 64 = 112 dimensions by default).
    """

    def __init__(self, seed=1, channels=(16, 32, 64)):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        in_c = 3
        for i, out_c in enumerate(channels):
            w = torch.randn(out_c, in_c, 3, 3, generator=gen) * math.sqrt(2.0 / (in_c * 9))
            self.register_buffer(f"w{i}", w)
            in_c = out_c
        self.n_layers = len(channels)

    @torch.no_grad()
    def forward(self, x):
        pooled = []
        for i in range(self.n_layers):
            x = F.leaky_relu(F.conv2d(x, getattr(self, f"w{i}"), stride=1 if i == 0 else 2, padding=1), 0.2)
            pooled.append(x.mean(dim=(2, 3)))
        return torch.cat(pooled, dim=1)


def _to_numpy(features):
    if isinstance(features, torch.Tensor):
        features = features.detach().cpu().numpy()
    return np.asarray(features, dtype=np.float64)


def extract_feature_stats(images, extractor=None, batch_size=256):
    """Empirical mean and unbiased covariance of ``extractor(images)``."""
    n = len(images)
    if n < 2:
        raise InvalidArgumentError("need at least 2 images for feature statistics")
    extractor = extractor or RandomConvFeatures()
    feats = np.concatenate(
        [_to_numpy(extractor(images[i:i + batch_size])) for i in range(0, n, batch_size)]
    )
    feats = feats.reshape(n, -1)
    return FeatureGaussian(feats.mean(axis=0), np.cov(feats, rowvar=False, ddof=1).reshape(
        feats.shape[1], feats.shape[1]), n)


def _psd_sqrt(mat, tol=1e-6):
    """Symmetric square root of a numerically PSD matrix via eigendecomposition."""
    mat = (mat + mat.T) / 2
    vals, vecs = np.linalg.eigh(mat)
    floor = -tol * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if vals.min(initial=0.0) < floor:
        raise NumericalError(f"matrix has eigenvalue {vals.min():.3g} below tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T, vals


def fid(a, b):
    """Frechet distance between two feature Gaussians.

    ``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``; the trace of the
    product root is taken as ``Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2))``, which keeps
    every decomposition symmetric.
    """
    if a.mean.shape != b.mean.shape or a.cov.shape != b.cov.shape:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0
    diff = a.mean - b.mean
    root_a, _ = _psd_sqrt(a.cov)
    _, cross_vals = _psd_sqrt(root_a @ b.cov @ root_a)
    value = diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sqrt(cross_vals).sum()
    if not np.isfinite(value):
        raise NumericalError("non-finite FID")
    return max(float(value), 0.0)


@dataclass
class IntraClusterResult:
    mean: float
    std: float
    n_clusters: int
    degenerate: bool
    assignments: np.ndarray

    def __iter__(self):
        return iter((self.mean, self.std))


def _pairwise(items_a, items_b, d, batch_size):
    out = []
    for i in range(0, len(items_a), batch_size):
        out.append(torch.as_tensor(d(items_a[i:i + batch_size], items_b[i:i + batch_size])))
    return torch.cat(out).detach().cpu().numpy().astype(np.float64)


def intra_cluster_distance(generated, training_k, d=None, batch_size=512):
    """Mean and std (across clusters) of within-cluster average pairwise distance.

    Each generated item joins the cluster of its nearest training item under
    ``d``; clusters with fewer than two members are left out. ``d`` maps two
    equal-length batches to per-pair distances.
    """
    d = d or default_backend()
    n, k = len(generated), len(training_k)
    if k < 1:
        raise InvalidArgumentError("need at least one training item")
    if n < 2 * k:
        raise InvalidArgumentError(f"need at least {2 * k} generated items, got {n}")
    gi = torch.arange(n).repeat_interleave(k)
    ti = torch.arange(k).repeat(n)
    with torch.no_grad():
        to_train = _pairwise(generated[gi], training_k[ti], d, batch_size).reshape(n, k)
    assign = to_train.argmin(axis=1)
    cluster_means = []
    for c in range(k):
        members = np.flatnonzero(assign == c)
        if len(members) < 2:
            continue
        i, j = np.triu_indices(len(members), 1)
        a, b = torch.as_tensor(members[i]), torch.as_tensor(members[j])
        with torch.no_grad():
            dist = _pairwise(generated[a], generated[b], d, batch_size)
        cluster_means.append(dist.mean())
    degenerate = k > 1 and len(np.unique(assign)) == 1
    if not cluster_means:
        return IntraClusterResult(0.0, 0.0, 0, True, assign)
    cm = np.array(cluster_means)
    return IntraClusterResult(float(cm.mean()), float(cm.std()), len(cm), degenerate, assign)


def balance_index(fid_value, ld, constant=DEFAULT_BALANCE_CONSTANT):
    """``constant * ld / fid``; higher means diversity and quality are better balanced."""
    if fid_value <= 0:
        raise InvalidArgumentError("fid must be > 0")
    return constant * ld / fid_value


@dataclass
class MetricsReport:
    fid: float
    intra_cluster_mean: float
    intra_cluster_std: float
    balance: float
    sample_count: int
    degenerate_clusters: bool = False

    def to_text(self):
        return yaml.safe_dump(asdict(self), sort_keys=False)

    @classmethod
    def from_text(cls, text):
        return cls(**yaml.safe_load(text))

    def row(self, label=""):
        return (f"{label:<24} FID {self.fid:8.3f} | LD {self.intra_cluster_mean:.3f} "
                f"+- {self.intra_cluster_std:.3f} | balance {self.balance:7.3f}")


def sample_images(g, n, seed, batch_size=250):
    """Generate ``n`` images from ``g`` under ``torch.no_grad``."""
    z = sample_latent(n, seed, g.z_dim)
    with torch.no_grad():
        return torch.cat([generate(g, z[i:i + batch_size]) for i in range(0, n, batch_size)])


def evaluate(g, real_images, training_k, n_samples=1000, seed=0, extractor=None,
             backend=None, constant=DEFAULT_BALANCE_CONSTANT):
    """FID against ``real_images``, intra-cluster distance against ``training_k``."""
    fakes = sample_images(g, n_samples, seed)
    extractor = extractor or RandomConvFeatures()
    fid_value = fid(extract_feature_stats(real_images, extractor),
                    extract_feature_stats(fakes, extractor))
    ic = intra_cluster_distance(fakes, training_k, backend or default_backend())
    balance = balance_index(fid_value, ic.mean, constant) if fid_value > 0 else float("inf")
    return MetricsReport(fid_value, ic.mean, ic.std, balance, n_samples, ic.degenerate)
