"""Adversarial, perceptual and paired-reconstruction objectives."""

import contextlib
import math

import torch
import torch.nn.functional as F
from torch import nn

from ._validation import InvalidArgumentError, InvalidConfigError, as_image_batch, check_same_shape
from .config import LossConfig
from .models import generate


class PerceptualBackend(nn.Module):
    """Deep-feature image distance in the style of LPIPS.

    Subclasses implement ``features(x)`` returning a list of feature maps. The
    distance sums, over layers, the spatial mean of squared differences between
    channel-normalized features. It is symmetric and zero on identical inputs.
    """

    def features(self, x):
        raise NotImplementedError

    def forward(self, a, b):
        total = 0.0
        for fa, fb in zip(self.features(a), self.features(b)):
            fa = fa * torch.rsqrt(fa.pow(2).sum(dim=1, keepdim=True) + 1e-10)
            fb = fb * torch.rsqrt(fb.pow(2).sum(dim=1, keepdim=True) + 1e-10)
            total = total + (fa - fb).pow(2).sum(dim=1).mean(dim=(1, 2))
        return total


class RandomConvPerceptual(PerceptualBackend):
    """Fixed-seed random convolution stack; needs no downloaded weights."""

    def __init__(self, seed=0, channels=(16, 32, 64)):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        in_c = 3
        self.strides = []
        for i, out_c in enumerate(channels):
            w = torch.randn(out_c, in_c, 3, 3, generator=gen) * math.sqrt(2.0 / (in_c * 9))
            self.register_buffer(f"w{i}", w)
            self.strides.append(1 if i == 0 else 2)
            in_c = out_c

    def features(self, x):
        feats = []
        for i, stride in enumerate(self.strides):
            w = getattr(self, f"w{i}").to(x.dtype)
            x = F.leaky_relu(F.conv2d(x, w, stride=stride, padding=1), 0.2)
            feats.append(x)
        return feats


class VGGPerceptual(PerceptualBackend):
    """ImageNet-pretrained VGG16 features (relu1_2, relu2_2, relu3_3).

    Requires torchvision weights to be available locally or downloadable.
    """

    def __init__(self, weights="DEFAULT"):
        super().__init__()
        from torchvision.models import vgg16

        try:
            net = vgg16(weights=weights).features[:16]
        except Exception as exc:  # download or cache failure
            raise InvalidConfigError(f"VGG16 weights unavailable: {exc}") from exc
        net.requires_grad_(False).eval()
        self.slices = nn.ModuleList([net[:4], net[4:9], net[9:16]])
        self.register_buffer("shift", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("scale", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def features(self, x):
        x = ((x + 1) / 2 - self.shift.to(x.dtype)) / self.scale.to(x.dtype)
        feats = []
        for s in self.slices:
            x = s.to(x.dtype)(x)
            feats.append(x)
        return feats


_DEFAULT_BACKEND = None


def default_backend():
    global _DEFAULT_BACKEND
    if _DEFAULT_BACKEND is None:
        _DEFAULT_BACKEND = RandomConvPerceptual(seed=0).eval()
    return _DEFAULT_BACKEND


def make_backend(name):
    if name == "random":
        return default_backend()
    if name == "vgg":
        return VGGPerceptual()
    raise InvalidConfigError(f"unknown perceptual backend {name!r}")


def perceptual_distance(a, b, backend=None):
    """Per-pair perceptual distance; a 0-dim tensor for single images."""
    single = isinstance(a, torch.Tensor) and a.dim() == 3
    a = as_image_batch(a, name="a")
    b = as_image_batch(b, name="b")
    check_same_shape(a, b)
    if a.shape[0] != b.shape[0]:
        raise InvalidArgumentError("a and b must hold the same number of images")
    d = (backend or default_backend())(a, b)
    return d[0] if single else d


def _combine_heads(image_term, patch_term, patch_weight):
    return (1.0 - patch_weight) * image_term + patch_weight * patch_term


def d_loss_from_logits(real_logits, fake_logits, patch_weight=0.5):
    """Logistic discriminator loss on ``(image_logit, patch_logits)`` pairs."""
    real_img, real_patch = real_logits
    fake_img, fake_patch = fake_logits
    image_term = F.softplus(-real_img).mean() + F.softplus(fake_img).mean()
    patch_term = F.softplus(-real_patch).mean() + F.softplus(fake_patch).mean()
    return _combine_heads(image_term, patch_term, patch_weight)


def g_loss_from_logits(fake_logits, patch_weight=0.5):
    fake_img, fake_patch = fake_logits
    return _combine_heads(
        F.softplus(-fake_img).mean(), F.softplus(-fake_patch).mean(), patch_weight
    )


def adversarial_d_loss(d, real, fake, patch_weight=0.5):
    """Non-saturating discriminator loss; ``fake`` is detached here."""
    real = as_image_batch(real, d.resolution, name="real")
    fake = as_image_batch(fake.detach(), d.resolution, name="fake")
    return d_loss_from_logits(d(real), d(fake), patch_weight)


def adversarial_g_loss(d, fake, patch_weight=0.5):
    fake = as_image_batch(fake, d.resolution, name="fake")
    return g_loss_from_logits(d(fake), patch_weight)


@contextlib.contextmanager
def frozen(*modules):
    """Temporarily stop gradient recording into the modules' parameters."""
    saved = []
    for m in modules:
        if m is None:
            continue
        for p in m.parameters():
            saved.append((p, p.requires_grad))
            p.requires_grad_(False)
    try:
        yield
    finally:
        for p, flag in saved:
            p.requires_grad_(flag)


def _check_zs(zs):
    if zs is None or len(zs) == 0:
        raise InvalidArgumentError("empty latent batch")
    return zs


def _style_l1(sa, sb):
    return (sa.mean - sb.mean).abs().flatten(1).mean(1) + (sa.std - sb.std).abs().flatten(1).mean(1)


def recon_distance(recon, target, content_input, style_input, f, cfg, backend=None,
                   discriminator=None):
    """Per-sample reconstruction distance under ``cfg.recon_metric``."""
    metric = cfg.recon_metric
    if metric == "l1":
        return (recon - target).abs().flatten(1).mean(1)
    if metric == "perceptual":
        return (backend or default_backend())(recon, target)
    if metric == "code_l1":
        content = (f.content_encoder(recon) - f.content_encoder(content_input)).abs()
        style = _style_l1(f.style_encoder(recon), f.style_encoder(style_input))
        return content.flatten(1).mean(1) + style
    if metric == "adversarial":
        if discriminator is None:
            raise InvalidConfigError("recon_metric='adversarial' needs a discriminator handle")
        img, patch = discriminator(recon)
        return (1 - cfg.patch_weight) * F.softplus(-img) + cfg.patch_weight * F.softplus(
            -patch
        ).flatten(1).mean(1)
    raise InvalidConfigError(f"unknown recon_metric {metric!r}")


def generator_recon_terms(x_t, x_s, f, cfg, backend=None, d_source=None, d_target=None):
    """Per-sample (source_term, target_term) for the generator-side loss.

    source_term compares F(x_t, x_s) with x_s: content of the target image,
    style of the source image. target_term is the mirror image.
    """
    source = target = None
    if cfg.recon_direction in ("source_only", "both"):
        recon = f(x_t, x_s)
        source = recon_distance(recon, x_s, x_t, x_s, f, cfg, backend, d_source)
    if cfg.recon_direction in ("target_only", "both"):
        recon = f(x_s, x_t)
        target = recon_distance(recon, x_t, x_s, x_t, f, cfg, backend, d_target)
    return source, target


def generator_recon_loss(g_t, g_s, f, zs, cfg=None, backend=None, d_source=None,
                         d_target=None):
    """Paired reconstruction loss driving G_T; no gradient reaches F or G_S.

    With ``recon_direction='both'`` this is
    ``E_z[d(F(G_T(z), G_S(z)), G_S(z)) + d(F(G_S(z), G_T(z)), G_T(z))]``.
    """
    cfg = cfg or LossConfig()
    _check_zs(zs)
    if cfg.recon_metric == "adversarial" and (
        (cfg.recon_direction != "target_only" and d_source is None)
        or (cfg.recon_direction != "source_only" and d_target is None)
    ):
        raise InvalidConfigError("recon_metric='adversarial' needs discriminator handles")
    with torch.no_grad():
        x_s = generate(g_s, zs)
    x_t = generate(g_t, zs)
    with frozen(f, g_s, d_source, d_target):
        source, target = generator_recon_terms(x_t, x_s, f, cfg, backend, d_source, d_target)
    # float64 accumulation keeps both == source_only + target_only exact
    total = torch.zeros((), dtype=torch.float64)
    for term in (source, target):
        if term is not None:
            total = total + term.mean().double()
    return total


def translator_recon_terms(x_t, x_s, f, backend=None):
    """Per-sample cross and self reconstruction distances for training F.

    Returns ``(F(x_t, x_s) vs x_s, F(x_s, x_t) vs x_t, F(x_s, x_s) vs x_s,
    F(x_t, x_t) vs x_t)``, evaluated as one batched pass.
    """
    backend = backend or default_backend()
    contents = torch.cat([x_t, x_s, x_s, x_t])
    styles = torch.cat([x_s, x_t, x_s, x_t])
    dist = backend(f(contents, styles), styles)
    return tuple(dist.chunk(4))


def translator_recon_from_images(x_t, x_s, f, backend=None):
    terms = translator_recon_terms(x_t.detach(), x_s.detach(), f, backend)
    return sum(t.mean() for t in terms)


def translator_recon_loss(g_t, g_s, f, zs, backend=None):
    """Four-term perceptual reconstruction loss for F; generators get no gradient."""
    _check_zs(zs)
    with torch.no_grad():
        x_t = generate(g_t, zs)
        x_s = generate(g_s, zs)
    return translator_recon_from_images(x_t, x_s, f, backend)


def self_reconstruction_error(f, images, backend=None):
    """Mean perceptual distance between F(x, x) and x."""
    with torch.no_grad():
        return (backend or default_backend())(f(images, images), images).mean().item()
