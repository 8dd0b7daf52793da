import math

import numpy as np
import pytest
import torch
from torch import nn

from pirgan import InvalidArgumentError, InvalidConfigError
from pirgan.config import LossConfig
from pirgan.losses import (
    adversarial_d_loss,
    adversarial_g_loss,
    d_loss_from_logits,
    default_backend,
    g_loss_from_logits,
    generator_recon_loss,
    perceptual_distance,
    translator_recon_loss,
)
from pirgan.models import Discriminator, Generator, clone_source_to_target, sample_latent
from pirgan.translator import Translator


def softplus(x):
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


class FixedLogitD(nn.Module):
    """Discriminator returning preset logits, ignoring the images."""

    resolution = 2

    def __init__(self, logits, patches):
        super().__init__()
        self.logits, self.patches = logits, patches
        self.calls = 0
        self.dummy = nn.Parameter(torch.zeros(()))

    def forward(self, x):
        out = self.logits[self.calls], self.patches[self.calls]
        self.calls += 1
        return out


class TinyD(nn.Module):
    """One linear layer; image logit = <w, x>, patch logits = per-pixel channel sums."""

    resolution = 4

    def __init__(self, gen):
        super().__init__()
        self.w = nn.Parameter(torch.randn(3 * 16, generator=gen, dtype=torch.float64))

    def forward(self, x):
        return x.flatten(1) @ self.w, x.sum(1) * 0.3


class LinearGen(nn.Module):
    """Maps z (length 2) to a 3x2x2 image through a fixed matrix."""

    def __init__(self, matrix):
        super().__init__()
        self.z_dim = 2
        self.matrix = nn.Parameter(torch.as_tensor(matrix, dtype=torch.float64))

    def forward(self, z):
        return (z @ self.matrix).view(-1, 3, 2, 2)


class MixTranslator(nn.Module):
    """F(c, s) = 0.25 c + 0.75 s."""

    def __init__(self):
        super().__init__()
        self.anchor = nn.Parameter(torch.ones((), dtype=torch.float64))

    def forward(self, content, style):
        return self.anchor * (0.25 * content + 0.75 * style)


class StyleCopy(nn.Module):
    """F(c, s) = s: a perfect self-reconstructor."""

    def __init__(self):
        super().__init__()
        self.anchor = nn.Parameter(torch.ones(()))

    def forward(self, content, style):
        return style * self.anchor


def test_perceptual_identity_symmetry_nonnegative():
    gen = torch.Generator().manual_seed(0)
    a = torch.rand(4, 3, 32, 32, generator=gen) * 2 - 1
    b = torch.rand(4, 3, 32, 32, generator=gen) * 2 - 1
    assert torch.all(perceptual_distance(a, a) == 0)
    assert torch.allclose(perceptual_distance(a, b), perceptual_distance(b, a))
    assert torch.all(perceptual_distance(a, b) >= 0)


def test_perceptual_orders_small_noise_before_unrelated():
    gen = torch.Generator().manual_seed(1)
    wins = 0
    for _ in range(50):
        x = torch.rand(1, 3, 32, 32, generator=gen) * 2 - 1
        near = (x + 0.05 * torch.randn(x.shape, generator=gen)).clamp(-1, 1)
        far = torch.rand(1, 3, 32, 32, generator=gen) * 2 - 1
        wins += perceptual_distance(x, near).item() < perceptual_distance(x, far).item()
    assert wins == 50


def test_perceptual_resolution_mismatch():
    with pytest.raises(InvalidArgumentError):
        perceptual_distance(torch.zeros(1, 3, 32, 32), torch.zeros(1, 3, 64, 64))


def test_d_loss_zero_logits():
    z = (torch.zeros(4), torch.zeros(4, 2, 2))
    assert d_loss_from_logits(z, z).item() == pytest.approx(2 * math.log(2))
    assert g_loss_from_logits(z).item() == pytest.approx(math.log(2))


def test_losses_asymptotes():
    big = 60.0
    real = (torch.full((3,), big), torch.full((3, 2, 2), big))
    fake = (torch.full((3,), -big), torch.full((3, 2, 2), -big))
    assert d_loss_from_logits(real, fake).item() < 1e-20
    assert g_loss_from_logits(real).item() < 1e-20


@pytest.mark.parametrize("patch_weight", [0.0, 0.5, 0.8])
def test_adversarial_losses_match_scalar_oracle(patch_weight):
    gen = torch.Generator().manual_seed(2)
    d = TinyD(gen)
    real = torch.rand(4, 3, 4, 4, generator=gen, dtype=torch.float64) * 2 - 1
    fake = torch.rand(4, 3, 4, 4, generator=gen, dtype=torch.float64) * 2 - 1
    w = d.w.detach().numpy()

    def logits(x):
        x = x.numpy()
        return [float(np.dot(x[i].ravel(), w)) for i in range(4)], [
            [0.3 * float(x[i, :, r, c].sum()) for r in range(4) for c in range(4)] for i in range(4)
        ]

    ri, rp = logits(real)
    fi, fp = logits(fake)
    img = sum(softplus(-v) for v in ri) / 4 + sum(softplus(v) for v in fi) / 4
    patch = (sum(softplus(-v) for row in rp for v in row) / 64
             + sum(softplus(v) for row in fp for v in row) / 64)
    expected_d = (1 - patch_weight) * img + patch_weight * patch
    got_d = adversarial_d_loss(d, real, fake, patch_weight).item()
    assert abs(got_d - expected_d) < 1e-6

    g_img = sum(softplus(-v) for v in fi) / 4
    g_patch = sum(softplus(-v) for row in fp for v in row) / 64
    expected_g = (1 - patch_weight) * g_img + patch_weight * g_patch
    assert abs(adversarial_g_loss(d, fake, patch_weight).item() - expected_g) < 1e-6


def test_adversarial_empty_batch():
    d = TinyD(torch.Generator().manual_seed(0))
    with pytest.raises(InvalidArgumentError):
        adversarial_d_loss(d, torch.zeros(0, 3, 4, 4), torch.zeros(1, 3, 4, 4))
    with pytest.raises(InvalidArgumentError):
        adversarial_g_loss(d, torch.zeros(0, 3, 4, 4))


def test_generator_recon_l1_hand_computed():
    m_s = np.arange(24, dtype=np.float64).reshape(2, 12) / 24 - 0.5
    m_t = m_s[::-1].copy() * 0.5
    g_s, g_t = LinearGen(m_s), LinearGen(m_t)
    z = torch.tensor([[0.3, -0.7]], dtype=torch.float64)
    x_s = (z.numpy() @ m_s).ravel()
    x_t = (z.numpy() @ m_t).ravel()
    # source term: |0.25 x_t + 0.75 x_s - x_s|, target term: |0.25 x_s + 0.75 x_t - x_t|
    src = np.mean([abs(0.25 * a + 0.75 * b - b) for a, b in zip(x_t, x_s)])
    tgt = np.mean([abs(0.25 * b + 0.75 * a - a) for a, b in zip(x_t, x_s)])
    cfg = LossConfig(recon_metric="l1")
    got = generator_recon_loss(g_t, g_s, MixTranslator(), z, cfg).item()
    assert got == pytest.approx(src + tgt, abs=1e-12)
    only_src = generator_recon_loss(g_t, g_s, MixTranslator(), z, LossConfig(recon_metric="l1",
                                    recon_direction="source_only")).item()
    assert only_src == pytest.approx(src, abs=1e-12)


@pytest.mark.parametrize("metric", ["l1", "perceptual", "code_l1"])
def test_both_direction_is_exact_sum(small_model, metric):
    g_s = Generator(small_model)
    g_t = clone_source_to_target(g_s)
    with torch.no_grad():
        for p in g_t.parameters():
            p.add_(0.05 * torch.randn_like(p))
    f = Translator(small_model)
    z = sample_latent(4, 0, small_model.z_dim)
    vals = {d: generator_recon_loss(g_t, g_s, f, z, LossConfig(recon_metric=metric, recon_direction=d)).item()
            for d in ("both", "source_only", "target_only")}
    assert vals["both"] == vals["source_only"] + vals["target_only"]


def test_adversarial_metric_requires_discriminators(small_model):
    g_s = Generator(small_model)
    g_t = clone_source_to_target(g_s)
    z = sample_latent(2, 0, small_model.z_dim)
    with pytest.raises(InvalidConfigError):
        generator_recon_loss(g_t, g_s, Translator(small_model), z, LossConfig(recon_metric="adversarial"))
    d = Discriminator(small_model)
    val = generator_recon_loss(g_t, g_s, Translator(small_model), z,
                               LossConfig(recon_metric="adversarial"), d_source=d, d_target=d)
    assert math.isfinite(val.item())


def test_perfect_reconstructor_gives_zero_losses(small_model):
    g_s = Generator(small_model)
    g_t = clone_source_to_target(g_s)
    z = sample_latent(3, 0, small_model.z_dim)
    f = StyleCopy()
    assert generator_recon_loss(g_t, g_s, f, z).item() == 0.0
    assert translator_recon_loss(g_t, g_s, f, z).item() == 0.0


def test_gradient_routing(small_model):
    g_s = Generator(small_model)
    g_t = clone_source_to_target(g_s)
    f = Translator(small_model)
    z = sample_latent(2, 0, small_model.z_dim)
    generator_recon_loss(g_t, g_s, f, z).backward()
    assert all(p.grad is None for p in f.parameters())
    assert all(p.grad is None for p in g_s.parameters())
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in g_t.parameters())
    g_t.zero_grad(set_to_none=True)
    translator_recon_loss(g_t, g_s, f, z).backward()
    assert all(p.grad is None for p in g_t.parameters())
    assert all(p.grad is None for p in g_s.parameters())
    assert all(p.requires_grad for p in f.parameters())
    assert any(p.grad is not None for p in f.parameters())


def test_translator_recon_loss_empty_batch(small_model):
    g = Generator(small_model)
    with pytest.raises(InvalidArgumentError):
        translator_recon_loss(g, g, Translator(small_model), torch.zeros(0, small_model.z_dim))


def test_losses_finite_on_random_inputs(small_model):
    gen = torch.Generator().manual_seed(4)
    d = Discriminator(small_model)
    backend = default_backend()
    with torch.no_grad():
        for _ in range(1000):
            scale = float(torch.rand((), generator=gen)) * 1e3
            logits = (torch.randn(4, generator=gen) * scale, torch.randn(4, 8, 8, generator=gen) * scale)
            assert math.isfinite(d_loss_from_logits(logits, logits).item())
            assert math.isfinite(g_loss_from_logits(logits).item())
        for _ in range(50):
            a = torch.rand(2, 3, 32, 32, generator=gen) * 2 - 1
            b = torch.sign(torch.randn(2, 3, 32, 32, generator=gen))
            assert torch.isfinite(backend(a, b)).all()
            assert math.isfinite(adversarial_d_loss(d, a, b).item())


def test_translator_loss_gradient_matches_finite_differences():
    from pirgan.config import ModelConfig

    cfg = ModelConfig(resolution=32, z_dim=4, g_channels=4, f_channels=4)
    torch.manual_seed(3)
    g_s = Generator(cfg).double()
    g_t = clone_source_to_target(g_s)
    with torch.no_grad():
        for p in g_t.parameters():
            p.add_(0.1 * torch.randn_like(p))
    f = Translator(cfg).double()
    z = sample_latent(2, 0, 4).double()
    f.zero_grad()
    translator_recon_loss(g_t, g_s, f, z).backward()
    params = list(f.parameters())
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(10):
        p = params[rng.integers(len(params))]
        i = int(rng.integers(p.numel()))
        flat = p.data.view(-1)
        orig = flat[i].item()
        with torch.no_grad():
            flat[i] = orig + h
            up = translator_recon_loss(g_t, g_s, f, z).item()
            flat[i] = orig - h
            down = translator_recon_loss(g_t, g_s, f, z).item()
            flat[i] = orig
        numeric = (up - down) / (2 * h)
        analytic = p.grad.view(-1)[i].item()
        assert abs(analytic - numeric) <= 1e-3 * max(abs(analytic), abs(numeric), 1e-6)
