import pytest
import torch

from pirgan import InvalidArgumentError
from pirgan.translator import Translator, adain, channel_stats, encode_content, encode_style, translate


def test_adain_identity_with_own_stats():
    x = torch.randn(2, 5, 6, 6)
    out = adain(x, channel_stats(x))
    assert (out - x).abs().max().item() < 1e-5


def test_adain_hand_computed():
    # channel [1, 3]: mean 2, std 1 -> normalized [-1, 1] -> scaled by 2
    x = torch.tensor([[[[1.0, 3.0]]]])
    out = adain(x, (torch.tensor([0.0]), torch.tensor([2.0])))
    assert torch.allclose(out.flatten(), torch.tensor([-2.0, 2.0]), atol=1e-4)


def test_adain_constant_channel_maps_to_style_mean():
    x = torch.full((1, 1, 4, 4), 3.0)
    out = adain(x, (torch.tensor([0.7]), torch.tensor([5.0])))
    assert torch.isfinite(out).all()
    assert torch.allclose(out, torch.full_like(out, 0.7))


@pytest.mark.parametrize("seed", range(5))
def test_adain_moment_matching(seed):
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn(3, 4, 8, 8, generator=gen) * 3 + 1
    mean = torch.randn(3, 4, generator=gen)
    std = torch.rand(3, 4, generator=gen) + 0.1
    m, s = channel_stats(adain(x, (mean, std)), eps=0.0)
    assert (m - mean).abs().max().item() < 1e-4
    assert (s - std).abs().max().item() < 1e-4


def test_adain_channel_mismatch():
    with pytest.raises(InvalidArgumentError):
        adain(torch.randn(1, 3, 4, 4), (torch.zeros(2), torch.ones(2)))


def test_encoders_shapes_and_determinism(small_model):
    f = Translator(small_model)
    x = torch.rand(2, 3, 32, 32) * 2 - 1
    c = encode_content(f, x)
    assert c.shape == (2, small_model.f_channels, 8, 8)
    assert torch.equal(c, encode_content(f, x))
    s = encode_style(f, x)
    assert s.mean.shape == (2, 4, small_model.f_channels)
    assert s.std.shape == s.mean.shape
    assert (s.std > 0).all()
    s2 = encode_style(f, x)
    assert torch.equal(s.mean, s2.mean) and torch.equal(s.std, s2.std)


def test_translate_range_and_determinism(small_model):
    f = Translator(small_model)
    x = torch.rand(3, 3, 32, 32) * 2 - 1
    y = torch.rand(3, 3, 32, 32) * 2 - 1
    out = translate(f, x, y)
    assert out.shape == x.shape
    assert out.min() >= -1 and out.max() <= 1
    assert torch.equal(out, translate(f, x, y))


def test_translate_rejects_wrong_resolution(small_model):
    f = Translator(small_model)
    with pytest.raises(InvalidArgumentError):
        translate(f, torch.zeros(1, 3, 64, 64), torch.zeros(1, 3, 64, 64))
    with pytest.raises(InvalidArgumentError):
        encode_content(f, torch.zeros(1, 3, 16, 16))


def test_gradients_reach_every_block(small_model):
    f = Translator(small_model)
    x = torch.rand(2, 3, 32, 32) * 2 - 1
    y = torch.rand(2, 3, 32, 32) * 2 - 1
    (translate(f, x, y) * torch.randn(2, 3, 32, 32)).sum().backward()
    for part in (f.content_encoder, f.style_encoder, f.decoder):
        grads = [p.grad for p in part.parameters()]
        assert all(g is not None for g in grads)
        assert any(g.abs().sum() > 0 for g in grads)
