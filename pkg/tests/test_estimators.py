import numpy as np
import pytest
import torch
from sklearn.base import clone

from pirgan import InvalidConfigError
from pirgan.estimators import PIRAdapter, SourceGAN
from pirgan.models import Generator


def test_get_params_round_trip():
    est = PIRAdapter(iterations=3, lambda1=0.5)
    params = est.get_params()
    assert params["iterations"] == 3 and params["lambda1"] == 0.5
    assert clone(est).get_params()["lambda1"] == 0.5
    est.set_params(recon_direction="source_only")
    assert est.to_config().loss.recon_direction == "source_only"


def test_fit_sample_transform(small_model, toy_small):
    _, target = toy_small
    g = Generator(small_model)
    est = PIRAdapter(source_generator=g, iterations=2, batch_size=4, k_shot=5)
    assert est.fit(target.images[:5]) is est
    samples = est.sample(6, seed=1)
    assert samples.shape == (6, 3, 32, 32)
    out = est.transform(target.images[:3].numpy())
    assert out.shape == (3, 3, 32, 32) and out.abs().max() <= 1
    assert len(est.history_) == 2


def test_fit_requires_generator(toy_small):
    with pytest.raises(InvalidConfigError):
        PIRAdapter().fit(toy_small[1].images[:10])


def test_baseline_has_no_transform(small_model, toy_small):
    est = PIRAdapter(source_generator=Generator(small_model), iterations=1, batch_size=2, k_shot=3,
                     baseline_mode=True).fit(toy_small[1].images[:3])
    with pytest.raises(InvalidConfigError):
        est.transform(toy_small[1].images[:1])


def test_source_gan_fit(toy_small):
    src, _ = toy_small
    est = SourceGAN(z_dim=8, g_channels=8, d_channels=8, iterations=2, batch_size=4)
    est.fit(src.images)
    assert est.sample(3).shape == (3, 3, 32, 32)
