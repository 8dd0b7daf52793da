import json

import numpy as np
import pytest
import torch
from PIL import Image

from pirgan import InvalidArgumentError
from pirgan.data import (
    ToySpec,
    emit_grid,
    generate_toy_domains,
    load_dataset,
    read_grid_cell,
    select_k_shot,
)
from pirgan.probes import DomainProbe


@pytest.fixture
def image_dir(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(10):
        arr = rng.integers(0, 256, size=(40, 50, 3), dtype=np.uint8)
        Image.fromarray(arr).save(tmp_path / f"img_{i:02d}.png")
    return tmp_path


def test_load_dataset_count_and_range(image_dir):
    ds = load_dataset(image_dir, 32)
    assert len(ds) == 10
    assert ds.images.shape == (10, 3, 32, 32)
    assert ds.images.min() >= -1 and ds.images.max() <= 1
    manifest = json.loads((image_dir / "manifest.json").read_text())
    assert len(manifest["files"]) == 10


def test_load_dataset_idempotent(image_dir):
    a = load_dataset(image_dir, 32)
    b = load_dataset(image_dir, 32)
    assert [m["sha256"] for m in a.manifest] == [m["sha256"] for m in b.manifest]
    assert torch.equal(a.images, b.images)


def test_pixel_range_mapping(tmp_path):
    arr = np.zeros((32, 32, 3), dtype=np.uint8)
    arr[:, 16:] = 255
    Image.fromarray(arr).save(tmp_path / "half.png")
    ds = load_dataset(tmp_path, 32)
    assert ds.images[0, :, :, 0].eq(-1.0).all()
    assert ds.images[0, :, :, -1].eq(1.0).all()


def test_load_dataset_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path, 32)
    (tmp_path / "broken.png").write_bytes(b"not an image")
    with pytest.warns(UserWarning), pytest.raises(InvalidArgumentError):
        load_dataset(tmp_path, 32)


def test_load_dataset_skips_broken(image_dir):
    (image_dir / "zz_broken.png").write_bytes(b"junk")
    with pytest.warns(UserWarning):
        ds = load_dataset(image_dir, 32, manifest_path=False)
    assert len(ds) == 10


def test_select_k_shot(toy_small):
    _, target = toy_small
    full = select_k_shot(target, len(target), 0)
    assert full.k_shot_indices == list(range(len(target)))
    assert select_k_shot(target, 5, 3).k_shot_indices == select_k_shot(target, 5, 3).k_shot_indices
    with pytest.raises(InvalidArgumentError):
        select_k_shot(target, len(target) + 1, 0)


def test_select_one_shot_varies_with_seed(toy_small):
    _, target = toy_small
    ten = select_k_shot(target, 10, 0)
    ten = type(ten)(ten.k_shot_images, "ten", ten.manifest[:10])
    picks = {tuple(select_k_shot(ten, 1, seed).k_shot_indices) for seed in range(20)}
    assert len(picks) >= 5


def test_toy_domains_deterministic_and_paired():
    spec = ToySpec(n_source=20, n_target=10, seed=5)
    s1, t1 = generate_toy_domains(spec)
    s2, t2 = generate_toy_domains(spec)
    assert torch.equal(s1.images, s2.images) and torch.equal(t1.images, t2.images)
    for i in range(10):
        assert s1.manifest[i]["content"] == t1.manifest[i]["content"]
    assert len(s1) == 20 and len(t1) == 10


def test_toy_default_sizes():
    spec = ToySpec()
    assert spec.n_source >= 2000


def test_toy_domains_linearly_separable():
    source, target = generate_toy_domains(ToySpec(n_source=300, n_target=300, seed=1))
    X = torch.cat([source.images, target.images])
    y = np.r_[np.zeros(300), np.ones(300)]
    idx = np.random.default_rng(0).permutation(600)
    train, test = idx[:400], idx[400:]
    probe = DomainProbe().fit(X[train], y[train])
    assert probe.score(X[test], y[test]) >= 0.95


def test_emit_grid_layout_and_round_trip(tmp_path):
    imgs = torch.rand(4, 3, 32, 32) * 2 - 1
    path = emit_grid(imgs, 2, 2, tmp_path / "g.png")
    with Image.open(path) as im:
        assert im.size == (64, 64)
    cell = read_grid_cell(path, 1, 0, 32)
    assert (cell - imgs[2]).abs().max().item() <= 1 / 127


def test_emit_grid_errors(tmp_path):
    with pytest.raises(InvalidArgumentError):
        emit_grid(torch.zeros(0, 3, 32, 32), 1, 1, tmp_path / "x.png")
    with pytest.raises(InvalidArgumentError):
        emit_grid(torch.zeros(5, 3, 32, 32), 2, 2, tmp_path / "x.png")
