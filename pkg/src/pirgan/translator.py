"""Content/style translation network recombining codes through AdaIN."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ._validation import InvalidArgumentError, as_image_batch
from .config import ModelConfig

ADAIN_EPS = 1e-5


def channel_stats(x, eps=ADAIN_EPS):
    """Per-sample, per-channel spatial mean and stabilized std of (N, C, H, W)."""
    flat = x.flatten(2)
    mean = flat.mean(dim=2)
    var = flat.var(dim=2, unbiased=False)
    return mean, torch.sqrt(var + eps)


def adain(content_features, style_stats, eps=ADAIN_EPS):
    """Renormalize each channel of ``content_features`` to the requested moments.

    ``style_stats`` is a ``(mean, std)`` pair of shape (N, C) or (C,). For every
    channel the output is ``std * (x - mu) / sigma + mean`` where ``mu`` and
    ``sigma = sqrt(var + eps)`` are the content channel's spatial statistics.
    """
    x = content_features
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4:
        raise InvalidArgumentError(f"content features must be (N, C, H, W), got {tuple(x.shape)}")
    if x.shape[2] * x.shape[3] < 2:
        raise InvalidArgumentError("content features need at least 2 spatial elements")
    mean, std = style_stats
    mean = torch.as_tensor(mean, dtype=x.dtype)
    std = torch.as_tensor(std, dtype=x.dtype)
    if mean.dim() == 1:
        mean, std = mean.expand(x.shape[0], -1), std.expand(x.shape[0], -1)
    if mean.shape != (x.shape[0], x.shape[1]) or std.shape != mean.shape:
        raise InvalidArgumentError(
            f"style stats of shape {tuple(mean.shape)} do not match {x.shape[1]} content channels"
        )
    mu, sigma = channel_stats(x, eps)
    normalized = (x - mu[..., None, None]) / sigma[..., None, None]
    out = std[..., None, None] * normalized + mean[..., None, None]
    return out if content_features.dim() == 4 else out.squeeze(0)


@dataclass
class StyleCode:
    """Per-AdaIN-layer channel moments plus the pooled embedding they came from.

    ``mean`` and ``std`` have shape (N, n_layers, C); ``embedding`` (N, E).
    """

    mean: torch.Tensor
    std: torch.Tensor
    embedding: torch.Tensor

    def layer(self, i):
        return self.mean[:, i], self.std[:, i]


def _conv_block(in_c, out_c, stride, norm):
    layers = [nn.Conv2d(in_c, out_c, 3, stride=stride, padding=1)]
    if norm:
        layers.append(nn.InstanceNorm2d(out_c, affine=False))
    layers.append(nn.ReLU())
    return layers


class ContentEncoder(nn.Module):
    # instance norm after every conv strips per-image channel statistics
    def __init__(self, channels):
        super().__init__()
        c = channels
        self.net = nn.Sequential(
            *_conv_block(3, c // 2, 1, True),
            *_conv_block(c // 2, c, 2, True),
            *_conv_block(c, c, 2, True),
        )

    def forward(self, x):
        return self.net(x)


class StyleEncoder(nn.Module):
    def __init__(self, channels, n_layers, embed_dim=64):
        super().__init__()
        c = channels
        self.n_layers = n_layers
        self.channels = c
        self.net = nn.Sequential(
            *_conv_block(3, c // 2, 2, False),
            *_conv_block(c // 2, c, 2, False),
            *_conv_block(c, c, 2, False),
            *_conv_block(c, c, 1, False),
        )
        self.embed = nn.Linear(c, embed_dim)
        self.to_moments = nn.Sequential(
            nn.ReLU(), nn.Linear(embed_dim, embed_dim), nn.ReLU(),
            nn.Linear(embed_dim, 2 * n_layers * c),
        )

    def forward(self, y):
        pooled = self.net(y).mean(dim=(2, 3))
        emb = self.embed(pooled)
        raw = self.to_moments(emb).view(-1, 2, self.n_layers, self.channels)
        mean = raw[:, 0]
        std = torch.sqrt(F.softplus(raw[:, 1] + 0.5413) + ADAIN_EPS)
        return StyleCode(mean=mean, std=std, embedding=emb)


class AdaINResBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x, stats1, stats2):
        h = F.relu(adain(self.conv1(x), stats1))
        h = adain(self.conv2(h), stats2)
        return x + h


class Decoder(nn.Module):
    """Two AdaIN residual blocks, then two upsample+conv stages and a tanh head."""

    n_adain_layers = 4

    def __init__(self, channels):
        super().__init__()
        c = channels
        self.res = nn.ModuleList([AdaINResBlock(c), AdaINResBlock(c)])
        self.up1 = nn.Conv2d(c, c // 2, 3, padding=1)
        self.up2 = nn.Conv2d(c // 2, c // 4, 3, padding=1)
        self.to_rgb = nn.Conv2d(c // 4, 3, 3, padding=1)

    def forward(self, content, style):
        x = content
        for i, block in enumerate(self.res):
            x = block(x, style.layer(2 * i), style.layer(2 * i + 1))
        x = F.relu(self.up1(F.interpolate(x, scale_factor=2, mode="nearest")))
        x = F.relu(self.up2(F.interpolate(x, scale_factor=2, mode="nearest")))
        return torch.tanh(self.to_rgb(x))


class Translator(nn.Module):
    """Recombines the content of one image with the style of another.

    ``forward(content_img, style_img)`` returns ``Dec(E_C(content_img), E_S(style_img))``.
    """

    def __init__(self, config=None):
        super().__init__()
        config = config or ModelConfig()
        self.config = config
        self.resolution = config.resolution
        self.content_encoder = ContentEncoder(config.f_channels)
        self.style_encoder = StyleEncoder(config.f_channels, Decoder.n_adain_layers)
        self.decoder = Decoder(config.f_channels)

    def forward(self, content_img, style_img):
        return self.decoder(self.content_encoder(content_img), self.style_encoder(style_img))


def _prepare(f, img, name):
    img = as_image_batch(img, f.resolution, name=name)
    return img.to(next(f.parameters()).dtype)


def encode_content(f, x):
    """Spatial content code of shape (N, C, R/4, R/4)."""
    return f.content_encoder(_prepare(f, x, "x"))


def encode_style(f, y):
    return f.style_encoder(_prepare(f, y, "y"))


def translate(f, content_img, style_img):
    x = _prepare(f, content_img, "content_img")
    y = _prepare(f, style_img, "style_img")
    if x.shape[0] != y.shape[0]:
        if y.shape[0] == 1:
            y = y.expand(x.shape[0], -1, -1, -1)
        else:
            raise InvalidArgumentError(
                f"batch sizes differ: {x.shape[0]} content vs {y.shape[0]} style images"
            )
    return f(x, y)
