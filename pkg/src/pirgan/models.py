"""Miniature style-based generator, dual-head discriminator and checkpoint I/O.

The generator keeps the structure the adaptation method relies on (mapping
network, modulated/demodulated convolutions, per-resolution RGB skips) at a
size that trains on a CPU in minutes.
"""

import copy
import hashlib
import math
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from ._validation import InvalidArgumentError, as_image_batch, check_positive_int
from .config import ModelConfig, TrainingConfig

SCHEMA_VERSION = 1


class EqualizedLinear(nn.Module):
    def __init__(self, in_features, out_features, bias=0.0, lr_mul=1.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_features, in_features) / lr_mul)
        self.bias = nn.Parameter(torch.full((out_features,), float(bias)))
        self.scale = lr_mul / math.sqrt(in_features)
        self.lr_mul = lr_mul

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias * self.lr_mul)


class EqualizedConv2d(nn.Module):
    def __init__(self, in_channels, out_channels, kernel_size, bias=True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels)) if bias else None
        self.scale = 1.0 / math.sqrt(in_channels * kernel_size**2)
        self.padding = kernel_size // 2

    def forward(self, x):
        return F.conv2d(x, self.weight * self.scale, self.bias, padding=self.padding)


class ModulatedConv2d(nn.Module):
    """Convolution whose weights are scaled per input channel by a style vector.

    With ``demodulate`` the scaled weights are renormalized per output channel,
    which replaces explicit instance normalization of the activations.
    """

    def __init__(self, w_dim, in_channels, out_channels, kernel_size, demodulate=True):
        super().__init__()
        self.affine = EqualizedLinear(w_dim, in_channels, bias=1.0)
        self.weight = nn.Parameter(torch.randn(out_channels, in_channels, kernel_size, kernel_size))
        self.scale = 1.0 / math.sqrt(in_channels * kernel_size**2)
        self.demodulate = demodulate
        self.padding = kernel_size // 2
        self.eps = 1e-8

    def forward(self, x, w):
        # scale activations instead of building per-sample weights; same result
        # as a grouped convolution with modulated kernels, cheaper on CPU
        s = self.affine(w)
        weight = self.weight * self.scale
        x = F.conv2d(x * s[:, :, None, None], weight, padding=self.padding)
        if self.demodulate:
            w2 = weight.pow(2).sum(dim=(2, 3))
            d = torch.rsqrt(s.pow(2) @ w2.t() + self.eps)
            x = x * d[:, :, None, None]
        return x


class SynthesisLayer(nn.Module):
    def __init__(self, w_dim, in_channels, out_channels, resolution, noise_seed, upsample):
        super().__init__()
        self.upsample = upsample
        self.conv = ModulatedConv2d(w_dim, in_channels, out_channels, 3)
        self.bias = nn.Parameter(torch.zeros(out_channels))
        self.noise_strength = nn.Parameter(torch.zeros(()))
        # fixed noise keeps generation a pure function of (weights, z)
        gen = torch.Generator().manual_seed(noise_seed)
        self.register_buffer("noise", torch.randn(1, 1, resolution, resolution, generator=gen))

    def forward(self, x, w):
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x, w)
        x = x + self.noise_strength * self.noise
        return F.leaky_relu(x + self.bias[None, :, None, None], 0.2) * math.sqrt(2)


class ToRGB(nn.Module):
    def __init__(self, w_dim, in_channels):
        super().__init__()
        self.conv = ModulatedConv2d(w_dim, in_channels, 3, 1, demodulate=False)
        self.bias = nn.Parameter(torch.zeros(3))

    def forward(self, x, w):
        return self.conv(x, w) + self.bias[None, :, None, None]


class MappingNetwork(nn.Module):
    def __init__(self, z_dim, n_layers, lr_mul=0.01):
        super().__init__()
        self.layers = nn.ModuleList(
            EqualizedLinear(z_dim, z_dim, lr_mul=lr_mul) for _ in range(n_layers)
        )

    def forward(self, z):
        x = z * torch.rsqrt(z.pow(2).mean(dim=1, keepdim=True) + 1e-8)
        for layer in self.layers:
            x = F.leaky_relu(layer(x), 0.2) * math.sqrt(2)
        return x


class Generator(nn.Module):
    """Style-based generator: z -> mapping MLP -> w -> 4 modulated conv blocks.

    Synthesis starts from a learned constant at resolution/8 and doubles the
    spatial size three times; each block contributes an RGB skip. Output is
    squashed with tanh into [-1, 1].
    """

    n_blocks = 4

    def __init__(self, config=None):
        super().__init__()
        config = config or ModelConfig()
        self.config = config
        self.z_dim = config.z_dim
        self.resolution = config.resolution
        c = config.g_channels
        start = config.resolution // 2 ** (self.n_blocks - 1)
        self.mapping = MappingNetwork(config.z_dim, config.mapping_layers)
        self.const = nn.Parameter(torch.randn(1, c, start, start))
        self.layers = nn.ModuleList()
        self.to_rgbs = nn.ModuleList()
        channels = [c, c, c, max(c // 2, 1)]
        in_c = c
        for i, out_c in enumerate(channels):
            res = start * 2**i
            self.layers.append(
                SynthesisLayer(config.z_dim, in_c, out_c, res, config.noise_seed + i, upsample=i > 0)
            )
            self.to_rgbs.append(ToRGB(config.z_dim, out_c))
            in_c = out_c

    def forward(self, z):
        w = self.mapping(z)
        x = self.const.expand(z.shape[0], -1, -1, -1)
        rgb = None
        for layer, to_rgb in zip(self.layers, self.to_rgbs):
            x = layer(x, w)
            y = to_rgb(x, w)
            if rgb is not None:
                rgb = F.interpolate(rgb, scale_factor=2, mode="bilinear", align_corners=False)
                y = y + rgb
            rgb = y
        return torch.tanh(rgb)


class Discriminator(nn.Module):
    """Convolutional discriminator with an image-level and a patch-level head.

    The patch head is a 1x1 convolution on the shared trunk at a quarter of the
    input resolution; the image head continues the trunk down to 4x4.
    """

    def __init__(self, config=None):
        super().__init__()
        config = config or ModelConfig()
        self.config = config
        self.resolution = config.resolution
        c = config.d_channels
        self.from_rgb = EqualizedConv2d(3, c, 1)
        self.down_to_patch = nn.ModuleList(
            [EqualizedConv2d(c, c, 3), EqualizedConv2d(c, 2 * c, 3)]
        )
        self.patch_head = EqualizedConv2d(2 * c, 1, 1)
        tail = []
        res = config.resolution // 4
        ch = 2 * c
        while res > 4:
            tail.append(EqualizedConv2d(ch, 2 * c, 3))
            ch = 2 * c
            res //= 2
        self.tail = nn.ModuleList(tail)
        self.final_conv = EqualizedConv2d(ch, ch, 3)
        self.fc = EqualizedLinear(ch * 16, ch)
        self.out = EqualizedLinear(ch, 1)

    @staticmethod
    def _block(conv, x):
        x = F.leaky_relu(conv(x), 0.2) * math.sqrt(2)
        return F.avg_pool2d(x, 2)

    def forward(self, x):
        x = F.leaky_relu(self.from_rgb(x), 0.2) * math.sqrt(2)
        for conv in self.down_to_patch:
            x = self._block(conv, x)
        patch = self.patch_head(x).squeeze(1)
        for conv in self.tail:
            x = self._block(conv, x)
        x = F.leaky_relu(self.final_conv(x), 0.2) * math.sqrt(2)
        x = F.leaky_relu(self.fc(x.flatten(1)), 0.2) * math.sqrt(2)
        return self.out(x).squeeze(1), patch


def sample_latent(n, seed, z_dim=128):
    """Draw ``n`` standard-normal latent codes; the same seed gives the same batch."""
    n = check_positive_int(n, "n")
    if z_dim is None:
        raise InvalidArgumentError("z_dim is unset")
    z_dim = check_positive_int(z_dim, "z_dim")
    gen = torch.Generator().manual_seed(int(seed))
    return torch.randn(n, z_dim, generator=gen)


def _check_latent(g, z):
    if not isinstance(z, torch.Tensor):
        z = torch.as_tensor(z, dtype=torch.float32)
    if z.dim() == 1:
        z = z.unsqueeze(0)
    if z.dim() != 2 or z.shape[1] != g.z_dim:
        raise InvalidArgumentError(
            f"latent codes must have shape (N, {g.z_dim}), got {tuple(z.shape)}"
        )
    return z.to(next(g.parameters()).dtype)


def generate(g, z):
    """Run ``g`` on latent codes ``z``; gradients flow if ``g`` is trainable."""
    return g(_check_latent(g, z))


def clone_source_to_target(g_s):
    """Deep-copy the source generator into a trainable target generator."""
    g_t = copy.deepcopy(g_s)
    g_t.requires_grad_(True)
    g_t.train()
    return g_t


def freeze(module):
    module.requires_grad_(False)
    module.eval()
    return module


def discriminate(d, img):
    img = as_image_batch(img, d.resolution, name="img")
    return d(img.to(next(d.parameters()).dtype))


def parameter_checksum(module):
    """SHA-256 over every parameter and buffer, in sorted name order."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(path, modules, config, extra=None):
    """Write one archive: tensors keyed ``<namespace>.<param>``, schema version, config."""
    tensors = {}
    for namespace, module in modules.items():
        if module is None:
            continue
        for key, value in module.state_dict().items():
            tensors[f"{namespace}.{key}"] = value.detach().cpu().clone()
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict() if isinstance(config, TrainingConfig) else dict(config),
        "tensors": tensors,
    }
    if extra:
        payload.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InvalidArgumentError(f"unsupported checkpoint schema version {version}")
    payload["config"] = TrainingConfig.from_dict(payload["config"])
    return payload


def namespace_state(tensors, namespace):
    prefix = namespace + "."
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


def load_generator(path, namespace="g_t"):
    """Rebuild a generator stored under ``namespace`` in a checkpoint."""
    payload = load_checkpoint(path)
    state = namespace_state(payload["tensors"], namespace)
    if not state:
        raise InvalidArgumentError(f"checkpoint {path} has no '{namespace}' tensors")
    g = Generator(payload["config"].model)
    g.load_state_dict(state)
    return g
