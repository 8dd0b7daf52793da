"""Input validation helpers and the package's exception types."""

import numpy as np
import torch


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class InvalidConfigError(ValueError):
    """A configuration is inconsistent or incomplete."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (non-finite result, failed factorization)."""


class TrainingAborted(RuntimeError):
    """A training iteration produced a non-finite loss.

    ``snapshot`` holds the diagnostic values captured at the moment of failure.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


def as_image_batch(x, resolution=None, name="images"):
    """Coerce ``x`` to a float32 tensor of shape (N, 3, R, R).

    Accepts a single (3, R, R) image, a batch, a numpy array or a tensor.
    Raises ``InvalidArgumentError`` on wrong rank, channel count, resolution
    or non-finite entries.
    """
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.ascontiguousarray(x))
    if not isinstance(x, torch.Tensor):
        try:
            x = torch.as_tensor(np.asarray(x))
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"{name}: cannot convert to a tensor") from exc
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4:
        raise InvalidArgumentError(f"{name}: expected (N, 3, H, W), got shape {tuple(x.shape)}")
    if x.shape[0] == 0:
        raise InvalidArgumentError(f"{name}: empty batch")
    if x.shape[1] != 3:
        raise InvalidArgumentError(f"{name}: expected 3 channels, got {x.shape[1]}")
    if x.shape[2] != x.shape[3]:
        raise InvalidArgumentError(f"{name}: images must be square, got {tuple(x.shape[2:])}")
    if resolution is not None and x.shape[2] != resolution:
        raise InvalidArgumentError(
            f"{name}: resolution {x.shape[2]} does not match configured {resolution}"
        )
    if not x.is_floating_point():
        x = x.float()
    if not torch.isfinite(x).all():
        raise InvalidArgumentError(f"{name}: non-finite entries")
    return x


def check_same_shape(a, b, names=("a", "b")):
    if a.shape[1:] != b.shape[1:]:
        raise InvalidArgumentError(
            f"{names[0]} and {names[1]} differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}"
        )


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise InvalidArgumentError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
