"""Shared value types: tactile images, actions, and the arithmetic on them.

A tactile image is a float32 ndarray of shape (H, W, C) with every element in
[0, 1]. An action is a float ndarray of shape (3,) holding finger-position
deltas (dx, dy, dz) in millimetres, clamped to +/- ACTION_LIMIT_MM. Both are
plain arrays rather than wrapper classes so they compose directly with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError

# Finger-position delta bound per axis, in mm.
ACTION_LIMIT_MM = 6.0

# Default sensor resolution: height, width, channels.
DEFAULT_IMAGE_SHAPE = (48, 64, 3)


def as_image(data, shape=None) -> np.ndarray:
    """Validate ``data`` as a tactile image and return it as float32.

    Raises DimensionError if the array is not (H, W, C) or does not match
    ``shape`` when given; raises InvalidInputError if any element is
    non-finite or outside [0, 1].
    """
    img = np.asarray(data, dtype=np.float32)
    if img.ndim != 3:
        raise DimensionError(f"image must be (H, W, C), got shape {img.shape}")
    if shape is not None and tuple(img.shape) != tuple(shape):
        raise DimensionError(f"image shape {img.shape} != expected {tuple(shape)}")
    if not np.all(np.isfinite(img)):
        raise InvalidInputError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InvalidInputError("image intensities must lie in [0, 1]")
    return img


def image_ok(img: np.ndarray, shape=None) -> bool:
    """True iff ``img`` satisfies the tactile-image invariants."""
    try:
        as_image(img, shape)
        return True
    except (DimensionError, InvalidInputError):
        return False


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error over all H*W*C elements of two same-shape images."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def clamp_action(raw) -> np.ndarray:
    """Clip a raw 3-vector of mm deltas to the +/- ACTION_LIMIT_MM box."""
    a = np.asarray(raw, dtype=np.float64)
    if a.shape != (3,):
        raise InvalidInputError(f"action must be a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("action components must be finite")
    return np.clip(a, -ACTION_LIMIT_MM, ACTION_LIMIT_MM)


def expand_repeats(plan, repeat: int) -> np.ndarray:
    """Expand K planned actions into a (K*repeat, 3) sequence of step actions.

    Block i of the result holds plan[i] repeated ``repeat`` times.
    """
    plan = np.asarray(plan, dtype=np.float64)
    if plan.ndim != 2 or plan.shape[1] != 3 or plan.shape[0] == 0:
        raise InvalidInputError(f"plan must be (K, 3) with K >= 1, got {plan.shape}")
    if repeat < 1:
        raise InvalidInputError(f"repeat must be >= 1, got {repeat}")
    return np.repeat(plan, repeat, axis=0)


@dataclass(frozen=True)
class GoalSpec:
    """A goal tactile image plus the environment it was produced for."""

    image: np.ndarray
    env_tag: str

    def __post_init__(self):
        object.__setattr__(self, "image", as_image(self.image))
