"""Dense array algebra used throughout the package.

Tensors are plain C-ordered numpy arrays. Double precision is the default;
single precision must be requested explicitly through ``as_tensor``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError

MAX_RANK = 8

_DTYPES = {"f64": np.float64, "f32": np.float32}


def as_tensor(x, dtype: str = "f64") -> np.ndarray:
    """Return an immutable row-major copy of ``x`` with rank 1..8."""
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}, got {dtype!r}")
    arr = np.array(x, dtype=_DTYPES[dtype], order="C", copy=True)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise DimensionError(f"tensor rank must be in 1..{MAX_RANK}, got {arr.ndim}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PatchSpec:
    """Number of patches along channel, height and width."""

    c: int
    h: int
    w: int

    def __post_init__(self):
        for name in ("c", "h", "w"):
            if int(getattr(self, name)) < 1:
                raise DimensionError(f"patch count {name} must be >= 1")

    def check(self, shape: Sequence[int]) -> None:
        if len(shape) != 4:
            raise DimensionError(f"expected a rank-4 C x T x H x W tensor, got shape {tuple(shape)}")
        C, _, H, W = shape
        for axis, size, n in (("C", C, self.c), ("H", H, self.h), ("W", W, self.w)):
            if size % n:
                raise DimensionError(f"axis {axis}={size} is not divisible by patch count {n}")

    def grid(self, T: int) -> tuple[int, int, int, int]:
        return (self.c, T, self.h, self.w)

    def content(self, shape: Sequence[int]) -> tuple[int, int, int]:
        C, _, H, W = shape
        return (C // self.c, H // self.h, W // self.w)


# (c, C/c, T, h, H/h, w, W/w) -> (c, T, h, w, C/c, H/h, W/w)
_PARTITION_AXES = (0, 2, 3, 5, 1, 4, 6)
_MERGE_AXES = tuple(int(i) for i in np.argsort(_PARTITION_AXES))


def patch_partition(x: np.ndarray, p: PatchSpec) -> np.ndarray:
    """Split a C x T x H x W tensor into a c x T x h x w grid of patches.

    The result has shape ``(c, T, h, w, C/c, H/h, W/w)``; the last three
    axes index the content of each patch.
    """
    x = np.asarray(x)
    p.check(x.shape)
    C, T, H, W = x.shape
    r, s, t = p.content(x.shape)
    blocks = x.reshape(p.c, r, T, p.h, s, p.w, t)
    return np.ascontiguousarray(blocks.transpose(_PARTITION_AXES))


def patch_merge(xp: np.ndarray, p: PatchSpec) -> np.ndarray:
    """Inverse of :func:`patch_partition`."""
    xp = np.asarray(xp)
    if xp.ndim != 7:
        raise DimensionError(f"expected a rank-7 patch tensor, got rank {xp.ndim}")
    c, T, h, w, r, s, t = xp.shape
    if (c, h, w) != (p.c, p.h, p.w):
        raise DimensionError(f"patch grid {(c, h, w)} does not match spec {(p.c, p.h, p.w)}")
    blocks = xp.transpose(_MERGE_AXES)
    return np.ascontiguousarray(blocks.reshape(c * r, T, h * s, w * t))


def contract(a: np.ndarray, b: np.ndarray, axes: Iterable[tuple[int, int]]) -> np.ndarray:
    """Sum of products over paired axes.

    Output axes are the unpaired axes of ``a`` followed by those of ``b``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    pairs = [(int(i), int(j)) for i, j in axes]
    for i, j in pairs:
        if a.shape[i] != b.shape[j]:
            raise DimensionError(
                f"cannot contract axis {i} (extent {a.shape[i]}) with axis {j} (extent {b.shape[j]})"
            )
    ia = [i for i, _ in pairs]
    ib = [j for _, j in pairs]
    return np.tensordot(a, b, axes=(ia, ib))


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def add(a, b):
    _same_shape(a, b)
    return np.add(a, b)


def sub(a, b):
    _same_shape(a, b)
    return np.subtract(a, b)


def mul(a, b):
    _same_shape(a, b)
    return np.multiply(a, b)


def scale(a, factor: float):
    return np.multiply(a, factor)


def broadcast_mul(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multiply ``x`` by ``m`` broadcast over the trailing axes of ``x``.

    ``m`` must equal the leading ``m.ndim`` extents of ``x``.
    """
    m = np.asarray(m)
    x = np.asarray(x)
    if x.shape[: m.ndim] != m.shape:
        raise DimensionError(f"map shape {m.shape} does not lead tensor shape {x.shape}")
    return m.reshape(m.shape + (1,) * (x.ndim - m.ndim)) * x


def reduce_sum(x: np.ndarray, axes: Sequence[int] | None = None):
    """Sum over ``axes``; over all axes the result is correctly rounded."""
    x = np.asarray(x)
    if axes is None:
        return math.fsum(x.ravel().tolist())
    return np.sum(x, axis=tuple(axes))


def reduce_mean(x: np.ndarray, axes: Sequence[int] | None = None):
    x = np.asarray(x)
    if axes is None:
        return reduce_sum(x) / x.size
    return np.mean(x, axis=tuple(axes))


def threshold(x: np.ndarray, t: float) -> np.ndarray:
    """Strict comparison ``x > t`` as a boolean map."""
    return np.asarray(x) > t


def permute(x: np.ndarray, order: Sequence[int]) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(x, order))
