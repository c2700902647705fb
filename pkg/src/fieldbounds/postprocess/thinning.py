"""Guo-Hall thinning and the refined extent threshold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import ConfigError, DimensionError

# 3 x 3 cross; a 1 x 1 kernel would leave the skeleton unchanged
CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class ThresholdPair:
    t_b: float
    t_e: float

    def __post_init__(self):
        for name in ("t_b", "t_e"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie strictly inside (0, 1), got {v}")

    def as_tuple(self):
        return (self.t_b, self.t_e)


DEFAULT_THRESHOLDS = ThresholdPair(0.2, 0.4)


def _guo_hall_pass(img: np.ndarray, odd: bool) -> np.ndarray:
    """Pixels removable in one sub-iteration; ``img`` is zero-padded by one."""
    p2 = img[:-2, 1:-1]
    p3 = img[:-2, 2:]
    p4 = img[1:-1, 2:]
    p5 = img[2:, 2:]
    p6 = img[2:, 1:-1]
    p7 = img[2:, :-2]
    p8 = img[1:-1, :-2]
    p9 = img[:-2, :-2]
    C = ((~p2 & (p3 | p4)).astype(np.uint8) + (~p4 & (p5 | p6)) + (~p6 & (p7 | p8))
         + (~p8 & (p9 | p2)))
    N1 = (p9 | p2).astype(np.uint8) + (p3 | p4) + (p5 | p6) + (p7 | p8)
    N2 = (p2 | p3).astype(np.uint8) + (p4 | p5) + (p6 | p7) + (p8 | p9)
    N = np.minimum(N1, N2)
    if odd:
        m = (p2 | p3 | ~p5) & p4
    else:
        m = (p6 | p7 | ~p9) & p8
    return img[1:-1, 1:-1] & (C == 1) & (N >= 2) & (N <= 3) & ~m


def thin(mask) -> np.ndarray:
    """Guo-Hall skeleton of a binary map (8-connected, idempotent)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DimensionError(f"thin expects a 2-D mask, got shape {mask.shape}")
    img = np.pad(mask, 1)
    while True:
        changed = False
        for odd in (False, True):
            drop = _guo_hall_pass(img, odd)
            if drop.any():
                img[1:-1, 1:-1] &= ~drop
                changed = True
        if not changed:
            return img[1:-1, 1:-1].copy()


def boundary_mask(b, t_b: float) -> np.ndarray:
    """Thresholded, thinned and cross-dilated boundary map."""
    return ndimage.binary_dilation(thin(np.asarray(b) > t_b), structure=CROSS)


def refined_threshold(e, b, t: ThresholdPair = DEFAULT_THRESHOLDS, bmask=None) -> np.ndarray:
    """Extent intersected with the complement of the thinned boundaries.

    ``bmask`` may carry a precomputed :func:`boundary_mask` for ``t.t_b``.
    """
    e = np.asarray(e, dtype=np.float64)
    if bmask is None:
        if np.shape(b) != e.shape:
            raise DimensionError(f"extent {e.shape} and boundary {np.shape(b)} differ")
        bmask = boundary_mask(b, t.t_b)
    return e * (1.0 - bmask) > t.t_e
