"""Sentinel-1 style preprocessing and dual-pol entropy/alpha decomposition.

S1 stacks are 5 x T x H x W arrays with the band order
``[alpha_deg, anisotropy, entropy, VH, VV]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateBandError, DegenerateSampleError, DimensionError, FormatError
from .loss_metrics import MultitaskPrediction

S1_BANDS = ("alpha", "anisotropy", "entropy", "VH", "VV")
SYMLOG_EPS = 1e-5
HERMITIAN_TOL = 1e-12


def symlog(x, epsilon: float = SYMLOG_EPS):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log(np.abs(x) + epsilon)


@dataclass
class S1Stack:
    bands: np.ndarray
    transformed: bool = False

    def __post_init__(self):
        self.bands = np.asarray(self.bands, dtype=np.float64)
        if self.bands.ndim != 4 or self.bands.shape[0] != len(S1_BANDS):
            raise FormatError(f"S1 stack must be 5 x T x H x W {S1_BANDS}, got {self.bands.shape}")


def transform_s1(stack: S1Stack) -> S1Stack:
    """Degrees to radians on the angle band, symlog on VH and VV."""
    if stack.transformed:
        raise FormatError("S1 stack is already transformed")
    out = stack.bands.copy()
    out[0] = out[0] * np.pi / 180.0
    for c in (-2, -1):
        out[c] = symlog(out[c])
    return S1Stack(out, transformed=True)


@dataclass
class BandStats:
    mean: np.ndarray
    std: np.ndarray = field(repr=False)


def band_stats(x) -> BandStats:
    x = np.asarray(x, dtype=np.float64)
    axes = tuple(range(1, x.ndim))
    return BandStats(x.mean(axis=axes), x.std(axis=axes))


def standardize(x, stats: BandStats | None = None):
    """Per-band zero mean / unit variance.

    Returns ``(standardized, stats)``; when ``stats`` is omitted it is
    computed from ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if stats is None:
        stats = band_stats(x)
    mean = np.asarray(stats.mean, dtype=np.float64)
    std = np.asarray(stats.std, dtype=np.float64)
    if mean.shape != (x.shape[0],) or std.shape != (x.shape[0],):
        raise DimensionError(f"stats for {mean.shape} bands, data has {x.shape[0]}")
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        raise DegenerateBandError(f"band(s) {bad.tolist()} have zero standard deviation")
    shape = (-1,) + (1,) * (x.ndim - 1)
    return (x - mean.reshape(shape)) / std.reshape(shape), stats


def unstandardize(z, stats: BandStats):
    z = np.asarray(z, dtype=np.float64)
    shape = (-1,) + (1,) * (z.ndim - 1)
    return z * np.asarray(stats.std).reshape(shape) + np.asarray(stats.mean).reshape(shape)


class Chip(NamedTuple):
    data: np.ndarray
    row: int
    col: int


def extract_chips(x, size: int = 128, stride: int = 128) -> list[Chip]:
    """Cut a grid of ``size`` x ``size`` windows; partial margins are dropped."""
    x = np.asarray(x)
    H, W = x.shape[-2:]
    if H < size or W < size:
        raise DimensionError(f"input {H}x{W} is smaller than chip size {size}")
    return [Chip(x[..., r:r + size, c:c + size].copy(), r, c)
            for r in range(0, H - size + 1, stride)
            for c in range(0, W - size + 1, stride)]


FLIP_MODES = ("none", "h", "v", "hv")


def _flip(a, mode):
    if mode in ("h", "hv"):
        a = a[..., :, ::-1]
    if mode in ("v", "hv"):
        a = a[..., ::-1, :]
    return np.ascontiguousarray(a)


def flip_augment(x, mode: str, label: MultitaskPrediction):
    """Apply the same horizontal and/or vertical flip to inputs and labels."""
    if mode not in FLIP_MODES:
        raise ConfigError(f"flip mode must be one of {FLIP_MODES}")
    x = np.asarray(x)
    if x.shape[-2:] != label.shape:
        raise DimensionError(f"input {x.shape[-2:]} and label {label.shape} differ")
    return _flip(x, mode), MultitaskPrediction(*(_flip(a, mode) for a in label.layers()))


# --- dual-pol decomposition --------------------------------------------------

class DualPol(NamedTuple):
    alpha: np.ndarray
    entropy: np.ndarray
    anisotropy: np.ndarray


def _check_hermitian(J):
    if J.shape[-2:] != (2, 2):
        raise FormatError(f"coherency samples must be 2 x 2, got {J.shape[-2:]}")
    scale = np.maximum(1.0, np.abs(J).max(axis=(-2, -1)))
    err = np.abs(J - np.conj(np.swapaxes(J, -1, -2))).max(axis=(-2, -1))
    if np.any(err > HERMITIAN_TOL * scale):
        raise FormatError("coherency matrix is not Hermitian")


def dualpol_decompose(J) -> DualPol:
    """Entropy / alpha / anisotropy of 2 x 2 wave coherency matrices.

    ``J`` has shape ``(..., 2, 2)``. Entropy uses base-2 logarithms so it
    lies in [0, 1]; alpha is in radians.
    """
    J = np.asarray(J, dtype=np.complex128)
    _check_hermitian(J)
    trace = (J[..., 0, 0] + J[..., 1, 1]).real
    if np.any(~(trace > 0)):
        raise DegenerateSampleError("coherency matrix has zero trace")
    # symmetrise so eigh sees an exactly Hermitian input
    Jh = 0.5 * (J + np.conj(np.swapaxes(J, -1, -2)))
    lam, vec = np.linalg.eigh(Jh)
    lam = np.clip(lam[..., ::-1], 0.0, None)  # descending, clamp round-off
    total = lam.sum(axis=-1)
    P = lam / total[..., None]
    u1 = vec[..., :, 1]
    alpha = np.arccos(np.clip(np.abs(u1[..., 0]), 0.0, 1.0))
    p1, p2 = P[..., 0], P[..., 1]
    alpha_bar = alpha * (p1 - p2) + p2 * np.pi / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(P > 0, P * np.log2(np.where(P > 0, P, 1.0)), 0.0)
    entropy = -plogp.sum(axis=-1)
    anisotropy = (lam[..., 0] - lam[..., 1]) / total
    return DualPol(alpha_bar, np.clip(entropy, 0.0, 1.0), anisotropy)


def coherency_from_channels(x) -> np.ndarray:
    """Rebuild complex 2 x 2 matrices from 8 real channels.

    Channel order: Re/Im of J_xx, J_xy, J_yx, J_yy.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != 8:
        raise FormatError(f"expected 8 real channels, got {x.shape[0]}")
    z = x[0::2] + 1j * x[1::2]
    return np.moveaxis(z, 0, -1).reshape(x.shape[1:] + (2, 2))


def coherency_to_channels(J) -> np.ndarray:
    J = np.asarray(J, dtype=np.complex128)
    z = np.moveaxis(J.reshape(J.shape[:-2] + (4,)), -1, 0)
    out = np.empty((8,) + z.shape[1:])
    out[0::2] = z.real
    out[1::2] = z.imag
    return out
