"""Seeded synthetic field mosaics and image time series.

Scenes are Voronoi mosaics. Every cell is a field unless ``n_background``
extra non-field cells are requested. Randomness is split into independent
streams (fields, optical, clouds, SAR) so that changing the cloud settings
never alters the SAR stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .loss_metrics import MultitaskPrediction

OPTICAL_NOISE = 0.02


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    H: int = 64
    W: int = 64
    n_fields: int = 6
    T: int = 4
    cloud_fraction: float = 0.0
    cloud_speed_px: float = 8.0
    speckle_looks: int = 4
    n_background: int = 0

    def __post_init__(self):
        if self.n_fields < 1:
            raise ConfigError("n_fields must be >= 1")
        if self.H < 64 or self.W < 64:
            raise ConfigError("scenes must be at least 64 x 64")
        if not 0.0 <= self.cloud_fraction < 1.0:
            raise ConfigError("cloud_fraction must lie in [0, 1)")
        if self.speckle_looks < 1:
            raise ConfigError("speckle_looks must be >= 1")


def _streams(seed: int):
    names = ("fields", "optical", "clouds", "sar")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, children)}


def _sites(rng, n, H, W):
    """Sites spread by best-candidate sampling so cells stay compact."""
    pts = [rng.uniform((0, 0), (H, W))]
    while len(pts) < n:
        cand = rng.uniform((0, 0), (H, W), size=(12, 2))
        d = np.min(np.linalg.norm(cand[:, None] - np.array(pts)[None], axis=2), axis=1)
        pts.append(cand[np.argmax(d)])
    return np.array(pts)


def boundary_from_labels(labels: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighbourhood holds at least two distinct labels."""
    lab = np.pad(labels, 1, mode="edge")
    c = lab[1:-1, 1:-1]
    diff = np.zeros(labels.shape, bool)
    for sl in ((slice(None, -2), slice(1, -1)), (slice(2, None), slice(1, -1)),
               (slice(1, -1), slice(None, -2)), (slice(1, -1), slice(2, None))):
        diff |= lab[sl] != c
    return diff


def chamfer_distance(mask: np.ndarray) -> np.ndarray:
    """Two-pass 3-4 chamfer distance to the nearest pixel outside ``mask``.

    Pixels beyond the image edge count as outside. Units are pixels.
    """
    big = 1e9
    H, W = mask.shape
    d = np.where(np.pad(mask, 1), big, 0.0)
    a, b = 3.0, 4.0
    for r in range(1, H + 1):
        row, up = d[r], d[r - 1]
        cand = np.minimum.reduce([row[1:-1], up[1:-1] + a, up[:-2] + b, up[2:] + b])
        row[1:-1] = cand
        for c in range(1, W + 1):
            if row[c - 1] + a < row[c]:
                row[c] = row[c - 1] + a
    for r in range(H, 0, -1):
        row, dn = d[r], d[r + 1]
        cand = np.minimum.reduce([row[1:-1], dn[1:-1] + a, dn[:-2] + b, dn[2:] + b])
        row[1:-1] = cand
        for c in range(W, 0, -1):
            if row[c + 1] + a < row[c]:
                row[c] = row[c + 1] + a
    return d[1:-1, 1:-1] / a


def normalized_distance(extent: np.ndarray) -> np.ndarray:
    """Chamfer distance scaled to [0, 1] within each 4-connected component."""
    dist = chamfer_distance(extent)
    labels, n = ndimage.label(extent)
    if n == 0:
        return np.zeros(extent.shape)
    peak = ndimage.maximum(dist, labels, index=np.arange(1, n + 1))
    scale = np.concatenate([[1.0], np.where(np.asarray(peak) > 0, peak, 1.0)])
    return np.where(extent, dist / scale[labels], 0.0)


def gen_fields(spec: SceneSpec):
    """Label map (0 = background, 1..n = fields) and the e/b/d ground truth."""
    rng = _streams(spec.seed)["fields"]
    n = spec.n_fields + spec.n_background
    sites = _sites(rng, n, spec.H, spec.W)
    rr, cc = np.mgrid[0:spec.H, 0:spec.W] + 0.5
    d2 = (rr[..., None] - sites[:, 0]) ** 2 + (cc[..., None] - sites[:, 1]) ** 2
    cell = np.argmin(d2, axis=-1)
    # the background cells are chosen at random among all cells
    order = rng.permutation(n)
    ids = np.zeros(n, dtype=np.int32)
    ids[order[:spec.n_fields]] = np.arange(1, spec.n_fields + 1)
    labels = ids[cell]
    boundary = boundary_from_labels(labels)
    extent = (labels > 0) & ~boundary
    gt = MultitaskPrediction(extent.astype(np.float64), boundary.astype(np.float64),
                             normalized_distance(extent))
    return labels, gt


def _smooth_periodic(rng, H, W, scale):
    """Unit-variance periodic Gaussian random field."""
    noise = rng.normal(size=(H, W))
    ky = np.fft.fftfreq(H)[:, None]
    kx = np.fft.fftfreq(W)[None, :]
    filt = np.exp(-0.5 * (ky ** 2 + kx ** 2) * (2 * np.pi * scale) ** 2)
    f = np.real(np.fft.ifft2(np.fft.fft2(noise) * filt))
    return (f - f.mean()) / f.std()


def cloud_masks(spec: SceneSpec) -> np.ndarray:
    """T x H x W masks of smooth blobs translating across the scene."""
    masks = np.zeros((spec.T, spec.H, spec.W), dtype=bool)
    if spec.cloud_fraction <= 0:
        return masks
    rng = _streams(spec.seed)["clouds"]
    field = _smooth_periodic(rng, spec.H, spec.W, scale=4.0)
    cut = np.quantile(field, 1.0 - spec.cloud_fraction)
    base = field > cut
    angle = rng.uniform(0, 2 * np.pi)
    step = spec.cloud_speed_px * np.array([np.sin(angle), np.cos(angle)])
    for t in range(spec.T):
        dy, dx = np.rint(step * t).astype(int)
        masks[t] = np.roll(base, (dy, dx), axis=(0, 1))
    return masks


def gen_timeseries(spec: SceneSpec, labels: np.ndarray):
    """Optical-like (4 x T x H x W), SAR-like (5 x T x H x W) and cloud masks."""
    streams = _streams(spec.seed)
    n = int(labels.max()) + 1
    T = spec.T
    t = np.arange(T) / max(T, 1)

    ro = streams["optical"]
    base = ro.uniform(0.05, 0.45, size=(n, 4))
    amp = ro.uniform(0.05, 0.25, size=(n, 4))
    phase = ro.uniform(0, 2 * np.pi, size=(n, 1))
    traj = base[:, :, None] + amp[:, :, None] * np.sin(2 * np.pi * t[None, None, :] + phase[:, :, None])
    # background is textured and flat in time
    traj[0] = base[0, :, None]
    s2 = np.transpose(traj[labels], (2, 3, 0, 1))
    s2 = s2 + OPTICAL_NOISE * ro.normal(size=s2.shape)
    clouds = cloud_masks(spec)
    if clouds.any():
        bright = 0.8 + 0.1 * ro.normal(size=s2.shape)
        s2 = np.where(clouds[None], bright, s2)

    rs = streams["sar"]
    vv = rs.uniform(0.03, 0.3, size=n)
    vh = vv * rs.uniform(0.1, 0.4, size=n)
    growth = 1.0 + 0.5 * np.sin(2 * np.pi * t[None, :] + rs.uniform(0, 2 * np.pi, size=(n, 1)))
    looks = spec.speckle_looks
    shape = (T,) + labels.shape

    def speckle():
        return rs.gamma(looks, 1.0 / looks, size=shape)

    VV = (vv[:, None] * growth)[labels].transpose(2, 0, 1) * speckle()
    VH = (vh[:, None] * growth)[labels].transpose(2, 0, 1) * speckle()
    alpha = rs.uniform(10, 60, size=n)[labels][None] + 3.0 * rs.normal(size=shape)
    ent = np.clip(rs.uniform(0.2, 0.9, size=n)[labels][None] + 0.05 * rs.normal(size=shape), 0, 1)
    ani = np.clip(rs.uniform(0.1, 0.8, size=n)[labels][None] + 0.05 * rs.normal(size=shape), 0, 1)
    s1 = np.stack([np.clip(alpha, 0, 90), ani, ent, VH, VV])
    return s2, s1, clouds


def gen_scene(spec: SceneSpec):
    labels, gt = gen_fields(spec)
    s2, s1, clouds = gen_timeseries(spec, labels)
    return labels, gt, s2, s1, clouds
