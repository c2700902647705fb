"""U-Net3D and the dual-encoder cross-attention fusion model."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ConfigError, DimensionError
from ..loss_metrics import MultitaskPrediction
from . import layers as L
from .config import FusionConfig, StageConfig, UNet3DConfig
from .weights import ModelWeights, ParamSpec

HEAD_ORDER = ("d", "b", "e")  # each head also sees the maps emitted before it


# --- parameter layouts --------------------------------------------------------

def _head_specs(features: int) -> list[ParamSpec]:
    out = []
    for i, name in enumerate(HEAD_ORDER):
        out += L.conv_spec(f"head.{name}", 1, features + i, (3, 3))
    return out


def _compaction_specs(cfg, features) -> list[ParamSpec]:
    if cfg.time_compaction == "conv":
        return L.conv_spec("compact", features, features, (cfg.time_steps, 1, 1))
    return []


def _decoder_specs(cfg, prefix, repeats, top) -> list[ParamSpec]:
    """Upsample, skip fuse and stage for each decoder level, deepest first."""
    out = []
    for i, r in enumerate(repeats):
        level = top - 1 - i
        c = cfg.init_features * 2 ** level
        out += L.conv_spec(f"{prefix}{i}.up", c, 2 * c)
        out += L.conv_spec(f"{prefix}{i}.fuse", c, 2 * c)
        out += L.stage_specs(f"{prefix}{i}", cfg.stage(level, r))
    return out


def _encoder_specs(cfg, prefix, in_ch, repeats) -> list[ParamSpec]:
    out = L.conv_spec(f"{prefix}stem", cfg.init_features, in_ch)
    for level, r in enumerate(repeats):
        sc = cfg.stage(level, r)
        out += L.stage_specs(f"{prefix}enc{level}", sc)
        if level < len(repeats) - 1:
            out += L.conv_spec(f"{prefix}down{level}", 2 * sc.channels, sc.channels, (1, 2, 2))
    return out


def param_specs(cfg) -> list[ParamSpec]:
    """Every tensor a configuration needs, in manifest order."""
    if isinstance(cfg, StageConfig):
        return L.stage_specs("stage", cfg)
    F0 = cfg.init_features
    if isinstance(cfg, UNet3DConfig):
        d = cfg.depth
        out = _encoder_specs(cfg, "", cfg.in_channels, cfg.stage_repeats[:d + 1])
        out += _decoder_specs(cfg, "dec", cfg.stage_repeats[d + 1:], d)
    elif isinstance(cfg, FusionConfig):
        d = cfg.depth
        out = _encoder_specs(cfg, "s2.", cfg.in_channels_s2, cfg.encoder_repeats)
        out += _encoder_specs(cfg, "s1.", cfg.in_channels_s1, cfg.encoder_repeats)
        for level in range(d + 1):
            c = F0 * 2 ** level
            out += L.cross_specs(f"cross{level}.s2q", c)
            out += L.cross_specs(f"cross{level}.s1q", c)
        out += _decoder_specs(cfg, "dec", cfg.decoder_repeats, d)
    else:
        raise ConfigError(f"unsupported config {type(cfg).__name__}")
    out += L.stage_specs("final", cfg.stage(0, cfg.final_repeats))
    out += _compaction_specs(cfg, F0)
    out += _head_specs(F0)
    return out


def init_weights(cfg, seed: int, identity_residual: bool = False) -> ModelWeights:
    """Deterministic initial weights.

    With ``identity_residual`` the last projection of every residual branch
    is zeroed so each stage starts as the identity map.
    """
    specs = param_specs(cfg)
    if identity_residual:
        specs = [ParamSpec(s.name, s.shape, "zeros", s.fan_in)
                 if s.name.endswith(L.RESIDUAL_OUTPUTS) and ".rep" in s.name else s
                 for s in specs]
    return ModelWeights.initialise(specs, seed)


# --- forward passes -----------------------------------------------------------

def torch_params(w: ModelWeights, names, requires_grad=False) -> dict:
    return {n: torch.tensor(w[n], dtype=torch.float64, requires_grad=requires_grad) for n in names}


def _as_input(x, channels, name="input") -> torch.Tensor:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"{name} must be C x T x H x W, got shape {x.shape}")
    if x.shape[0] != channels:
        raise DimensionError(f"{name} has {x.shape[0]} channels, model expects {channels}")
    return torch.from_numpy(np.ascontiguousarray(x))[None]


def _check_spatial(cfg, H, W):
    f = 2 ** cfg.depth
    for axis, n, p in (("H", H, cfg.patch.h), ("W", W, cfg.patch.w)):
        if n % f or (n // f) % p:
            raise DimensionError(f"{axis}={n} must be divisible by 2^{cfg.depth} * {p} = {f * p}")


def _check_time(cfg, T):
    if cfg.time_compaction == "conv" and T != cfg.time_steps:
        raise DimensionError(f"model compacts exactly {cfg.time_steps} time steps, input has {T}")


def _encode(x, P, cfg, prefix, repeats):
    x = L.pointwise(x, P[f"{prefix}stem.w"], P[f"{prefix}stem.b"])
    feats = []
    for level, r in enumerate(repeats):
        x = L.stage(x, P, f"{prefix}enc{level}", cfg.stage(level, r))
        feats.append(x)
        if level < len(repeats) - 1:
            x = L.downsample(x, P[f"{prefix}down{level}.w"], P[f"{prefix}down{level}.b"])
    return feats


def _decode(x, skips, P, cfg, repeats):
    top = len(skips)
    for i, r in enumerate(repeats):
        level = top - 1 - i
        x = L.upsample(x, P[f"dec{i}.up.w"], P[f"dec{i}.up.b"])
        x = L.pointwise(torch.cat([x, skips[level]], dim=1), P[f"dec{i}.fuse.w"], P[f"dec{i}.fuse.b"])
        x = L.stage(x, P, f"dec{i}", cfg.stage(level, r))
    return x


def _finish(x, P, cfg):
    x = L.stage(x, P, "final", cfg.stage(0, cfg.final_repeats))
    if cfg.time_compaction == "conv":
        x = F.conv3d(x, P["compact.w"], P["compact.b"])[:, :, 0]
    else:
        x = x.mean(dim=2)
    maps = []
    for name in HEAD_ORDER:
        inp = torch.cat([x] + maps, dim=1)
        maps.append(torch.sigmoid(L.conv2d_3x3(inp, P[f"head.{name}.w"], P[f"head.{name}.b"])))
    d, b, e = maps
    return torch.cat([e, b, d], dim=1)[0]


def unet3d_torch(x, P, cfg: UNet3DConfig):
    """``1 x C x T x H x W`` tensor to a ``3 x H x W`` (e, b, d) tensor."""
    d = cfg.depth
    feats = _encode(x, P, cfg, "", cfg.stage_repeats[:d + 1])
    y = _decode(feats[-1], feats[:-1], P, cfg, cfg.stage_repeats[d + 1:])
    return _finish(y, P, cfg)


def fusion_torch(x2, x1, P, cfg: FusionConfig):
    f2 = _encode(x2, P, cfg, "s2.", cfg.encoder_repeats)
    f1 = _encode(x1, P, cfg, "s1.", cfg.encoder_repeats)
    fused = []
    for level, (a, b) in enumerate(zip(f2, f1)):
        sc = cfg.stage(level, 1)
        to_s1 = L.cross_attend(a, b, P, f"cross{level}.s2q", sc)
        to_s2 = L.cross_attend(b, a, P, f"cross{level}.s1q", sc)
        fused.append(torch.cat([to_s2, to_s1], dim=2))
    y = _decode(fused[-1], fused[:-1], P, cfg, cfg.decoder_repeats)
    return _finish(y, P, cfg)


def _to_prediction(t) -> MultitaskPrediction:
    return MultitaskPrediction.from_stack(t.detach().numpy().copy())


def stage_forward(x, cfg: StageConfig, w: ModelWeights, prefix: str = "stage") -> np.ndarray:
    """One attention stage (MBConv, SE, patch attention, FFN) on a ``C x T x H x W`` array; T is preserved."""
    specs = L.stage_specs(prefix, cfg)
    w.check(specs)
    xt = _as_input(x, cfg.channels)
    cfg.patch.check(xt.shape[1:])
    P = torch_params(w, [s.name for s in specs])
    with torch.no_grad():
        return L.stage(xt, P, prefix, cfg)[0].numpy().copy()


def unet3d_forward(x, cfg: UNet3DConfig, w: ModelWeights) -> MultitaskPrediction:
    specs = param_specs(cfg)
    w.check(specs)
    xt = _as_input(x, cfg.in_channels)
    _check_spatial(cfg, xt.shape[3], xt.shape[4])
    _check_time(cfg, xt.shape[2])
    P = torch_params(w, [s.name for s in specs])
    with torch.no_grad():
        return _to_prediction(unet3d_torch(xt, P, cfg))


def fusion_forward(x_s2, x_s1, cfg: FusionConfig, w: ModelWeights) -> MultitaskPrediction:
    specs = param_specs(cfg)
    w.check(specs)
    x2 = _as_input(x_s2, cfg.in_channels_s2, "optical input")
    x1 = _as_input(x_s1, cfg.in_channels_s1, "SAR input")
    if x2.shape[3:] != x1.shape[3:]:
        raise DimensionError(f"streams differ in H x W: {tuple(x2.shape[3:])} vs {tuple(x1.shape[3:])}")
    _check_spatial(cfg, x2.shape[3], x2.shape[4])
    _check_time(cfg, x2.shape[2] + x1.shape[2])
    P = torch_params(w, [s.name for s in specs])
    with torch.no_grad():
        return _to_prediction(fusion_torch(x2, x1, P, cfg))
