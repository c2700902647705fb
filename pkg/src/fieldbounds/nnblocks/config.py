"""Model configurations and their validators."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from ..tensor_core import PatchSpec

COMPACTIONS = ("mean", "conv")
DEFAULT_PATCH = PatchSpec(2, 4, 4)


def _check_patch(patch):
    if not isinstance(patch, PatchSpec):
        raise ConfigError("patch must be a PatchSpec")


@dataclass(frozen=True)
class StageConfig:
    repeats: int
    channels: int
    patch: PatchSpec = DEFAULT_PATCH
    causal: bool = False

    def __post_init__(self):
        _check_patch(self.patch)
        if self.repeats < 1:
            raise ConfigError("a stage needs at least one repeat")
        if self.channels < 1 or self.channels % self.patch.c:
            raise ConfigError(f"channels={self.channels} must be a positive multiple of patch.c={self.patch.c}")


@dataclass(frozen=True)
class UNet3DConfig:
    """Symmetric encoder/decoder over C x T x H x W inputs.

    ``stage_repeats`` lists repeats from the first encoder stage through the
    bottleneck to the last decoder stage. A further stage of
    ``final_repeats`` runs at full resolution before the time axis is
    compacted. ``time_compaction="conv"`` needs ``time_steps``, which then
    fixes T for the model.
    """

    in_channels: int = 4
    init_features: int = 16
    stage_repeats: tuple = (2, 2, 5, 2, 5, 2, 2)
    patch: PatchSpec = DEFAULT_PATCH
    causal: bool = False
    final_repeats: int = 1
    time_compaction: str = "mean"
    time_steps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "stage_repeats", tuple(int(r) for r in self.stage_repeats))
        _check_patch(self.patch)
        r = self.stage_repeats
        if len(r) % 2 != 1:
            raise ConfigError("stage_repeats must have odd length")
        if r != r[::-1]:
            raise ConfigError("encoder and decoder halves of stage_repeats must mirror each other")
        if min(r) < 1 or self.final_repeats < 1:
            raise ConfigError("every stage needs at least one repeat")
        if self.in_channels < 1:
            raise ConfigError("in_channels must be positive")
        if self.init_features < 1 or self.init_features % self.patch.c:
            raise ConfigError(f"init_features must be a positive multiple of patch.c={self.patch.c}")
        _check_compaction(self.time_compaction, self.time_steps)

    @property
    def depth(self) -> int:
        return len(self.stage_repeats) // 2

    def stage(self, level: int, repeats: int) -> StageConfig:
        return StageConfig(repeats, self.init_features * 2 ** level, self.patch, self.causal)


@dataclass(frozen=True)
class FusionConfig:
    """Two independent encoders (optical and SAR) joined by cross attention."""

    in_channels_s2: int = 4
    in_channels_s1: int = 5
    init_features: int = 16
    encoder_repeats: tuple = (2, 2, 5, 2)
    decoder_repeats: tuple = (5, 2, 2)
    patch: PatchSpec = DEFAULT_PATCH
    causal: bool = False
    final_repeats: int = 1
    time_compaction: str = "mean"
    time_steps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "encoder_repeats", tuple(int(r) for r in self.encoder_repeats))
        object.__setattr__(self, "decoder_repeats", tuple(int(r) for r in self.decoder_repeats))
        _check_patch(self.patch)
        if len(self.decoder_repeats) != len(self.encoder_repeats) - 1:
            raise ConfigError("the decoder needs one stage fewer than the encoder")
        if min(self.encoder_repeats + self.decoder_repeats + (self.final_repeats,)) < 1:
            raise ConfigError("every stage needs at least one repeat")
        if min(self.in_channels_s2, self.in_channels_s1) < 1:
            raise ConfigError("input channel counts must be positive")
        if self.init_features < 1 or self.init_features % self.patch.c:
            raise ConfigError(f"init_features must be a positive multiple of patch.c={self.patch.c}")
        _check_compaction(self.time_compaction, self.time_steps)

    @property
    def depth(self) -> int:
        return len(self.encoder_repeats) - 1

    def stage(self, level: int, repeats: int) -> StageConfig:
        return StageConfig(repeats, self.init_features * 2 ** level, self.patch, self.causal)


def _check_compaction(mode, steps):
    if mode not in COMPACTIONS:
        raise ConfigError(f"time_compaction must be one of {COMPACTIONS}")
    if mode == "conv" and (steps is None or steps < 1):
        raise ConfigError("conv time compaction needs time_steps")


def config_to_dict(cfg) -> dict:
    kind = {UNet3DConfig: "unet3d", FusionConfig: "fusion"}.get(type(cfg))
    if kind is None:
        raise ConfigError(f"cannot serialise {type(cfg).__name__}")
    out = {"kind": kind}
    for name in cfg.__dataclass_fields__:
        val = getattr(cfg, name)
        if isinstance(val, PatchSpec):
            val = [val.c, val.h, val.w]
        elif isinstance(val, tuple):
            val = list(val)
        out[name] = val
    return out


def config_from_dict(doc: dict):
    doc = dict(doc)
    kind = doc.pop("kind", None)
    cls = {"unet3d": UNet3DConfig, "fusion": FusionConfig}.get(kind)
    if cls is None:
        raise ConfigError(f"unknown model kind {kind!r}")
    unknown = set(doc) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if "patch" in doc:
        try:
            doc["patch"] = PatchSpec(*doc["patch"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad patch {doc['patch']!r}: {exc}") from None
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
