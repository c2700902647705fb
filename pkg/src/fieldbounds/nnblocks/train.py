"""Plain gradient-descent training of a reduced U-Net3D."""
from __future__ import annotations

import math
from typing import Sequence

import torch

from ..errors import ConfigError, DimensionError, TrainingError
from ..loss_metrics import MultitaskPrediction
from . import layers as L
from .config import UNet3DConfig
from .models import _as_input, _check_spatial, _check_time, init_weights, param_specs, torch_params, unet3d_torch
from .weights import ModelWeights

MAX_TOY_STAGES = 2


def toy_config(in_channels: int = 4, features: int = 8, **kw) -> UNet3DConfig:
    """One full-resolution stage plus the final stage."""
    return UNet3DConfig(in_channels=in_channels, init_features=features, stage_repeats=(1,), **kw)


def _total_loss(P, cfg, batch):
    total = 0.0
    for x, gt in batch:
        total = total + L.loss_fn(unet3d_torch(x, P, cfg), gt)
    return total / len(batch)


def fit_toy(model_cfg: UNet3DConfig, data: Sequence, steps: int, lr: float,
            seed: int = 0, weights: ModelWeights | None = None):
    """Full-batch gradient descent on the multitask loss.

    ``data`` is a list of ``(x, target)`` pairs with ``x`` shaped
    ``C x T x H x W`` and ``target`` a :class:`MultitaskPrediction`. Returns
    the trained weights and the loss before every step plus the final loss.
    """
    if not isinstance(model_cfg, UNet3DConfig):
        raise ConfigError("fit_toy trains U-Net3D configurations")
    n_stages = len(model_cfg.stage_repeats) + 1
    if n_stages > MAX_TOY_STAGES:
        raise ConfigError(f"toy model has {n_stages} stages, at most {MAX_TOY_STAGES} allowed")
    if steps < 0 or not math.isfinite(lr) or lr < 0:
        raise ConfigError("steps must be >= 0 and lr a finite non-negative number")
    if not data:
        raise ConfigError("no training samples")
    batch = []
    for x, gt in data:
        xt = _as_input(x, model_cfg.in_channels)
        _check_spatial(model_cfg, xt.shape[3], xt.shape[4])
        _check_time(model_cfg, xt.shape[2])
        if not isinstance(gt, MultitaskPrediction) or gt.shape != tuple(xt.shape[3:]):
            raise DimensionError("each target must be a MultitaskPrediction matching the input H x W")
        batch.append((xt, gt))

    w = weights if weights is not None else init_weights(model_cfg, seed)
    specs = param_specs(model_cfg)
    w.check(specs)
    names = [s.name for s in specs]
    P = torch_params(w, names, requires_grad=True)
    trace = []
    for step in range(steps + 1):
        loss = _total_loss(P, model_cfg, batch)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingError(f"loss became {value} at step {step}")
        trace.append(value)
        if step == steps:
            break
        grads = torch.autograd.grad(loss, [P[n] for n in names])
        with torch.no_grad():
            for n, g in zip(names, grads):
                P[n] -= lr * g
        for n, p in P.items():
            if not torch.isfinite(p).all():
                raise TrainingError(f"parameter {n} diverged at step {step}")
    trained = w.replace({n: P[n].detach().numpy().copy() for n in names})
    return trained, trace


def loss_and_grad(cfg: UNet3DConfig, w: ModelWeights, data: Sequence):
    """Total loss and its gradient for every tensor, as numpy arrays."""
    names = [s.name for s in param_specs(cfg)]
    P = torch_params(w, names, requires_grad=True)
    batch = [(_as_input(x, cfg.in_channels), gt) for x, gt in data]
    loss = _total_loss(P, cfg, batch)
    grads = torch.autograd.grad(loss, [P[n] for n in names])
    return float(loss.detach()), {n: g.numpy().copy() for n, g in zip(names, grads)}


def total_loss(cfg: UNet3DConfig, w: ModelWeights, data: Sequence) -> float:
    names = [s.name for s in param_specs(cfg)]
    P = torch_params(w, names)
    batch = [(_as_input(x, cfg.in_channels), gt) for x, gt in data]
    with torch.no_grad():
        return float(_total_loss(P, cfg, batch))
