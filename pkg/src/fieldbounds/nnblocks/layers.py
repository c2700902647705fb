"""Building blocks shared by the models.

Tensors are float64 torch tensors shaped ``N x C x T x H x W`` with N = 1.
Convolutions, normalisation and activations rely on torch autograd; the
patch attention and the multitask loss run on the numpy kernels and feed
their hand-derived gradients back through ``torch.autograd.Function``.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .. import pta3d
from ..loss_metrics import MultitaskPrediction, multitask_loss, multitask_loss_grad
from .config import StageConfig
from .weights import ParamSpec

EXPANSION = 4
SE_REDUCTION = 4
NORM_EPS = 1e-5


# --- autograd bridges ---------------------------------------------------------

class _PatchAttention(torch.autograd.Function):
    @staticmethod
    def forward(ctx, q, k, v, cfg):
        qn, kn, vn = (t.detach().cpu().numpy() for t in (q, k, v))
        ctx.cfg = cfg
        ctx.save_for_backward(q, k, v)
        return torch.from_numpy(pta3d.attention(qn, kn, vn, cfg))

    @staticmethod
    def backward(ctx, grad):
        q, k, v = (t.detach().numpy() for t in ctx.saved_tensors)
        g = pta3d.attention_grad(q, k, v, ctx.cfg, grad.detach().numpy())
        return torch.from_numpy(g.dq), torch.from_numpy(g.dk), torch.from_numpy(g.dv), None


def patch_attention(q, k, v, cfg: pta3d.AttentionConfig):
    """Attention over single samples ``C x T x H x W`` (no batch axis)."""
    return _PatchAttention.apply(q, k, v, cfg)


class _MultitaskLoss(torch.autograd.Function):
    @staticmethod
    def forward(ctx, pred, gt_stack):
        p = MultitaskPrediction.from_stack(pred.detach().numpy())
        g = MultitaskPrediction.from_stack(gt_stack)
        ctx.save_for_backward(pred)
        ctx.gt = g
        return torch.tensor(multitask_loss(p, g), dtype=torch.float64)

    @staticmethod
    def backward(ctx, grad):
        (pred,) = ctx.saved_tensors
        p = MultitaskPrediction.from_stack(pred.detach().numpy())
        d = multitask_loss_grad(p, ctx.gt).stack()
        return grad * torch.from_numpy(d), None


def loss_fn(pred, gt: MultitaskPrediction):
    """Multitask loss of a ``3 x H x W`` tensor against numpy ground truth."""
    return _MultitaskLoss.apply(pred, gt.stack())


# --- primitive layers ---------------------------------------------------------

def pointwise(x, w, b=None):
    """1x1x1 convolution; ``w`` is ``C_out x C_in``."""
    n, c = x.shape[:2]
    y = torch.matmul(w, x.reshape(n, c, -1))
    if b is not None:
        y = y + b[:, None]
    return y.reshape((n, w.shape[0]) + x.shape[2:])


class _Depthwise3(torch.autograd.Function):
    """3x3x3 per-channel correlation of a pre-padded input, accumulated in place.

    On CPU in float64 this is several times faster than grouped conv3d.
    """

    @staticmethod
    def forward(ctx, xp, w, b):
        T, H, W = (n - 2 for n in xp.shape[2:])
        k = w.reshape(-1, 27)
        out = b[None, :, None, None, None].expand(xp.shape[0], -1, T, H, W).clone()
        for i in range(27):
            dt, dy, dx = i // 9, (i // 3) % 3, i % 3
            out.addcmul_(k[None, :, i, None, None, None], xp[:, :, dt:dt + T, dy:dy + H, dx:dx + W])
        ctx.save_for_backward(xp, w)
        return out

    @staticmethod
    def backward(ctx, g):
        xp, w = ctx.saved_tensors
        T, H, W = g.shape[2:]
        k = w.reshape(-1, 27)
        dxp = torch.zeros_like(xp)
        dk = torch.empty_like(k)
        for i in range(27):
            dt, dy, dx = i // 9, (i // 3) % 3, i % 3
            sl = (slice(None), slice(None), slice(dt, dt + T), slice(dy, dy + H), slice(dx, dx + W))
            dxp[sl].addcmul_(k[None, :, i, None, None, None], g)
            dk[:, i] = (xp[sl] * g).sum(dim=(0, 2, 3, 4))
        return dxp, dk.reshape(w.shape), g.sum(dim=(0, 2, 3, 4))


def depthwise3(x, w, b):
    """3x3x3 per-channel convolution with replicate padding."""
    return _Depthwise3.apply(F.pad(x, (1, 1, 1, 1, 1, 1), mode="replicate"), w, b)


def norm(x, gain, bias):
    """Per-channel normalisation over T, H and W (batch free)."""
    return F.group_norm(x, x.shape[1], gain, bias, eps=NORM_EPS)


def downsample(x, w, b):
    return F.conv3d(x, w, b, stride=(1, 2, 2))


def upsample(x, w, b):
    return pointwise(F.interpolate(x, scale_factor=(1, 2, 2), mode="nearest"), w, b)


def conv2d_3x3(x, w, b):
    return F.conv2d(F.pad(x, (1, 1, 1, 1), mode="replicate"), w, b)


# --- parameter specs ----------------------------------------------------------

def conv_spec(name, c_out, c_in, kernel=()):
    fan = c_in * int(np.prod(kernel, dtype=np.int64))
    return [ParamSpec(f"{name}.w", (c_out, c_in) + tuple(kernel), fan_in=fan),
            ParamSpec(f"{name}.b", (c_out,), "zeros")]


def norm_spec(name, c):
    return [ParamSpec(f"{name}.g", (c,), "ones"), ParamSpec(f"{name}.b", (c,), "zeros")]


def se_hidden(c):
    return max(1, c // SE_REDUCTION)


def block_specs(p: str, c: int) -> list[ParamSpec]:
    e = EXPANSION * c
    out = []
    out += norm_spec(f"{p}.mb.norm", c)
    out += conv_spec(f"{p}.mb.expand", e, c)
    out += [ParamSpec(f"{p}.mb.dw.w", (e, 1, 3, 3, 3), fan_in=27), ParamSpec(f"{p}.mb.dw.b", (e,), "zeros")]
    out += conv_spec(f"{p}.mb.project", c, e)
    out += conv_spec(f"{p}.se.reduce", se_hidden(c), c)
    out += conv_spec(f"{p}.se.expand", c, se_hidden(c))
    out += norm_spec(f"{p}.att.norm", c)
    for n in ("q", "k", "v", "out"):
        out += conv_spec(f"{p}.att.{n}", c, c)
    out += norm_spec(f"{p}.ffn.norm", c)
    out += conv_spec(f"{p}.ffn.fc1", e, c)
    out += conv_spec(f"{p}.ffn.fc2", c, e)
    return out


def stage_specs(prefix: str, cfg: StageConfig) -> list[ParamSpec]:
    return [s for r in range(cfg.repeats) for s in block_specs(f"{prefix}.rep{r}", cfg.channels)]


# tensors whose zeroing turns a residual branch into the identity
RESIDUAL_OUTPUTS = ("mb.project.w", "mb.project.b", "se.expand.w", "se.expand.b", "att.out.w", "att.out.b",
                    "ffn.fc2.w", "ffn.fc2.b")


def cross_specs(p: str, c: int) -> list[ParamSpec]:
    out = norm_spec(f"{p}.norm_q", c) + norm_spec(f"{p}.norm_kv", c)
    for n in ("q", "k", "v", "out"):
        out += conv_spec(f"{p}.{n}", c, c)
    return out


# --- blocks -------------------------------------------------------------------

def _attention_cfg(cfg: StageConfig):
    return pta3d.AttentionConfig(cfg.patch, "mean", cfg.causal)


def attend(q, k, v, acfg):
    """Patch attention with sigmoid-gated queries and keys."""
    return patch_attention(torch.sigmoid(q[0]), torch.sigmoid(k[0]), v[0], acfg)[None]


def block_forward(x, P, p: str, cfg: StageConfig):
    """MBConv, squeeze-excitation, patch attention, feed-forward; all residual."""
    h = norm(x, P[f"{p}.mb.norm.g"], P[f"{p}.mb.norm.b"])
    h = F.gelu(pointwise(h, P[f"{p}.mb.expand.w"], P[f"{p}.mb.expand.b"]))
    h = F.gelu(depthwise3(h, P[f"{p}.mb.dw.w"], P[f"{p}.mb.dw.b"]))
    x = x + pointwise(h, P[f"{p}.mb.project.w"], P[f"{p}.mb.project.b"])

    z = x.mean(dim=(2, 3, 4))
    z = F.gelu(z @ P[f"{p}.se.reduce.w"].T + P[f"{p}.se.reduce.b"])
    z = z @ P[f"{p}.se.expand.w"].T + P[f"{p}.se.expand.b"]
    # 2 * sigmoid keeps a zeroed excitation branch an exact identity
    x = x * (2.0 * torch.sigmoid(z))[:, :, None, None, None]

    h = norm(x, P[f"{p}.att.norm.g"], P[f"{p}.att.norm.b"])
    q = pointwise(h, P[f"{p}.att.q.w"], P[f"{p}.att.q.b"])
    k = pointwise(h, P[f"{p}.att.k.w"], P[f"{p}.att.k.b"])
    v = pointwise(h, P[f"{p}.att.v.w"], P[f"{p}.att.v.b"])
    a = attend(q, k, v, _attention_cfg(cfg))
    x = x + pointwise(a, P[f"{p}.att.out.w"], P[f"{p}.att.out.b"])

    h = norm(x, P[f"{p}.ffn.norm.g"], P[f"{p}.ffn.norm.b"])
    h = F.gelu(pointwise(h, P[f"{p}.ffn.fc1.w"], P[f"{p}.ffn.fc1.b"]))
    return x + pointwise(h, P[f"{p}.ffn.fc2.w"], P[f"{p}.ffn.fc2.b"])


def stage(x, P, prefix: str, cfg: StageConfig):
    for r in range(cfg.repeats):
        x = block_forward(x, P, f"{prefix}.rep{r}", cfg)
    return x


def cross_attend(xq, xkv, P, p: str, cfg: StageConfig):
    """Queries from ``xq``, keys and values from ``xkv``; lives on ``xkv``'s grid."""
    hq = norm(xq, P[f"{p}.norm_q.g"], P[f"{p}.norm_q.b"])
    hk = norm(xkv, P[f"{p}.norm_kv.g"], P[f"{p}.norm_kv.b"])
    q = pointwise(hq, P[f"{p}.q.w"], P[f"{p}.q.b"])
    k = pointwise(hk, P[f"{p}.k.w"], P[f"{p}.k.b"])
    v = pointwise(hk, P[f"{p}.v.w"], P[f"{p}.v.b"])
    a = attend(q, k, v, _attention_cfg(cfg))
    return xkv + pointwise(a, P[f"{p}.out.w"], P[f"{p}.out.b"])
