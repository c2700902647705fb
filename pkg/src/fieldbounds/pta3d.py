"""Patch Tanimoto attention over C x T x H x W feature cubes.

Queries, keys and values are cut into a ``c x T x h x w`` grid of patches.
Every query patch is compared with every key patch through the Tanimoto
similarity, the resulting 8-D map is contracted over the query grid and the
contracted map scales the value patches, which are finally merged back to the
image layout.

Internally the patch grids are flattened to matrices so that the similarity
map is a single ``Nq x Nk`` array (``N = c*T*h*w``). Nothing of size
``(C*H*W)**2`` is ever allocated.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor_core import PatchSpec, patch_merge, patch_partition

# both squared norms below this trigger the q = k = 0 branch
ZERO_NORM = 1e-30

MODES = ("mean", "learned_weight")


@dataclass(frozen=True, eq=False)
class AttentionConfig:
    patch: PatchSpec
    contraction_mode: str = "mean"
    causal: bool = False
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.contraction_mode not in MODES:
            raise ConfigError(f"unknown contraction mode {self.contraction_mode!r}")
        if self.contraction_mode == "mean" and self.weight is not None:
            raise ConfigError("mean contraction takes no weight")
        if self.contraction_mode == "learned_weight" and self.weight is None:
            raise ConfigError("learned_weight contraction requires a weight over the query patch grid")


class AttentionGrads(NamedTuple):
    dq: np.ndarray
    dk: np.ndarray
    dv: np.ndarray
    dW: Optional[np.ndarray] = None


# --- allocation accounting -------------------------------------------------

_trackers: list[list[int]] = []


def _note(*arrays):
    if _trackers:
        for a in arrays:
            for t in _trackers:
                t.append(int(np.size(a)))


@contextlib.contextmanager
def track_allocations():
    """Collect the element counts of intermediates created by the kernels.

    >>> with track_allocations() as sizes:
    ...     _ = attention(q, k, v, cfg)        # doctest: +SKIP
    >>> max(sizes)                             # doctest: +SKIP
    """
    sizes: list[int] = []
    _trackers.append(sizes)
    try:
        yield sizes
    finally:
        _trackers.remove(sizes)


# --- scalar similarity -----------------------------------------------------

def tanimoto(q, k) -> float:
    q = np.asarray(q, dtype=np.float64).ravel()
    k = np.asarray(k, dtype=np.float64).ravel()
    if q.shape != k.shape:
        raise DimensionError(f"length mismatch: {q.size} vs {k.size}")
    qq = float(q @ q)
    kk = float(k @ k)
    if qq < ZERO_NORM and kk < ZERO_NORM:
        return 0.0
    qk = float(q @ k)
    return qk / (qq + kk - qk)


# --- matrix form -----------------------------------------------------------

def _check_inputs(q, k, v, patch: PatchSpec):
    if k.shape != (v.shape if v is not None else k.shape):
        raise DimensionError(f"key shape {k.shape} differs from value shape {v.shape}")
    patch.check(q.shape)
    patch.check(k.shape)
    if (q.shape[0], q.shape[2], q.shape[3]) != (k.shape[0], k.shape[2], k.shape[3]):
        raise DimensionError(f"query shape {q.shape} and key shape {k.shape} differ outside the time axis")


def _as_rows(x, patch: PatchSpec):
    xp = patch_partition(x, patch)
    grid = xp.shape[:4]
    rows = xp.reshape(int(np.prod(grid)), -1)
    _note(rows)
    return rows, xp.shape


def _time_index(patch: PatchSpec, T: int) -> np.ndarray:
    """Time coordinate of every flattened patch of a (c, T, h, w) grid."""
    idx = np.broadcast_to(np.arange(T)[None, :, None, None], (patch.c, T, patch.h, patch.w))
    return idx.ravel()


def causal_mask(Tq: int, Tk: int) -> np.ndarray:
    """m[F, T] = 1 where query time F <= key time T."""
    return (np.arange(Tq)[:, None] <= np.arange(Tk)[None, :]).astype(np.float64)


def _similarity_rows(Q, K):
    qq = np.einsum("ij,ij->i", Q, Q)
    kk = np.einsum("ij,ij->i", K, K)
    A = Q @ K.T
    D = qq[:, None] + kk[None, :] - A
    zero = (qq < ZERO_NORM)[:, None] & (kk < ZERO_NORM)[None, :]
    if zero.any():
        D = np.where(zero, 1.0, D)
        S = np.where(zero, 0.0, A / D)
    else:
        S = A / D
    _note(A, D, S)
    return S, A, D, qq, kk, zero


def _query_weights(cfg: AttentionConfig, grid_q) -> np.ndarray:
    Nq = int(np.prod(grid_q))
    if cfg.contraction_mode == "mean":
        return np.full(Nq, 1.0 / Nq)
    W = np.asarray(cfg.weight, dtype=np.float64)
    if W.shape != tuple(grid_q):
        raise ConfigError(f"weight shape {W.shape} does not match query patch grid {tuple(grid_q)}")
    return W.ravel()


def _row_mask(cfg: AttentionConfig, Tq: int, Tk: int):
    if not cfg.causal:
        return None
    fq = _time_index(cfg.patch, Tq)
    tk = _time_index(cfg.patch, Tk)
    M = (fq[:, None] <= tk[None, :]).astype(np.float64)
    _note(M)
    return M


# --- public operations -----------------------------------------------------

def similarity_8d(q, k, cfg: AttentionConfig) -> np.ndarray:
    """Full similarity map with axes (c, F, h, w, k, T, l, m).

    No causal mask is applied here; see :func:`apply_causal_mask`.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    _check_inputs(q, k, None, cfg.patch)
    Q, qshape = _as_rows(q, cfg.patch)
    K, kshape = _as_rows(k, cfg.patch)
    S = _similarity_rows(Q, K)[0]
    return S.reshape(qshape[:4] + kshape[:4])


def apply_causal_mask(s8: np.ndarray) -> np.ndarray:
    s8 = np.asarray(s8)
    if s8.ndim != 8:
        raise DimensionError(f"expected a rank-8 similarity map, got rank {s8.ndim}")
    m = causal_mask(s8.shape[1], s8.shape[5])
    return s8 * m[None, :, None, None, None, :, None, None]


def contract_similarity(s8: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    """Contract the query axes (c, F, h, w) of the 8-D map."""
    s8 = np.asarray(s8, dtype=np.float64)
    if s8.ndim != 8:
        raise DimensionError(f"expected a rank-8 similarity map, got rank {s8.ndim}")
    grid_q = s8.shape[:4]
    wq = _query_weights(cfg, grid_q)
    S = s8.reshape(wq.size, -1)
    return (wq @ S).reshape(s8.shape[4:])


def _forward(q, k, v, cfg: AttentionConfig):
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_inputs(q, k, v, cfg.patch)
    Q, qshape = _as_rows(q, cfg.patch)
    K, kshape = _as_rows(k, cfg.patch)
    V, vshape = _as_rows(v, cfg.patch)
    S, A, D, qq, kk, zero = _similarity_rows(Q, K)
    M = _row_mask(cfg, q.shape[1], k.shape[1])
    Sm = S if M is None else S * M
    _note(Sm)
    wq = _query_weights(cfg, qshape[:4])
    s = wq @ Sm
    out_rows = s[:, None] * V
    _note(s, out_rows)
    out = patch_merge(out_rows.reshape(vshape), cfg.patch)
    _note(out)
    cache = dict(Q=Q, K=K, V=V, S=S, A=A, D=D, qq=qq, kk=kk, zero=zero, M=M, Sm=Sm,
                 wq=wq, s=s, qshape=qshape, vshape=vshape)
    return out, cache


def attention(q, k, v, cfg: AttentionConfig) -> np.ndarray:
    """Patch Tanimoto attention; the output has the shape of ``v``.

    ``q`` may have a different number of time steps than ``k`` and ``v``
    (cross attention between two time series); all other extents must agree.
    """
    return _forward(q, k, v, cfg)[0]


def contracted_similarity(q, k, cfg: AttentionConfig) -> np.ndarray:
    """The 4-D contracted (and optionally masked) map over the key grid."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    _check_inputs(q, k, None, cfg.patch)
    Q, qshape = _as_rows(q, cfg.patch)
    K, kshape = _as_rows(k, cfg.patch)
    S = _similarity_rows(Q, K)[0]
    M = _row_mask(cfg, q.shape[1], k.shape[1])
    if M is not None:
        S = S * M
    return (_query_weights(cfg, qshape[:4]) @ S).reshape(kshape[:4])


def attention_grad(q, k, v, cfg: AttentionConfig, upstream) -> AttentionGrads:
    """Gradients of ``<upstream, attention(q, k, v)>``.

    ``dW`` is returned only for the learned_weight contraction. At the
    all-zero branch of the similarity the gradient is taken to be zero.
    """
    out, c = _forward(q, k, v, cfg)
    G = np.asarray(upstream, dtype=np.float64)
    if G.shape != out.shape:
        raise DimensionError(f"upstream shape {G.shape} differs from output shape {out.shape}")
    Grows = patch_partition(G, cfg.patch).reshape(c["V"].shape)

    dV = c["s"][:, None] * Grows
    ds = np.einsum("ij,ij->i", Grows, c["V"])

    dW = None
    if cfg.contraction_mode == "learned_weight":
        dW = (c["Sm"] @ ds).reshape(c["qshape"][:4])

    dS = c["wq"][:, None] * ds[None, :]
    if c["M"] is not None:
        dS = dS * c["M"]

    D2 = c["D"] * c["D"]
    A = c["A"]
    dA = dS * (c["qq"][:, None] + c["kk"][None, :]) / D2
    dN = -dS * A / D2
    if c["zero"].any():
        dA = np.where(c["zero"], 0.0, dA)
        dN = np.where(c["zero"], 0.0, dN)
    dqq = dN.sum(axis=1)
    dkk = dN.sum(axis=0)
    dQ = dA @ c["K"] + 2.0 * dqq[:, None] * c["Q"]
    dK = dA.T @ c["Q"] + 2.0 * dkk[:, None] * c["K"]

    patch = cfg.patch
    dq = patch_merge(dQ.reshape(c["qshape"]), patch)
    dk = patch_merge(dK.reshape(c["vshape"]), patch)
    dv = patch_merge(dV.reshape(c["vshape"]), patch)
    return AttentionGrads(dq, dk, dv, dW)
