"""Tanimoto multitask loss and evaluation metrics.

Confusion matrices are oriented rows = predicted, columns = actual, so that
row sums count predictions of a class and column sums count its occurrences.

Metrics whose denominator vanishes return 0 together with a ``degenerate``
flag instead of NaN; see :class:`Score`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionError, EmptyGeometryError, RangeError

_RANGE_TOL = 1e-12
_ZERO = 1e-30


class Score(NamedTuple):
    value: float
    degenerate: bool = False

    def __float__(self):
        return float(self.value)


# --- loss ------------------------------------------------------------------

def _check_unit(name, x):
    if x.size and (x.min() < -_RANGE_TOL or x.max() > 1 + _RANGE_TOL):
        raise RangeError(f"{name} has values outside [0, 1]")


def _fuzzy_tanimoto(p, l):
    pl = float(np.dot(p, l))
    pp = float(np.dot(p, p))
    ll = float(np.dot(l, l))
    if pp < _ZERO and ll < _ZERO:
        return 0.0, pl, pp + ll - pl, True
    d = pp + ll - pl
    return pl / d, pl, d, False


def _prepare(p, l):
    p = np.asarray(p, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    if p.shape != l.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {l.shape}")
    _check_unit("prediction", p)
    _check_unit("label", l)
    return p.ravel(), l.ravel()


def tanimoto_loss(p, l) -> float:
    """Tanimoto loss with complement, in [0, 1]."""
    p, l = _prepare(p, l)
    t = _fuzzy_tanimoto(p, l)[0]
    tc = _fuzzy_tanimoto(1.0 - p, 1.0 - l)[0]
    return 1.0 - 0.5 * (t + tc)


def tanimoto_loss_grad(p, l) -> np.ndarray:
    """Gradient of :func:`tanimoto_loss` with respect to ``p``."""
    shape = np.shape(p)
    p, l = _prepare(p, l)

    def dT(x, y):
        t, xy, d, zero = _fuzzy_tanimoto(x, y)
        if zero:
            return np.zeros_like(x)
        # d/dx [xy / (xx + yy - xy)]
        return (y * d - xy * (2.0 * x - y)) / (d * d)

    g = -0.5 * (dT(p, l) - dT(1.0 - p, 1.0 - l))
    return g.reshape(shape)


LAYERS = ("extent", "boundary", "distance")


@dataclass
class MultitaskPrediction:
    """Extent, boundary and distance maps on a common H x W grid."""

    extent: np.ndarray
    boundary: np.ndarray
    distance: np.ndarray

    def __post_init__(self):
        self.extent = np.asarray(self.extent, dtype=np.float64)
        self.boundary = np.asarray(self.boundary, dtype=np.float64)
        self.distance = np.asarray(self.distance, dtype=np.float64)
        shapes = {self.extent.shape, self.boundary.shape, self.distance.shape}
        if len(shapes) != 1 or self.extent.ndim != 2:
            raise DimensionError(f"e, b, d must share one H x W shape, got {sorted(shapes)}")

    @property
    def shape(self):
        return self.extent.shape

    def layers(self):
        return (self.extent, self.boundary, self.distance)

    def stack(self) -> np.ndarray:
        return np.stack(self.layers())

    @classmethod
    def from_stack(cls, arr) -> "MultitaskPrediction":
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise DimensionError(f"expected a 3 x H x W stack, got {arr.shape}")
        return cls(*arr)


def multitask_loss(pred: MultitaskPrediction, gt: MultitaskPrediction) -> float:
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return sum(tanimoto_loss(a, b) for a, b in zip(pred.layers(), gt.layers())) / 3.0


def multitask_loss_grad(pred: MultitaskPrediction, gt: MultitaskPrediction) -> MultitaskPrediction:
    """Gradient of :func:`multitask_loss` with respect to each predicted layer.

    The returned maps are gradients, not probabilities, so no range check is
    meaningful; they are packed in the same container for convenience.
    """
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    grads = [tanimoto_loss_grad(a, b) / 3.0 for a, b in zip(pred.layers(), gt.layers())]
    return MultitaskPrediction(*grads)


# --- confusion-matrix metrics ---------------------------------------------

def confusion(pred_labels, true_labels, K: int) -> np.ndarray:
    """K x K count matrix, C[i, j] = pixels predicted i whose truth is j."""
    pred = np.asarray(pred_labels).ravel()
    true = np.asarray(true_labels).ravel()
    if pred.shape != true.shape:
        raise DimensionError(f"shape mismatch: {np.shape(pred_labels)} vs {np.shape(true_labels)}")
    for name, a in (("prediction", pred), ("truth", true)):
        if a.size and (a.min() < 0 or a.max() >= K or not np.all(a == np.floor(a))):
            raise RangeError(f"{name} labels must be integers in [0, {K})")
    flat = pred.astype(np.int64) * K + true.astype(np.int64)
    return np.bincount(flat, minlength=K * K).reshape(K, K)


def _marginals(cm):
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise DimensionError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise RangeError("confusion counts must be non-negative")
    p = cm.sum(axis=1)
    t = cm.sum(axis=0)
    return int(np.trace(cm)), int(cm.sum()), p, t


def mcc(cm) -> Score:
    """Multiclass Matthews correlation coefficient."""
    c, s, p, t = _marginals(cm)
    # python ints: exact and overflow-free
    p = [int(x) for x in p]
    t = [int(x) for x in t]
    num = c * s - sum(a * b for a, b in zip(p, t))
    a = s * s - sum(x * x for x in p)
    b = s * s - sum(x * x for x in t)
    if a == 0 or b == 0:
        return Score(0.0, True)
    return Score(num / math.sqrt(a * b))


def cohens_kappa(cm) -> Score:
    c, s, p, t = _marginals(cm)
    if s == 0:
        return Score(0.0, True)
    po = c / s
    pe = sum(int(a) * int(b) for a, b in zip(p, t)) / (s * s)
    if pe == 1:
        return Score(0.0, True)
    return Score((po - pe) / (1 - pe))


def miou_fuzzy(P, L) -> float:
    """Mean fuzzy IoU over the leading class axis of N x H x W maps.

    A class absent from both maps counts as a perfect match.
    """
    P = np.asarray(P, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if P.shape != L.shape:
        raise DimensionError(f"shape mismatch: {P.shape} vs {L.shape}")
    _check_unit("P", P)
    _check_unit("L", L)
    axes = tuple(range(1, P.ndim))
    inter = np.minimum(P, L).sum(axis=axes)
    union = np.maximum(P, L).sum(axis=axes)
    ratio = np.divide(inter, union, out=np.ones_like(inter), where=union > 0)
    return float(ratio.mean())


def _binary(pred, truth):
    a = np.asarray(pred, dtype=bool)
    b = np.asarray(truth, dtype=bool)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def iou_binary(pred, truth) -> float:
    a, b = _binary(pred, truth)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def fdr(pred, truth) -> Score:
    """False discovery rate |A & ~B| / |A| (oversegmentation)."""
    a, b = _binary(pred, truth)
    n = int(np.count_nonzero(a))
    if n == 0:
        return Score(0.0, True)
    return Score(int(np.count_nonzero(a & ~b)) / n)


def for_rate(pred, truth) -> Score:
    """False omission rate |~A & B| / |~A| (undersegmentation)."""
    a, b = _binary(pred, truth)
    n = int(np.count_nonzero(~a))
    if n == 0:
        return Score(0.0, True)
    return Score(int(np.count_nonzero(~a & b)) / n)


def raster_report(pred_extent, true_extent, threshold: float = 0.5) -> dict:
    """Metric record for one tile of extent probabilities against a truth mask."""
    pe = np.asarray(pred_extent, dtype=np.float64)
    te = np.asarray(true_extent, dtype=np.float64)
    a = pe > threshold
    b = te > 0.5
    cm = confusion(a.astype(int), b.astype(int), 2)
    m, k = mcc(cm), cohens_kappa(cm)
    f1, f2 = fdr(a, b), for_rate(a, b)
    onehot_p = np.stack([~a, a]).astype(float)
    onehot_t = np.stack([~b, b]).astype(float)
    return {
        "iou": iou_binary(a, b),
        "miou": miou_fuzzy(onehot_p, onehot_t),
        "mcc": m.value,
        "kappa": k.value,
        "fdr": f1.value,
        "for": f2.value,
        "degenerate": sorted(n for n, s in (("mcc", m), ("kappa", k), ("fdr", f1), ("for", f2))
                             if s.degenerate),
    }


# --- vertex-set distances --------------------------------------------------

def _vertices(X, name):
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise EmptyGeometryError(f"{name} has no vertices")
    return X.reshape(-1, X.shape[-1])


def _densify(X, step):
    X = np.asarray(X, dtype=np.float64)
    out = []
    for a, b in zip(X[:-1], X[1:]):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        out.extend(a + (b - a) * (i / n) for i in range(n))
    out.append(X[-1])
    return np.array(out)


def _distances(X, Y, densify):
    X = _vertices(X, "X")
    Y = _vertices(Y, "Y")
    if densify:
        X, Y = _densify(X, densify), _densify(Y, densify)
    return cdist(X, Y)


def msd(X, Y, densify: float | None = None) -> float:
    """Mean surface distance between two vertex lists.

    ``densify`` (a spacing in map units) resamples each vertex list as a
    polyline before measuring; off by default.
    """
    D = _distances(X, Y, densify)
    return 0.5 * (D.min(axis=1).mean() + D.min(axis=0).mean())


def hausdorff(X, Y, densify: float | None = None) -> float:
    D = _distances(X, Y, densify)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))
