"""Multi-objective grid search over (t_b, t_e)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from ..errors import ConfigError, DimensionError
from ..loss_metrics import fdr, for_rate, iou_binary
from .polygons import FOUR
from .thinning import ThresholdPair, boundary_mask, refined_threshold

OBJECTIVES = ("one_minus_iou", "fdr", "for", "count_error")


def default_grid(step: float = 0.05) -> list[ThresholdPair]:
    n = int(round(1.0 / step))
    if n < 2 or not math.isclose(n * step, 1.0):
        raise ConfigError(f"grid step must divide 1, got {step}")
    vals = [round(i * step, 10) for i in range(1, n)]
    return [ThresholdPair(tb, te) for tb in vals for te in vals]


@dataclass(frozen=True)
class Candidate:
    pair: ThresholdPair
    objectives: tuple
    n_components: int

    @property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.objectives))


@dataclass
class TuneResult:
    candidates: list
    front: list
    best: ThresholdPair


def pareto_front(points: np.ndarray) -> np.ndarray:
    """Indices of non-dominated rows (all objectives minimised)."""
    P = np.asarray(points, dtype=np.float64)
    le = (P[:, None, :] <= P[None, :, :]).all(axis=2)
    lt = (P[:, None, :] < P[None, :, :]).any(axis=2)
    dominated = (le & lt).any(axis=0)
    return np.flatnonzero(~dominated)


def evaluate(e, b, truth_mask, truth_count: int, pair: ThresholdPair, bmask=None) -> Candidate:
    mask = refined_threshold(e, b, pair, bmask=bmask)
    n = ndimage.label(mask, structure=FOUR)[1]
    obj = (1.0 - iou_binary(mask, truth_mask),
           fdr(mask, truth_mask).value,
           for_rate(mask, truth_mask).value,
           abs(n - truth_count) / max(1, truth_count))
    return Candidate(pair, obj, int(n))


def tune_thresholds(e, b, truth_mask, truth_count: int,
                    grid: Sequence[ThresholdPair] | None = None, jobs: int = 1) -> TuneResult:
    """Pareto front of the four objectives and the front point nearest the origin.

    Candidates are reported sorted by (t_b, t_e); ties in distance resolve to
    the first candidate in that order.
    """
    if grid is None:
        grid = default_grid()
    grid = sorted(set(grid), key=ThresholdPair.as_tuple)
    if not grid:
        raise ConfigError("threshold grid is empty")
    e = np.asarray(e, dtype=np.float64)
    truth_mask = np.asarray(truth_mask, dtype=bool)
    if np.shape(b) != e.shape or truth_mask.shape != e.shape:
        raise DimensionError("extent, boundary and truth maps must share a shape")

    bmasks = {tb: boundary_mask(b, tb) for tb in sorted({p.t_b for p in grid})}

    def run(pair):
        return evaluate(e, b, truth_mask, truth_count, pair, bmasks[pair.t_b])

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            cands = list(pool.map(run, grid))
    else:
        cands = [run(p) for p in grid]

    idx = pareto_front(np.array([c.objectives for c in cands]))
    front = [cands[i] for i in idx]
    best = min(front, key=lambda c: c.norm)  # min() keeps the first on ties
    return TuneResult(cands, front, best.pair)


def front_table(result: TuneResult) -> Iterable[dict]:
    best = result.best
    for c in result.front:
        rec = {"t_b": c.pair.t_b, "t_e": c.pair.t_e}
        rec.update(zip(OBJECTIVES, c.objectives))
        rec["n_components"] = c.n_components
        rec["norm"] = c.norm
        rec["best"] = c.pair == best
        yield rec
