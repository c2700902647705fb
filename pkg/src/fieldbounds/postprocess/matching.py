"""Greedy one-to-one polygon matching by area IoU."""
from __future__ import annotations

from typing import NamedTuple

import shapely

from ..loss_metrics import hausdorff, msd
from .polygons import PolygonSet

DEFAULT_IOU_MIN = 1e-3


class Match(NamedTuple):
    pred_id: int
    truth_id: int
    iou: float
    hausdorff: float
    msd: float


def polygon_iou(a, b) -> float:
    inter = a.intersection(b).area
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def match_polygons(pred: PolygonSet, truth: PolygonSet, iou_min: float = DEFAULT_IOU_MIN) -> list[Match]:
    """Score all overlapping pairs, then keep the best IoU per polygon greedily.

    Ids are positions in the respective sets. Pairs with IoU below
    ``iou_min`` are discarded before matching.
    """
    tgeoms = [p.geometry for p in truth.polygons]
    tree = shapely.STRtree(tgeoms)
    scored = []
    for i, fp in enumerate(pred.polygons):
        for j in sorted(int(j) for j in tree.query(fp.geometry)):
            iou = polygon_iou(fp.geometry, tgeoms[j])
            if iou > 0 and iou >= iou_min:
                scored.append((iou, i, j))
    scored.sort(key=lambda s: (-s[0], s[1], s[2]))
    used_p, used_t, out = set(), set(), []
    for iou, i, j in scored:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        X = pred.polygons[i].vertices()
        Y = truth.polygons[j].vertices()
        out.append(Match(i, j, iou, hausdorff(X, Y), msd(X, Y)))
    return out
