"""Extent and boundary probabilities to field polygons in one call."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .polygons import PolygonSet, RasterMeta, components_to_polygons, simplify_filter
from .thinning import DEFAULT_THRESHOLDS, ThresholdPair, refined_threshold


class FieldExtraction(NamedTuple):
    mask: np.ndarray        # refined binary mask
    raw: PolygonSet         # one polygon per 4-connected component, exact pixel edges
    polygons: PolygonSet    # after simplification and the area filter


def extract_fields(e, b, meta: RasterMeta, thresholds: ThresholdPair = DEFAULT_THRESHOLDS,
                   tolerance_m: float = 10.0, min_area_m2: float = 100.0) -> FieldExtraction:
    mask = refined_threshold(e, b, thresholds)
    raw = components_to_polygons(mask, meta)
    return FieldExtraction(mask, raw, simplify_filter(raw, tolerance_m, min_area_m2))
