"""Semantic to instance post-processing of extent/boundary predictions."""
from .pipeline import FieldExtraction, extract_fields
from .matching import Match, match_polygons, polygon_iou
from .polygons import (
    FieldPolygon, PolygonSet, RasterMeta, components_to_polygons, dumps_geojson,
    from_geojson, label_polygons, pairwise_interior_disjoint, rasterize, simplify_filter, to_geojson,
)
from .thinning import DEFAULT_THRESHOLDS, ThresholdPair, boundary_mask, refined_threshold, thin
from .tuning import TuneResult, default_grid, front_table, pareto_front, tune_thresholds

__all__ = [
    "DEFAULT_THRESHOLDS", "FieldExtraction", "FieldPolygon", "Match", "PolygonSet", "RasterMeta", "ThresholdPair",
    "TuneResult", "boundary_mask", "components_to_polygons", "default_grid", "dumps_geojson", "extract_fields",
    "from_geojson", "front_table", "label_polygons", "match_polygons", "pairwise_interior_disjoint", "pareto_front",
    "polygon_iou", "rasterize", "refined_threshold", "simplify_filter", "thin", "to_geojson",
    "tune_thresholds",
]
