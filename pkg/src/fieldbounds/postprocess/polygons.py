"""Raster to polygon conversion along pixel edges, and back."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import shapely
from scipy import ndimage
from shapely.geometry import Polygon, mapping, shape
from shapely.geometry.polygon import orient

from ..errors import FormatError

WGS84_TAGS = {"EPSG:4326", "OGC:CRS84", "WGS84", "CRS84"}
FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class RasterMeta:
    """Grid size plus a GDAL-style affine (x0, dx, rx, y0, ry, dy)."""

    width: int
    height: int
    geotransform: tuple = (0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    crs_tag: str = ""

    def __post_init__(self):
        gt = tuple(float(v) for v in self.geotransform)
        if len(gt) != 6:
            raise FormatError("geotransform needs 6 values")
        if gt[1] * gt[5] - gt[2] * gt[4] == 0:
            raise FormatError("geotransform is singular")
        object.__setattr__(self, "geotransform", gt)

    @property
    def pixel_area(self) -> float:
        gt = self.geotransform
        return abs(gt[1] * gt[5] - gt[2] * gt[4])

    def to_world(self, cols, rows):
        x0, dx, rx, y0, ry, dy = self.geotransform
        cols = np.asarray(cols, dtype=np.float64)
        rows = np.asarray(rows, dtype=np.float64)
        return x0 + cols * dx + rows * rx, y0 + cols * ry + rows * dy


@dataclass
class FieldPolygon:
    geometry: Polygon
    component_id: int = 0
    origin: tuple = (0, 0)  # (row, col) of the first pixel of the component

    @property
    def area_m2(self) -> float:
        return float(self.geometry.area)

    def vertices(self) -> np.ndarray:
        """Distinct ring vertices (closing repeats removed), exterior first."""
        rings = [self.geometry.exterior, *self.geometry.interiors]
        return np.concatenate([np.asarray(r.coords)[:-1] for r in rings])


@dataclass
class PolygonSet:
    polygons: list = field(default_factory=list)
    crs_tag: str = ""

    def __len__(self):
        return len(self.polygons)

    def __iter__(self):
        return iter(self.polygons)


# direction vectors in (x, y) pixel coordinates, y pointing down
_E, _S, _W, _N = (1, 0), (0, 1), (-1, 0), (0, -1)


def _edges(mask: np.ndarray):
    """Directed boundary edges keeping the foreground on the right (y down)."""
    m = np.pad(mask, 1)
    inner = m[1:-1, 1:-1]
    out = {}

    def add(sel, dx0, dy0, d):
        rows, cols = np.nonzero(sel)
        for r, c in zip(rows.tolist(), cols.tolist()):
            out.setdefault((c + dx0, r + dy0), []).append(d)

    add(inner & ~m[:-2, 1:-1], 0, 0, _E)   # top side, west -> east
    add(inner & ~m[1:-1, 2:], 1, 0, _S)    # right side, north -> south
    add(inner & ~m[2:, 1:-1], 1, 1, _W)    # bottom side, east -> west
    add(inner & ~m[1:-1, :-2], 0, 1, _N)   # left side, south -> north
    return out


def _turn_order(d):
    dx, dy = d
    # left, straight, right as seen on screen with y down
    return [(dy, -dx), d, (-dy, dx)]


def _trace_rings(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    edges = _edges(mask)
    rings = []
    while edges:
        start = min(edges)
        d = edges[start][0]
        v = start
        ring = [start]
        prev_dir = None
        while True:
            outs = edges[v]
            if prev_dir is not None:
                d = next(c for c in _turn_order(prev_dir) if c in outs)
            outs.remove(d)
            if not outs:
                del edges[v]
            if d != prev_dir and prev_dir is not None:
                ring.append(v)
            v = (v[0] + d[0], v[1] + d[1])
            prev_dir = d
            if v == start:
                break
        # drop the start vertex if it is collinear with its neighbours
        first_dir = (ring[1][0] - ring[0][0], ring[1][1] - ring[0][1]) if len(ring) > 1 else None
        if first_dir is not None:
            fd = (np.sign(first_dir[0]), np.sign(first_dir[1]))
            if fd == prev_dir:
                ring = ring[1:]
        rings.append(ring)
    return rings


def _shoelace(ring):
    a = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:] + ring[:1]):
        a += x1 * y2 - x2 * y1
    return 0.5 * a


def mask_to_polygon(mask: np.ndarray, meta: RasterMeta, offset=(0, 0)) -> Polygon:
    """Polygon of one 4-connected component, traced along pixel edges."""
    rings = _trace_rings(mask)
    rings.sort(key=lambda r: -abs(_shoelace(r)))
    world = []
    for ring in rings:
        cols = [p[0] + offset[1] for p in ring]
        rows = [p[1] + offset[0] for p in ring]
        xs, ys = meta.to_world(cols, rows)
        world.append(list(zip(xs.tolist(), ys.tolist())))
    return orient(Polygon(world[0], world[1:]), sign=1.0)


def components_to_polygons(mask, meta: RasterMeta) -> PolygonSet:
    """One polygon per 4-connected foreground component, holes preserved."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=FOUR)
    polys = []
    for cid, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        comp = labels[sl] == cid
        r0, c0 = sl[0].start, sl[1].start
        first = np.argwhere(comp)[0]
        geom = mask_to_polygon(comp, meta, offset=(r0, c0))
        polys.append(FieldPolygon(geom, cid, (int(r0 + first[0]), int(c0 + first[1]))))
    return PolygonSet(polys, meta.crs_tag)


def label_polygons(labels, meta: RasterMeta) -> PolygonSet:
    """Polygons of every positive label; ``component_id`` carries the label."""
    labels = np.asarray(labels)
    polys = []
    for lab in np.unique(labels[labels > 0]).tolist():
        for fp in components_to_polygons(labels == lab, meta):
            polys.append(FieldPolygon(fp.geometry, int(lab), fp.origin))
    return PolygonSet(polys, meta.crs_tag)


def rasterize(ps: PolygonSet, meta: RasterMeta) -> np.ndarray:
    """Integer map of 1-based polygon indices sampled at pixel centres."""
    rows, cols = np.mgrid[0:meta.height, 0:meta.width]
    xs, ys = meta.to_world(cols + 0.5, rows + 0.5)
    out = np.zeros((meta.height, meta.width), dtype=np.int32)
    for i, fp in enumerate(ps.polygons, start=1):
        inside = shapely.contains_xy(fp.geometry, xs, ys)
        out[inside] = i
    return out


def simplify_filter(ps: PolygonSet, tolerance_m: float = 10.0, min_area_m2: float = 100.0) -> PolygonSet:
    """Douglas-Peucker simplification followed by an area filter.

    A polygon whose exterior collapses below three distinct vertices is
    dropped. If plain Douglas-Peucker yields a self-intersecting ring the
    topology-preserving variant is used for that polygon instead.
    """
    kept = []
    for fp in ps.polygons:
        g = fp.geometry
        if tolerance_m > 0:
            g = fp.geometry.simplify(tolerance_m, preserve_topology=False)
            if g.is_empty or g.geom_type != "Polygon" or len(g.exterior.coords) < 4:
                continue
            if not g.is_valid:
                g = fp.geometry.simplify(tolerance_m, preserve_topology=True)
        if g.is_empty or g.geom_type != "Polygon" or not g.is_valid:
            continue
        if g.area < min_area_m2:
            continue
        kept.append(FieldPolygon(orient(g, sign=1.0), fp.component_id, fp.origin))
    return PolygonSet(kept, ps.crs_tag)


def pairwise_interior_disjoint(ps: PolygonSet, tol: float = 0.0) -> bool:
    geoms = [p.geometry for p in ps.polygons]
    tree = shapely.STRtree(geoms)
    for i, g in enumerate(geoms):
        for j in tree.query(g):
            if j > i and g.intersection(geoms[j]).area > tol:
                return False
    return True


# --- GeoJSON -----------------------------------------------------------------

def to_geojson(ps: PolygonSet) -> dict:
    doc = {"type": "FeatureCollection"}
    if ps.crs_tag and ps.crs_tag not in WGS84_TAGS:
        doc["crs_tag"] = ps.crs_tag
    feats = []
    for fp in ps.polygons:
        geom = mapping(fp.geometry)
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Polygon",
                         "coordinates": [[list(xy) for xy in ring] for ring in geom["coordinates"]]},
            "properties": {"area_m2": fp.area_m2, "component_id": fp.component_id},
        })
    doc["features"] = feats
    return doc


def dumps_geojson(ps: PolygonSet) -> str:
    return json.dumps(to_geojson(ps), separators=(",", ":")) + "\n"


def from_geojson(doc) -> PolygonSet:
    if isinstance(doc, str):
        doc = json.loads(doc)
    if doc.get("type") != "FeatureCollection":
        raise FormatError("expected a GeoJSON FeatureCollection")
    polys = []
    for i, feat in enumerate(doc.get("features", []), start=1):
        geom = shape(feat["geometry"])
        if geom.geom_type != "Polygon":
            raise FormatError(f"feature {i} is a {geom.geom_type}, not a Polygon")
        props = feat.get("properties") or {}
        polys.append(FieldPolygon(geom, int(props.get("component_id", i))))
    return PolygonSet(polys, doc.get("crs_tag", "OGC:CRS84"))


def vertex_sets(ps: PolygonSet) -> Sequence[np.ndarray]:
    return [p.vertices() for p in ps.polygons]
