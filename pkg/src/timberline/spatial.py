"""GeoJSON polygon handling: plot assignment and spatial result emission.

Only Polygon and MultiPolygon geometries are supported, in geographic
(longitude, latitude) coordinates.  Containment uses even-odd ray casting
over every ring, so holes subtract naturally.  A plot on a shared boundary
goes to the first containing feature in file order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import GeometryError
from .model import PlotRecord

__all__ = ["PolygonFeature", "PolygonSet", "assign_plots", "emit_spatial"]

Ring = tuple[tuple[float, float], ...]

_ACCEPTED_CRS = {
    "urn:ogc:def:crs:OGC:1.3:CRS84",
    "urn:ogc:def:crs:OGC::CRS84",
    "urn:ogc:def:crs:EPSG::4326",
    "EPSG:4326",
    "CRS84",
}


@dataclass(frozen=True)
class PolygonFeature:
    fid: object
    properties: dict
    rings: tuple[Ring, ...]
    geometry: dict | None = None  # original GeoJSON geometry, kept for emission

    def contains(self, x: float, y: float) -> bool:
        inside = False
        for ring in self.rings:
            for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
                if (y1 > y) != (y2 > y):
                    x_cross = (x2 - x1) * (y - y1) / (y2 - y1) + x1
                    if x < x_cross:
                        inside = not inside
        return inside


class PolygonSet:
    """An ordered collection of polygon features with unique ids."""

    def __init__(self, features: Sequence[PolygonFeature]):
        self.features = tuple(features)
        seen = set()
        for f in self.features:
            if f.fid in seen:
                raise GeometryError(f"duplicate feature id {f.fid!r}")
            seen.add(f.fid)

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    @classmethod
    def from_geojson(cls, source: str | Path | Mapping) -> "PolygonSet":
        """Build from a FeatureCollection object, JSON text, or file path."""
        obj = _load_geojson(source)
        if obj.get("type") != "FeatureCollection":
            raise GeometryError("expected a GeoJSON FeatureCollection")
        crs = obj.get("crs")
        if crs is not None:
            name = str(crs.get("properties", {}).get("name", ""))
            if name not in _ACCEPTED_CRS:
                raise GeometryError(
                    f"unsupported CRS {name!r}; coordinates must be lon/lat (CRS84)"
                )
        features = []
        for i, feat in enumerate(obj.get("features", [])):
            geom = feat.get("geometry") or {}
            gtype = geom.get("type")
            coords = geom.get("coordinates")
            if gtype == "Polygon":
                polys = [coords]
            elif gtype == "MultiPolygon":
                polys = coords
            else:
                raise GeometryError(
                    f"feature {i}: unsupported geometry type {gtype!r} "
                    "(Polygon or MultiPolygon required)"
                )
            rings: list[Ring] = []
            for poly in polys:
                for ring in poly:
                    pts = tuple((float(x), float(y)) for x, y in ring)
                    if len(pts) < 4 or pts[0] != pts[-1]:
                        raise GeometryError(
                            f"feature {i}: ring must be closed with at least 4 points"
                        )
                    rings.append(pts)
            props = dict(feat.get("properties") or {})
            fid = feat.get("id", props.get("id", i))
            features.append(PolygonFeature(fid, props, tuple(rings), dict(geom)))
        return cls(features)


def _load_geojson(source: str | Path | Mapping) -> Mapping:
    if isinstance(source, Mapping):
        return source
    text = None
    if isinstance(source, Path) or (isinstance(source, str) and "{" not in source):
        path = Path(source)
        if not path.is_file():
            raise GeometryError(f"GeoJSON file not found: {path}")
        text = path.read_text(encoding="utf-8")
    else:
        text = str(source)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"invalid GeoJSON: {exc}") from exc


def assign_plots(
    plots: Iterable[PlotRecord], polys: PolygonSet
) -> dict[str, object]:
    """Map plot CN -> containing feature id; plots outside every polygon drop.

    Plots with missing coordinates are skipped (they cannot intersect).
    """
    out: dict[str, object] = {}
    for p in plots:
        if p.lon is None or p.lat is None:
            continue
        for feature in polys:
            if feature.contains(p.lon, p.lat):
                out[p.cn] = feature.fid
                break
    return out


def emit_spatial(table, polys: PolygonSet) -> dict:
    """Join an estimate table carrying POLY_ID back onto its polygons.

    Returns a FeatureCollection with one feature per (input feature, output
    row key); rows are matched on POLY_ID.  Features whose id never appears
    in the table are emitted once with null estimate values.  An estimate
    column that collides with an existing property name gets an ``_est``
    suffix.
    """
    if "POLY_ID" not in table.columns:
        raise GeometryError("table has no POLY_ID column; run with polys= to get one")
    value_cols = [c for c in table.columns if c != "POLY_ID"]
    rows_by_fid: dict[object, list[dict]] = {}
    for row in table.rows:
        rows_by_fid.setdefault(row.get("POLY_ID"), []).append(row)

    out_features = []
    for feature in polys:
        matched = rows_by_fid.get(feature.fid)
        if not matched:
            matched = [dict.fromkeys(value_cols)]
        for row in matched:
            props = dict(feature.properties)
            for col in value_cols:
                name = col if col not in props else f"{col}_est"
                props[name] = row.get(col)
            geojson_feat = {
                "type": "Feature",
                "id": feature.fid,
                "properties": props,
                "geometry": _geometry_of(feature),
            }
            out_features.append(geojson_feat)
    return {"type": "FeatureCollection", "features": out_features}


def _geometry_of(feature: PolygonFeature) -> dict:
    if feature.geometry is not None:
        return feature.geometry
    rings = [[list(pt) for pt in ring] for ring in feature.rings]
    return {"type": "Polygon", "coordinates": rings}
