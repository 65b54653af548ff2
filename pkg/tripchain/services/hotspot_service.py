"""
Quartic kernel density surfaces over anchor point locations and their ESRI ASCII
grid export
"""
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import BallTree

from tripchain.core.config import render_key_value
from tripchain.core.error_handling import AnalysisError
from tripchain.core.geo import EARTH_RADIUS_M, project_many
from tripchain.models.analysis import Raster
from tripchain.models.chains import UserAnchors
from tripchain.models.records import GeoPoint

logger = logging.getLogger(__name__)

# (west, south, east, north) in degrees
Extent = Tuple[float, float, float, float]
WeightedPoint = Tuple[GeoPoint, float]

M2_PER_KM2 = 1_000_000.0


def padded_extent(points: Sequence[GeoPoint], pad_m: float) -> Extent:
    """Bounding box of ``points`` grown by ``pad_m`` on every side"""
    if not points:
        raise AnalysisError("cannot compute the extent of an empty point set")
    lons = [p.lon for p in points]
    lats = [p.lat for p in points]
    center_lat = (min(lats) + max(lats)) / 2.0
    pad_lat = math.degrees(pad_m / EARTH_RADIUS_M)
    pad_lon = pad_lat / math.cos(math.radians(center_lat))
    return min(lons) - pad_lon, min(lats) - pad_lat, max(lons) + pad_lon, max(lats) + pad_lat


def quartic_kernel(distance_m: np.ndarray, radius_m: float) -> np.ndarray:
    """3/(pi r^2) * (1 - (d/r)^2)^2 inside the radius, per m^2"""
    u = np.asarray(distance_m, dtype=float) / radius_m
    return np.where(u < 1.0, 3.0 / (math.pi * radius_m ** 2) * (1.0 - u ** 2) ** 2, 0.0)


def kde_raster(
    weighted_points: Sequence[WeightedPoint],
    radius_m: float,
    cell_size_m: float,
    extent: Optional[Extent] = None
) -> Raster:
    """Quartic kernel density on a grid centered on the extent, values per km².

    Points are projected equirectangularly about the extent center. Without an
    explicit ``extent`` the points' bounding box padded by ``radius_m`` is used.
    """
    if not weighted_points:
        raise AnalysisError("cannot build a density surface from an empty point set")
    if not radius_m > cell_size_m > 0:
        raise AnalysisError(
            f"kde radius must exceed cell size and both be positive (radius={radius_m}, cell={cell_size_m})"
        )
    weights = np.asarray([w for _, w in weighted_points], dtype=float)
    if np.any(weights < 0):
        raise AnalysisError("kde weights must be non-negative")

    if extent is None:
        extent = padded_extent([p for p, _ in weighted_points], radius_m)
    west, south, east, north = extent
    if not (east > west and north > south):
        raise AnalysisError(f"degenerate raster extent {extent}", details={"extent": list(extent)})

    origin = GeoPoint((west + east) / 2.0, (south + north) / 2.0)
    corner_x, corner_y = project_many(origin, np.array([west, east]), np.array([south, north]))
    n_cols = max(1, math.ceil((corner_x[1] - corner_x[0]) / cell_size_m))
    n_rows = max(1, math.ceil((corner_y[1] - corner_y[0]) / cell_size_m))
    xll = -n_cols * cell_size_m / 2.0
    yll = -n_rows * cell_size_m / 2.0

    raster = Raster(origin=origin, xll=xll, yll=yll, cell_size_m=cell_size_m,
                    values=np.zeros((n_rows, n_cols)))
    # coincident points share one kernel with their summed weight
    coords = np.array([(p.lon, p.lat) for p, _ in weighted_points], dtype=float)
    locations, inverse = np.unique(coords, axis=0, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=weights, minlength=len(locations))
    px, py = project_many(origin, locations[:, 0], locations[:, 1])
    tree = BallTree(np.column_stack([px, py]))

    cx, cy = raster.cell_centers()
    centers = np.column_stack([cx.ravel(), cy.ravel()])
    neighbors, distances = tree.query_radius(centers, r=radius_m, return_distance=True)
    sizes = np.fromiter((idx.size for idx in neighbors), dtype=np.int64, count=len(centers))
    if sizes.sum():
        cells = np.repeat(np.arange(len(centers)), sizes)
        contributions = merged[np.concatenate(neighbors)] * quartic_kernel(np.concatenate(distances), radius_m)
        flat = np.bincount(cells, weights=contributions, minlength=len(centers))
    else:
        flat = np.zeros(len(centers))
    raster.values = flat.reshape(n_rows, n_cols) * M2_PER_KM2

    logger.info(
        f"Built {n_rows}x{n_cols} density raster from {len(weighted_points)} points",
        extra={"stage": "hotspot", "count": len(weighted_points),
               "details": {"radius_m": radius_m, "cell_size_m": cell_size_m}}
    )
    return raster


def anchor_weights(
    user_anchors: Iterable[UserAnchors],
    visit_counts: Dict[Tuple[str, int], int],
    weighted: bool = True
) -> List[WeightedPoint]:
    """In-city anchor point locations weighted by visit count, or by one each.

    ``visit_counts`` is keyed by (user_id, ap_id). Anchor points never visited
    after the stay filter are left out.
    """
    points: List[WeightedPoint] = []
    for anchors in user_anchors:
        for ap in anchors.anchors:
            if not ap.in_city:
                continue
            count = visit_counts.get((anchors.user_id, ap.ap_id), 0)
            if count == 0:
                continue
            points.append((ap.location, float(count) if weighted else 1.0))
    return points


def write_ascii_grid(raster: Raster, path: Path) -> None:
    """ESRI ASCII grid, rows top to bottom, coordinates in the projected meter frame"""
    header = (
        f"ncols {raster.n_cols}\n"
        f"nrows {raster.n_rows}\n"
        f"xllcorner {raster.xll:.6f}\n"
        f"yllcorner {raster.yll:.6f}\n"
        f"cellsize {raster.cell_size_m:.6f}\n"
        f"NODATA_value {raster.nodata:.0f}\n"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(header)
        np.savetxt(handle, raster.values, fmt="%.6f", delimiter=" ")


def write_georef(raster: Raster, path: Path, radius_m: float, weighted: bool) -> None:
    """Sidecar recording the projection origin of an ASCII grid"""
    values = {
        "origin_lon": f"{raster.origin.lon:.6f}",
        "origin_lat": f"{raster.origin.lat:.6f}",
        "projection": "equirectangular",
        "units": "meters",
        "cell_size_m": f"{raster.cell_size_m:.6f}",
        "radius_m": f"{radius_m:.6f}",
        "weighted": "true" if weighted else "false",
        "value_units": "per_km2",
    }
    Path(path).write_text(render_key_value(values), encoding="utf-8")
