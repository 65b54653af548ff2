"""
Geodesic distance and local planar projection
"""
import math
from typing import Sequence, Tuple

import numpy as np
from sklearn.neighbors import BallTree

from tripchain.core.error_handling import AnalysisError
from tripchain.models.records import GeoPoint

EARTH_RADIUS_M = 6371008.8

# Equirectangular projection is only used at city scale
MAX_PROJECTION_OFFSET_DEG = 2.0


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters"""
    lon1, lat1, lon2, lat2 = map(math.radians, (a.lon, a.lat, b.lon, b.lat))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_matrix(lons: Sequence[float], lats: Sequence[float]) -> np.ndarray:
    """Pairwise great-circle distances in meters"""
    lon = np.radians(np.asarray(lons, dtype=float))
    lat = np.radians(np.asarray(lats, dtype=float))
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    h = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _check_range(origin: GeoPoint, dlon: float, dlat: float) -> None:
    if abs(dlon) > MAX_PROJECTION_OFFSET_DEG or abs(dlat) > MAX_PROJECTION_OFFSET_DEG:
        raise AnalysisError(
            f"point ({origin.lon + dlon}, {origin.lat + dlat}) is more than "
            f"{MAX_PROJECTION_OFFSET_DEG} degrees from origin ({origin.lon}, {origin.lat})",
            error_key="ANALYSIS_PROJECTION_RANGE",
            details={"dlon": dlon, "dlat": dlat}
        )


def local_project(origin: GeoPoint, p: GeoPoint) -> Tuple[float, float]:
    """Equirectangular projection about ``origin``; returns (x, y) in meters"""
    dlon = p.lon - origin.lon
    dlat = p.lat - origin.lat
    _check_range(origin, dlon, dlat)
    x = EARTH_RADIUS_M * math.radians(dlon) * math.cos(math.radians(origin.lat))
    y = EARTH_RADIUS_M * math.radians(dlat)
    return x, y


def local_unproject(origin: GeoPoint, x_m: float, y_m: float) -> GeoPoint:
    """Inverse of :func:`local_project`"""
    dlat = math.degrees(y_m / EARTH_RADIUS_M)
    dlon = math.degrees(x_m / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    _check_range(origin, dlon, dlat)
    return GeoPoint(origin.lon + dlon, origin.lat + dlat)


def project_many(origin: GeoPoint, lons: np.ndarray, lats: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`local_project`"""
    dlon = np.asarray(lons, dtype=float) - origin.lon
    dlat = np.asarray(lats, dtype=float) - origin.lat
    if dlon.size:
        worst = int(np.argmax(np.maximum(np.abs(dlon), np.abs(dlat))))
        _check_range(origin, float(dlon[worst]), float(dlat[worst]))
    x = EARTH_RADIUS_M * np.radians(dlon) * math.cos(math.radians(origin.lat))
    y = EARTH_RADIUS_M * np.radians(dlat)
    return x, y


def nearest_peer_distances(lons: Sequence[float], lats: Sequence[float]) -> np.ndarray:
    """Distance in meters from each tower to its nearest other tower"""
    coords = np.radians(np.column_stack([np.asarray(lats, dtype=float), np.asarray(lons, dtype=float)]))
    if len(coords) < 2:
        return np.zeros(0)
    tree = BallTree(coords, metric="haversine")
    distances, _ = tree.query(coords, k=2)
    return distances[:, 1] * EARTH_RADIUS_M
