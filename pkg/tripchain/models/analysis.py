"""
Analysis result models: transitions, effort metrics, distribution fits, rasters and run manifests
"""
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
from pydantic import BaseModel, Field

from tripchain.models.records import GeoPoint

OTHERS = "others"


class TransitionMatrix(BaseModel):
    """Original-day (rows) to transferred-day (columns) chain type transitions"""
    row_labels: List[str]
    column_labels: List[str]
    frequencies: List[List[int]]
    probabilities: List[List[float]]
    empty_rows: List[str] = Field(default_factory=list, description="Rows with zero total, left all-zero")

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.frequencies)

    def probability(self, original: str, transferred: str) -> float:
        return self.probabilities[self.row_labels.index(original)][self.column_labels.index(transferred)]

    def frequency(self, original: str, transferred: str) -> int:
        return self.frequencies[self.row_labels.index(original)][self.column_labels.index(transferred)]


class LogNormalFit(BaseModel):
    mu: float
    sigma: float = Field(..., gt=0)
    r_squared: float
    sse: float
    support_min: int
    support_max: int


class GroupSummary(BaseModel):
    """Five-number summary of a metric within one node-count group"""
    group: str
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    values: List[float] = Field(default_factory=list, description="Retained for violin plots")


class ObservationDaySummary(BaseModel):
    """Distribution of observed days per user"""
    users: int
    distribution: Dict[int, int]
    median_days: float
    mean_days: float
    max_days: int
    gap_day_users: int
    gap_day_share: float


@dataclass
class Raster:
    """Gridded density surface; ``values[0]`` is the northernmost row.

    Coordinates of ``xll``/``yll`` are in the projected meter frame centered on ``origin``.
    """
    origin: GeoPoint
    xll: float
    yll: float
    cell_size_m: float
    values: np.ndarray
    nodata: float = -9999.0

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1])

    def cell_centers(self):
        """Projected (x, y) center grids, rows ordered north to south"""
        xs = self.xll + (np.arange(self.n_cols) + 0.5) * self.cell_size_m
        ys = self.yll + (self.n_rows - np.arange(self.n_rows) - 0.5) * self.cell_size_m
        return np.meshgrid(xs, ys)

    def total_mass(self) -> float:
        """Integral of the surface; values are per km²"""
        valid = self.values[self.values != self.nodata]
        return float(valid.sum() * (self.cell_size_m / 1000.0) ** 2)


class RunManifest(BaseModel):
    """Inputs, config snapshot, stage counts and output digests of one run"""
    tool_version: str
    config: Dict[str, str]
    inputs: Dict[str, str]
    counts: Dict[str, int]
    outputs: Dict[str, str] = Field(default_factory=dict)
    context: Dict[str, str] = Field(default_factory=dict)
