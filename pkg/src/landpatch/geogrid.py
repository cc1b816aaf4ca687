"""Geodetic grid math for survey areas anchored at a north-east corner.

A survey area is a square of ``side_m`` meters laid out from its NE corner
into ``grid_n`` x ``grid_n`` patch cells. Row index grows southward and
column index grows westward from the anchor, so cell (0, 0) abuts the NE
corner. Earth model: sphere of radius 6,371,000 m with a local
equirectangular approximation anchored at the NE-corner latitude; the
longitude scale uses cos(anchor latitude) for every cell, which keeps cells
exactly uniform in degree space and is accurate to well under a meter over
the few-km extents this module supports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DataError

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair in degrees; lon normalized into [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise DataError(f"non-finite coordinate: lat={self.lat}, lon={self.lon}")
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"latitude {self.lat} outside [-90, 90]")
        # normalize only out-of-range values; in-range ones stay bit-exact
        if not -180.0 <= self.lon < 180.0:
            lon = ((self.lon + 180.0) % 360.0) - 180.0
            object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class AreaSpec:
    """A square survey area: NE corner, side length, grid size, patch size.

    Defaults reproduce the standard survey unit: 1 km² split into 1296
    patches of 200x200 px.
    """

    ne_corner: GeoPoint
    side_m: float = 1000.0
    grid_n: int = 36
    patch_px: int = 200

    def __post_init__(self):
        if not (math.isfinite(self.side_m) and self.side_m > 0):
            raise DataError(f"side_m must be > 0, got {self.side_m}")
        if self.grid_n < 1:
            raise DataError(f"grid_n must be a positive integer, got {self.grid_n}")
        if self.patch_px < 1:
            raise DataError(f"patch_px must be a positive integer, got {self.patch_px}")

    @property
    def cell_side_m(self) -> float:
        return self.side_m / self.grid_n


@dataclass(frozen=True)
class GeoPatchMeta:
    """One grid cell: indices, center point, and (north, south, east, west) bounds."""

    row: int
    col: int
    center: GeoPoint
    bounds: tuple[float, float, float, float]


@dataclass(frozen=True)
class GeoPatchGrid:
    """The full cell layout of a survey area, row-major from the NE anchor."""

    area: AreaSpec
    cells: tuple[tuple[GeoPatchMeta, ...], ...] = field(repr=False)

    def cell(self, row: int, col: int) -> GeoPatchMeta:
        return self.cells[row][col]

    def __iter__(self):
        for row in self.cells:
            yield from row

    def __len__(self) -> int:
        return self.area.grid_n * self.area.grid_n


def meters_per_degree(lat: float) -> tuple[float, float]:
    """Meters per degree of latitude and of longitude at the given latitude.

    On the spherical model the latitude scale is constant (pi*R/180) and the
    longitude scale shrinks with cos(lat).
    """
    if not math.isfinite(lat) or not -90.0 <= lat <= 90.0:
        raise DataError(f"latitude {lat} outside [-90, 90]")
    m_per_deg_lat = math.pi * EARTH_RADIUS_M / 180.0
    m_per_deg_lon = m_per_deg_lat * math.cos(math.radians(lat))
    return m_per_deg_lat, m_per_deg_lon


def build_grid(area: AreaSpec) -> GeoPatchGrid:
    """Lay out the grid_n x grid_n cells of a survey area.

    Cell (0, 0) abuts the NE anchor; each step south or west offsets by
    side_m/grid_n meters converted to degrees at the anchor latitude.
    """
    lat0 = area.ne_corner.lat
    lon0 = area.ne_corner.lon
    m_lat, m_lon = meters_per_degree(lat0)
    if m_lon <= 0.0:
        raise DataError(f"cannot build a grid at latitude {lat0}: degenerate longitude scale")
    step_m = area.cell_side_m
    dlat = step_m / m_lat
    dlon = step_m / m_lon

    rows = []
    for r in range(area.grid_n):
        north = lat0 - r * dlat
        south = lat0 - (r + 1) * dlat
        row_cells = []
        for c in range(area.grid_n):
            east = lon0 - c * dlon
            west = lon0 - (c + 1) * dlon
            center = GeoPoint((north + south) / 2.0, (east + west) / 2.0)
            row_cells.append(GeoPatchMeta(r, c, center, (north, south, east, west)))
        rows.append(tuple(row_cells))
    return GeoPatchGrid(area=area, cells=tuple(rows))


def locate(grid: GeoPatchGrid, p: GeoPoint) -> tuple[int, int] | None:
    """Find the cell whose bounds contain ``p``, or None if outside the area.

    Cells are half-open: each owns its north and east edges, so a point on an
    interior shared edge belongs to the cell for which that edge is the north
    (or east) bound.
    """
    area = grid.area
    lat0 = area.ne_corner.lat
    lon0 = area.ne_corner.lon
    m_lat, m_lon = meters_per_degree(lat0)
    step_m = area.cell_side_m
    dlat = step_m / m_lat
    dlon = step_m / m_lon
    n = area.grid_n

    def contains_row(r: int) -> bool:
        return (lat0 - (r + 1) * dlat) < p.lat <= (lat0 - r * dlat)

    def contains_col(c: int) -> bool:
        return (lon0 - (c + 1) * dlon) < p.lon <= (lon0 - c * dlon)

    row = _index_for((lat0 - p.lat) / dlat, n, contains_row)
    if row is None:
        return None
    col = _index_for((lon0 - p.lon) / dlon, n, contains_col)
    if col is None:
        return None
    return row, col


def _index_for(offset: float, n: int, contains) -> int | None:
    # Float rounding near a shared edge can put floor() one cell off; probe
    # the neighbors against the exact half-open predicate.
    guess = math.floor(offset)
    for r in (guess, guess - 1, guess + 1):
        if 0 <= r < n and contains(r):
            return r
    return None
