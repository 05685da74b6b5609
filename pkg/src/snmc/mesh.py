"""Uniform Cartesian meshes, per-cell material fields, and grid ray traversal."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

# Relative guard for corner-grazing ties: when the parameter distances to the
# next x-face and y-face agree to this level, the ray crosses both.
_TIE = 1.0 + 1e-12


@dataclass(frozen=True)
class Mesh:
    """Square grid of n_cells x n_cells cells on [x_min, x_min+extent] x [y_min, y_min+extent].

    Cells are indexed (ix, iy) from the lower-left corner, 0-based.  Points on
    an interior face belong to the +x/+y neighbor; points on the outer
    right/top boundary belong to the last cell, so the closed domain is fully
    covered.
    """

    x_min: float
    y_min: float
    extent: float
    n_cells: int

    def __post_init__(self) -> None:
        if self.n_cells < 1:
            raise ValueError(f"n_cells must be >= 1, got {self.n_cells}")
        if not self.extent > 0.0:
            raise ValueError(f"extent must be positive, got {self.extent}")

    @property
    def h(self) -> float:
        return self.extent / self.n_cells

    @property
    def x_max(self) -> float:
        return self.x_min + self.extent

    @property
    def y_max(self) -> float:
        return self.y_min + self.extent

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def cell_centers_x(self) -> np.ndarray:
        return self.x_min + self.h * (np.arange(self.n_cells) + 0.5)

    def cell_centers_y(self) -> np.ndarray:
        return self.y_min + self.h * (np.arange(self.n_cells) + 0.5)

    def contains(self, x: float, y: float) -> bool:
        return (self.x_min <= x <= self.x_max) and (self.y_min <= y <= self.y_max)

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """Cell containing (x, y), or None if outside the closed domain."""
        if not self.contains(x, y):
            return None
        n = self.n_cells
        ix = min(max(int((x - self.x_min) // self.h), 0), n - 1)
        iy = min(max(int((y - self.y_min) // self.h), 0), n - 1)
        return ix, iy

    def cell_index_arrays(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized cell lookup; callers must guarantee the points lie inside."""
        n = self.n_cells
        ix = np.clip(np.floor((x - self.x_min) / self.h).astype(np.int64), 0, n - 1)
        iy = np.clip(np.floor((y - self.y_min) / self.h).astype(np.int64), 0, n - 1)
        return ix, iy


@dataclass
class MaterialField:
    """Per-cell total and scattering cross sections, arrays indexed [ix, iy]."""

    sigma_t: np.ndarray
    sigma_s: np.ndarray

    def __post_init__(self) -> None:
        self.sigma_t = np.ascontiguousarray(self.sigma_t, dtype=np.float64)
        self.sigma_s = np.ascontiguousarray(self.sigma_s, dtype=np.float64)
        if self.sigma_t.ndim != 2 or self.sigma_t.shape != self.sigma_s.shape:
            raise ValueError("sigma_t and sigma_s must be 2-D arrays of equal shape")
        if np.any(self.sigma_s < 0.0) or np.any(self.sigma_s > self.sigma_t):
            raise ValueError("require 0 <= sigma_s <= sigma_t in every cell")

    @property
    def sigma_a(self) -> np.ndarray:
        return self.sigma_t - self.sigma_s


def paint_cells(
    mesh: Mesh,
    rects: Iterable[tuple[float, float, float, float, float]],
    base: float = 0.0,
) -> np.ndarray:
    """Fill a per-cell array by painting axis-aligned rectangles in order.

    Each entry is (x0, y0, x1, y1, value).  A cell takes the value when its
    center lies in the closed rectangle; later rectangles override earlier
    ones.
    """
    grid = np.full((mesh.n_cells, mesh.n_cells), float(base))
    cx = mesh.cell_centers_x()
    cy = mesh.cell_centers_y()
    for x0, y0, x1, y1, value in rects:
        in_x = (cx >= x0) & (cx <= x1)
        in_y = (cy >= y0) & (cy <= y1)
        grid[np.ix_(in_x, in_y)] = value
    return grid


@dataclass(frozen=True)
class RaySegment:
    """One in-cell piece of a traced ray, in ray-parameter units."""

    ix: int
    iy: int
    s_start: float
    length: float


def trace_ray(
    mesh: Mesh,
    x0: float,
    y0: float,
    dir_x: float,
    dir_y: float,
    length: float,
) -> list[RaySegment]:
    """Split the ray x(s) = (x0, y0) + s*(dir_x, dir_y), s in [0, length], into per-cell segments.

    The direction need not be normalized; segment lengths are in parameter
    units.  Traversal stops when the ray leaves the domain.  Zero-length
    pieces (starting exactly on a face and crossing immediately) are omitted.
    """
    if length < 0.0:
        raise ValueError(f"ray length must be non-negative, got {length}")
    start = mesh.cell_of(x0, y0)
    if start is None:
        raise ValueError(f"ray origin ({x0}, {y0}) lies outside the mesh")
    ix, iy = start
    n = mesh.n_cells
    h = mesh.h
    segments: list[RaySegment] = []
    s = 0.0
    while True:
        x = x0 + s * dir_x
        y = y0 + s * dir_y
        if dir_x > 0.0:
            t_x = (mesh.x_min + (ix + 1) * h - x) / dir_x
        elif dir_x < 0.0:
            t_x = (mesh.x_min + ix * h - x) / dir_x
        else:
            t_x = math.inf
        if dir_y > 0.0:
            t_y = (mesh.y_min + (iy + 1) * h - y) / dir_y
        elif dir_y < 0.0:
            t_y = (mesh.y_min + iy * h - y) / dir_y
        else:
            t_y = math.inf
        t_x = max(t_x, 0.0)
        t_y = max(t_y, 0.0)
        t_face = min(t_x, t_y)
        if length - s <= t_face:
            if length - s > 0.0:
                segments.append(RaySegment(ix, iy, s, length - s))
            return segments
        if t_face > 0.0:
            segments.append(RaySegment(ix, iy, s, t_face))
        s += t_face
        if t_x <= t_y * _TIE:
            ix += 1 if dir_x > 0.0 else -1
        if t_y <= t_x * _TIE:
            iy += 1 if dir_y > 0.0 else -1
        if not (0 <= ix < n and 0 <= iy < n):
            return segments
