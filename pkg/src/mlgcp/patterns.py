"""Multivariate point patterns in a rectangular window, with CSV I/O.

File format: header ``x,y,type`` where type is a 1-based integer or an
arbitrary string label; labels are mapped to type indices in order of first
appearance in the file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import Window

__all__ = [
    "MultiPointPattern",
    "Intensity",
    "constant_intensity",
    "read_pattern_csv",
    "write_pattern_csv",
]


@dataclass
class MultiPointPattern:
    """p typed point sets inside a rectangular window.

    points[i] is an (n_i, 2) float array; every point must lie in the window.
    """

    window: Window
    points: list = field(default_factory=list)
    labels: list = None

    def __post_init__(self):
        self.points = [np.atleast_2d(np.asarray(pts, dtype=float)) for pts in self.points]
        if len(self.points) < 1:
            raise ValueError("pattern must have at least one type")
        for i, pts in enumerate(self.points):
            if pts.size == 0:
                self.points[i] = pts.reshape(0, 2)
            elif pts.shape[1] != 2:
                raise ValueError("points must be (n, 2) arrays")
            elif not np.all(self.window.contains(pts)):
                raise ValueError(f"type {i} has points outside the window")
        if self.labels is None:
            self.labels = [str(i + 1) for i in range(len(self.points))]

    @property
    def p(self) -> int:
        return len(self.points)

    def counts(self) -> np.ndarray:
        return np.array([len(pts) for pts in self.points])


class Intensity:
    """Intensity surface for one type: a constant, or values on a raster grid.

    Grid values are indexed [iy, ix] over equal cells covering the window;
    lookup is by containing cell.  Values must be strictly positive.
    """

    def __init__(self, window: Window, constant=None, grid=None):
        if (constant is None) == (grid is None):
            raise ValueError("pass exactly one of constant or grid")
        self.window = window
        if constant is not None:
            if constant <= 0:
                raise ValueError("intensity must be > 0")
            self.constant = float(constant)
            self.grid = None
        else:
            grid = np.asarray(grid, dtype=float)
            if grid.ndim != 2 or np.any(grid <= 0):
                raise ValueError("intensity grid must be 2-d and > 0 everywhere")
            self.constant = None
            self.grid = grid

    def at(self, xy) -> np.ndarray:
        """Evaluate at an (n, 2) array of locations."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if self.constant is not None:
            return np.full(len(xy), self.constant)
        ny, nx = self.grid.shape
        w = self.window
        ix = np.clip(((xy[:, 0] - w.xmin) / w.width * nx).astype(int), 0, nx - 1)
        iy = np.clip(((xy[:, 1] - w.ymin) / w.height * ny).astype(int), 0, ny - 1)
        return self.grid[iy, ix]


def constant_intensity(pattern: MultiPointPattern, i: int) -> Intensity:
    """Constant intensity estimate n_i / |W| for type i."""
    n = len(pattern.points[i])
    if n == 0:
        raise ValueError(f"type {i} has no points; intensity would be zero")
    return Intensity(pattern.window, constant=n / pattern.window.area)


def read_pattern_csv(path, window: Window) -> MultiPointPattern:
    """Read a pattern from a ``x,y,type`` CSV; see module docstring."""
    by_label = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames[:3]] != [
            "x",
            "y",
            "type",
        ]:
            raise ValueError(f"{path}: expected header x,y,type")
        for row in reader:
            label = row["type"].strip()
            if label not in by_label:
                by_label[label] = []
                order.append(label)
            by_label[label].append((float(row["x"]), float(row["y"])))
    labels = order
    # Pure-integer labels are kept in numeric order so type k maps to index k-1.
    if labels and all(lbl.isdigit() for lbl in labels):
        labels = sorted(labels, key=int)
    points = [np.array(by_label[lbl], dtype=float) for lbl in labels]
    return MultiPointPattern(window, points, labels=labels)


def write_pattern_csv(path, pattern: MultiPointPattern):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "type"])
        for i, pts in enumerate(pattern.points):
            label = pattern.labels[i]
            for x, y in pts:
                writer.writerow([repr(float(x)), repr(float(y)), label])
