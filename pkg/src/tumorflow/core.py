"""Uniform cell-centered grids, fields, midpoint quadrature and norms.

Fields store their values as a ``(ny, nx)`` array, so the flattened
(row-major) order runs over x fastest. Cell ``(i, j)`` has its center at
``((i + 1/2) hx, (j + 1/2) hy)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Rectangle ``[0, lx] x [0, ly]`` split into ``nx * ny`` equal cells."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("cell counts must be integers")
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"cell counts must be positive, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0 and math.isfinite(self.lx) and math.isfinite(self.ly)):
            raise ValueError(f"side lengths must be positive and finite, got {self.lx}, {self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def h_min(self) -> float:
        return min(self.hx, self.hy)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def measure(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as two ``(ny, nx)`` arrays."""
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="xy")

    def center(self, i: int, j: int) -> tuple[float, float]:
        return ((i + 0.5) * self.hx, (j + 0.5) * self.hy)

    def refine(self, factor: int) -> GridSpec:
        return GridSpec(self.nx * factor, self.ny * factor, self.lx, self.ly)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            j, i = divmod(int(bad[0]), self.grid.nx)
            raise ValueError(f"non-finite value at cell (i={i}, j={j})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def with_values(self, values) -> ScalarField:
        return ScalarField(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _raw(other))

    def __sub__(self, other):
        return self.with_values(self.values - _raw(other))

    def __mul__(self, other):
        return self.with_values(self.values * _raw(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Cell-centered velocity, optionally carrying face-normal velocities.

    ``face_x`` has shape ``(ny, nx + 1)`` (x-normal faces, left to right) and
    ``face_y`` shape ``(ny + 1, nx)``. When present they are what the upwind
    transport uses; otherwise faces are averaged from the cell centers.
    """

    grid: GridSpec
    ux: np.ndarray
    uy: np.ndarray
    face_x: np.ndarray | None = field(default=None)
    face_y: np.ndarray | None = field(default=None)

    def __post_init__(self):
        for name in ("ux", "uy"):
            v = np.array(getattr(self, name), dtype=float).reshape(self.grid.shape)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite velocity component {name}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        ny, nx = self.grid.shape
        for name, shape in (("face_x", (ny, nx + 1)), ("face_y", (ny + 1, nx))):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.array(v, dtype=float).reshape(shape)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.ux, self.uy)

    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Face-normal velocities; boundary faces are always zero."""
        if self.face_x is not None and self.face_y is not None:
            return self.face_x, self.face_y
        ny, nx = self.grid.shape
        fx = np.zeros((ny, nx + 1))
        fy = np.zeros((ny + 1, nx))
        fx[:, 1:-1] = 0.5 * (self.ux[:, 1:] + self.ux[:, :-1])
        fy[1:-1, :] = 0.5 * (self.uy[1:, :] + self.uy[:-1, :])
        return fx, fy


def _raw(other):
    return other.values if isinstance(other, ScalarField) else other


def field_from_fn(grid: GridSpec, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> ScalarField:
    """Sample ``f(x, y)`` at the cell centers.

    ``f`` is called once with the two ``(ny, nx)`` coordinate arrays; a
    scalar result is broadcast.
    """
    x, y = grid.mesh()
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), grid.shape)
    return ScalarField(grid, vals)


def constant_field(grid: GridSpec, c: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(c)))


def integrate(fld: ScalarField) -> float:
    """Midpoint rule: ``hx * hy * sum(values)``."""
    return fld.grid.cell_area * math.fsum(fld.values.ravel())


def lq_norm(fld: ScalarField, q: float) -> float:
    if not q >= 1:
        raise ValueError(f"lq_norm needs q >= 1, got {q}")
    if math.isinf(q):
        return float(np.abs(fld.values).max())
    a = np.abs(fld.values)
    scale = a.max()
    if scale == 0:
        return 0.0
    # scaled to keep large q from overflowing
    return float(scale * (fld.grid.cell_area * np.sum((a / scale) ** q)) ** (1.0 / q))


def _diff_axis(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    n = v.shape[axis]
    d = np.zeros_like(v)
    if n == 1:
        return d
    v = np.moveaxis(v, axis, 0)
    out = np.moveaxis(d, axis, 0)
    if n == 2:
        out[:] = (v[1] - v[0]) / h
        return d
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    # (-3, 4, -1) / 2h written in differences so constants give exactly 0
    out[0] = (4 * (v[1] - v[0]) - (v[2] - v[0])) / (2 * h)
    out[-1] = (4 * (v[-1] - v[-2]) - (v[-1] - v[-3])) / (2 * h)
    return d


def gradient_centered(fld: ScalarField) -> VectorField:
    """Second-order central differences, one-sided second order at the edges."""
    g = fld.grid
    return VectorField(g, _diff_axis(fld.values, g.hx, 1), _diff_axis(fld.values, g.hy, 0))


# --- snapshot files ---------------------------------------------------------

def write_snapshot(path, fld: ScalarField, t: float = 0.0) -> Path:
    g = fld.grid
    path = Path(path)
    lines = [f"# nx={g.nx} ny={g.ny} lx={g.lx:.17g} ly={g.ly:.17g} t={t:.17g}"]
    lines.extend(f"{v:.17g}" for v in fld.values.ravel())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_snapshot(path) -> tuple[ScalarField, float]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = {}
    values = []
    for line in text:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                header[key] = val
        else:
            values.append(float(line))
    try:
        grid = GridSpec(int(header["nx"]), int(header["ny"]), float(header["lx"]), float(header["ly"]))
    except KeyError as exc:
        raise ValueError(f"snapshot header missing {exc.args[0]!r}") from None
    return ScalarField(grid, np.array(values)), float(header.get("t", 0.0))
