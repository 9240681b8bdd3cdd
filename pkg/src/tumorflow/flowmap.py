"""Characteristics of ``u = -grad W`` and the Jacobian-determinant transport.

Velocity data comes as *frames*: ``(t, VectorField)`` pairs (or
:class:`tumorflow.simulator.Frame` objects), interpolated bilinearly in
space and linearly in time. A bare ``VectorField`` / ``ScalarField`` is
treated as steady.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import GridSpec, ScalarField, VectorField
from .kinetics import Params

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FlowTrace:
    times: np.ndarray
    positions: np.ndarray  # (len(times), 2)
    det_jac: np.ndarray | None = None
    divu_along: np.ndarray | None = None
    max_clip: float = 0.0

    def write_csv(self, path) -> Path:
        if self.det_jac is None:
            raise ValueError("trace has no determinant history; call jacobian_det first")
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("t", "x", "y", "det", "divu"))
            for t, (x, y), d, v in zip(self.times, self.positions, self.det_jac, self.divu_along):
                w.writerow([f"{t:.17g}", f"{x:.17g}", f"{y:.17g}", f"{d:.17g}", f"{v:.17g}"])
        return path


class _Frames:
    """Time-indexed cell-centered data, each entry a tuple of ``(ny, nx)`` arrays."""

    def __init__(self, frames, kind):
        if isinstance(frames, (VectorField, ScalarField)):
            self.steady = True
            frames = [(0.0, frames)]
        else:
            self.steady = False
        times, data = [], []
        for fr in frames:
            if hasattr(fr, "t"):
                t, obj = fr.t, (fr.u if kind == "vector" else fr.divu)
            else:
                t, obj = fr
            times.append(float(t))
            if kind == "vector":
                data.append((np.asarray(obj.ux), np.asarray(obj.uy)))
            else:
                data.append((np.asarray(obj.values),))
            grid = obj.grid
        if not times:
            raise ValueError("no frames given")
        order = np.argsort(times, kind="stable")
        self.times = np.asarray(times)[order]
        self.data = [data[i] for i in order]
        if np.any(np.diff(self.times) <= 0) and len(self.times) > 1:
            raise ValueError("frame times must be distinct")
        self.grid: GridSpec = grid

    def covers(self, t0, t1):
        if self.steady:
            return True
        eps = 1e-12 * max(1.0, abs(t1))
        return self.times[0] <= t0 + eps and self.times[-1] >= t1 - eps

    def nodes(self, t0, t1):
        """Frame times strictly inside ``(t0, t1)``."""
        if self.steady:
            return np.array([])
        inside = (self.times > t0) & (self.times < t1)
        return self.times[inside]

    def _bracket(self, t):
        if self.steady or len(self.times) == 1:
            return 0, 0, 0.0
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        w = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        return k, k + 1, w

    def sample(self, t, pts):
        """Interpolate every component at points ``pts`` (shape ``(N, 2)``)."""
        k0, k1, w = self._bracket(t)
        a = [bilinear(self.grid, c, pts) for c in self.data[k0]]
        if w == 0.0:
            return a
        b = [bilinear(self.grid, c, pts) for c in self.data[k1]]
        return [(1 - w) * ca + w * cb for ca, cb in zip(a, b)]


def bilinear(grid: GridSpec, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of cell-centered ``values``, constant beyond the outer centers."""
    ny, nx = grid.shape
    sx = np.clip(pts[:, 0] / grid.hx - 0.5, 0.0, nx - 1.0)
    sy = np.clip(pts[:, 1] / grid.hy - 0.5, 0.0, ny - 1.0)
    i0 = np.minimum(np.floor(sx).astype(int), max(nx - 2, 0))
    j0 = np.minimum(np.floor(sy).astype(int), max(ny - 2, 0))
    wx = sx - i0
    wy = sy - j0
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    v = values
    return (
        (1 - wx) * (1 - wy) * v[j0, i0]
        + wx * (1 - wy) * v[j0, i1]
        + (1 - wx) * wy * v[j1, i0]
        + wx * wy * v[j1, i1]
    )


def _time_grid(frames: _Frames, t0, t1, dt, substeps):
    if dt is not None:
        n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
        return np.linspace(t0, t1, n + 1)
    nodes = np.concatenate([[t0], frames.nodes(t0, t1), [t1]])
    if frames.steady and t1 > t0:
        nodes = np.linspace(t0, t1, 101)
    if substeps > 1:
        fine = [np.linspace(a, b, substeps + 1)[:-1] for a, b in zip(nodes[:-1], nodes[1:])]
        nodes = np.concatenate(fine + [[t1]])
    return nodes


def _clip(grid: GridSpec, pts: np.ndarray) -> float:
    before = pts.copy()
    pts[:, 0] = np.clip(pts[:, 0], 0.0, grid.lx)
    pts[:, 1] = np.clip(pts[:, 1], 0.0, grid.ly)
    return float(np.abs(pts - before).max()) if pts.size else 0.0


def integrate_points(x0, velocity_frames, t0, t1, dt=None, substeps=1):
    """Midpoint RK2 for many seeds at once.

    Returns ``(times, positions, max_clip)`` with ``positions`` of shape
    ``(len(times), N, 2)``.
    """
    frames = velocity_frames if isinstance(velocity_frames, _Frames) else _Frames(velocity_frames, "vector")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if not frames.covers(t0, t1):
        raise ValueError(f"frames span [{frames.times[0]}, {frames.times[-1]}], not [{t0}, {t1}]")
    grid = frames.grid
    pts = np.array(x0, dtype=float).reshape(-1, 2)
    times = _time_grid(frames, t0, t1, dt, substeps) if t1 > t0 else np.array([t0])
    hist = np.empty((len(times), len(pts), 2))
    hist[0] = pts
    max_clip = 0.0
    for k in range(1, len(times)):
        ta, tb = times[k - 1], times[k]
        h = tb - ta
        ux, uy = frames.sample(ta, pts)
        mid = pts + 0.5 * h * np.column_stack([ux, uy])
        max_clip = max(max_clip, _clip(grid, mid))
        ux, uy = frames.sample(ta + 0.5 * h, mid)
        pts = pts + h * np.column_stack([ux, uy])
        max_clip = max(max_clip, _clip(grid, pts))
        hist[k] = pts
    if max_clip > 0:
        level = logging.WARNING if max_clip > grid.h_min else logging.DEBUG
        log.log(level, "characteristics clipped to the domain by up to %.3e", max_clip)
    return times, hist, max_clip


def advect_point(x0, velocity_frames, t0: float, t1: float, dt=None, substeps: int = 1) -> FlowTrace:
    """Trace ``dx/dt = u(t, x)`` from ``x(t0) = x0`` to ``t1``.

    Steps land on every frame time (``substeps`` refines each interval);
    pass ``dt`` to use a uniform step instead.
    """
    times, hist, clip = integrate_points(np.asarray(x0, float)[None, :], velocity_frames, t0, t1, dt, substeps)
    return FlowTrace(times=times, positions=hist[:, 0, :], max_clip=clip)


def _cumulative_trapezoid(v, t):
    out = np.zeros_like(v)
    if len(t) > 1:
        dt = np.diff(t).reshape((-1,) + (1,) * (v.ndim - 1))
        out[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * dt, axis=0)
    return out


def jacobian_det(trace: FlowTrace, divu_frames) -> FlowTrace:
    """Fill ``det(grad Phi_t) = exp(integral of div u along the path)`` (trapezoid rule)."""
    frames = divu_frames if isinstance(divu_frames, _Frames) else _Frames(divu_frames, "scalar")
    if not frames.covers(trace.times[0], trace.times[-1]):
        raise ValueError("divergence frames do not cover the trace")
    divu = np.array([frames.sample(t, x[None, :])[0][0] for t, x in zip(trace.times, trace.positions)])
    det = np.exp(_cumulative_trapezoid(divu, trace.times))
    det[0] = 1.0
    return replace(trace, det_jac=det, divu_along=divu)


def reverse_frames(velocity_frames, t0: float, t1: float):
    """Frames of ``v(t, x) = -u(t0 + t1 - t, x)``: running them retraces the flow."""
    frames = _Frames(velocity_frames, "vector")
    out = []
    for t, (ux, uy) in zip(frames.times, frames.data):
        out.append((t0 + t1 - t, VectorField(frames.grid, -ux, -uy)))
    if frames.steady:
        return out[0][1]
    return out[::-1]


def _seeds(indicator: ScalarField) -> np.ndarray:
    v = indicator.values
    if not np.all((v == 0) | (v == 1)):
        raise ValueError("indicator must contain only 0 and 1")
    j, i = np.nonzero(v == 1)
    g = indicator.grid
    return np.column_stack([(i + 0.5) * g.hx, (j + 0.5) * g.hy])


def transported_measure(indicator: ScalarField, velocity_frames, divu_frames, t0: float, t1: float,
                        dt=None, substeps: int = 1) -> float:
    """``meas(Phi(S)) = integral over S of det(grad Phi)``, one characteristic per cell of S."""
    pts = _seeds(indicator)
    g = indicator.grid
    if len(pts) == 0:
        return 0.0
    vf = _Frames(velocity_frames, "vector")
    df = divu_frames if isinstance(divu_frames, _Frames) else _Frames(divu_frames, "scalar")
    times, hist, _ = integrate_points(pts, vf, t0, t1, dt, substeps)
    divu = np.array([df.sample(t, hist[k])[0] for k, t in enumerate(times)])
    logdet = _cumulative_trapezoid(divu, times)[-1]
    return g.cell_area * float(np.sum(np.exp(logdet)))


def _inside_quad(px, py, quad):
    """Points inside (or on) a quadrilateral with vertices in cyclic order."""
    area2 = 0.0
    for k in range(4):
        x1, y1 = quad[k]
        x2, y2 = quad[(k + 1) % 4]
        area2 += x1 * y2 - x2 * y1
    sign = 1.0 if area2 >= 0 else -1.0
    ok = np.ones(px.shape, dtype=bool)
    for k in range(4):
        x1, y1 = quad[k]
        x2, y2 = quad[(k + 1) % 4]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        ok &= sign * cross >= 0
    return ok


def particle_cloud_measure(indicator: ScalarField, velocity_frames, t0: float, t1: float,
                           refine: int = 4, dt=None, substeps: int = 1) -> float:
    """Measure of the image of S from advected cell corners.

    Every cell of S maps to the quadrilateral spanned by its advected
    corners; the union is measured by counting the centers of a ``refine``
    times finer grid that fall in some image quadrilateral.
    """
    g = indicator.grid
    v = indicator.values
    if not np.all((v == 0) | (v == 1)):
        raise ValueError("indicator must contain only 0 and 1")
    ny, nx = g.shape
    cj, ci = np.nonzero(v == 1)
    if len(ci) == 0:
        return 0.0
    corner_ids = {}
    for i, j in zip(ci, cj):
        for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
            corner_ids.setdefault((i + di, j + dj), len(corner_ids))
    corners = np.array([(i * g.hx, j * g.hy) for (i, j) in corner_ids], dtype=float)
    _, hist, _ = integrate_points(corners, velocity_frames, t0, t1, dt, substeps)
    moved = hist[-1]
    fine = g.refine(refine)
    fx, fy = fine.mesh()
    fx = fx.ravel()
    fy = fy.ravel()
    hit = np.zeros(fx.shape, dtype=bool)
    for i, j in zip(ci, cj):
        quad = [moved[corner_ids[(i + di, j + dj)]] for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1))]
        qa = np.array(quad)
        lo = qa.min(axis=0)
        hi = qa.max(axis=0)
        box = (fx >= lo[0]) & (fx <= hi[0]) & (fy >= lo[1]) & (fy <= hi[1])
        idx = np.flatnonzero(box & ~hit)
        if idx.size:
            hit[idx[_inside_quad(fx[idx], fy[idx], quad)]] = True
    return fine.cell_area * int(hit.sum())


def characteristic_density(x, frames, n0: ScalarField, t0: float, t1: float, p: Params, substeps: int = 1) -> float:
    """Density at ``(t1, x)`` predicted along the characteristic through ``x``.

    The foot point ``Phi^{-1}(x)`` is found by running the reversed field;
    then ``d/ds n(s, Phi_s) = n (G(n) - div u)`` is integrated forward from
    ``n0`` at the foot, with ``div u`` read from the frames. ``frames`` are
    :class:`~tumorflow.simulator.Frame` objects.
    """
    vf = _Frames(frames, "vector")
    df = _Frames(frames, "scalar")
    back = advect_point(x, reverse_frames(frames, t0, t1), t0, t1, substeps=substeps)
    foot = back.positions[-1]
    n = float(bilinear(n0.grid, np.asarray(n0.values), foot[None, :])[0])
    times, hist, _ = integrate_points(foot[None, :], vf, t0, t1, substeps=substeps)
    divu = np.array([df.sample(t, hist[k])[0][0] for k, t in enumerate(times)])

    def rhs(y, d):
        y = max(y, 0.0)
        return y * (p.alpha - p.beta * y**p.gt) - y * d

    for k in range(1, len(times)):
        h = times[k] - times[k - 1]
        k1 = rhs(n, divu[k - 1])
        k2 = rhs(n + h * k1, divu[k])
        n = max(n + 0.5 * h * (k1 + k2), 0.0)
    return n
