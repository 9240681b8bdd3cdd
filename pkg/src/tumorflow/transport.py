"""One time step of ``dn/dt + div(n u) = alpha n - beta n^(1+gamma theta)``.

Strang splitting: half reaction step, conservative donor-cell advection,
half reaction step. The advection step is monotone under the CFL limit of
:func:`cfl_dt`; together with compact face velocities this gives discrete
maximum and minimum principles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import ScalarField, VectorField, integrate
from .elliptic import velocity
from .kinetics import Params, reaction_rate_bound

log = logging.getLogger(__name__)

DT_EPS = 1e-14
CLAMP_WARN = 1e-12


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    min_n: float
    max_n: float
    mass_in: float
    mass_out: float
    flux_boundary: float
    clamp: float = 0.0


def _outflow_rate(u: VectorField) -> np.ndarray:
    """Per-cell total outflow rate ``sum(face outflow speed / h)`` (1/time)."""
    g = u.grid
    fx, fy = u.faces()
    return (
        np.maximum(fx[:, 1:], 0) / g.hx
        + np.maximum(-fx[:, :-1], 0) / g.hx
        + np.maximum(fy[1:, :], 0) / g.hy
        + np.maximum(-fy[:-1, :], 0) / g.hy
    )


def advective_speed(u: VectorField) -> float:
    """Largest outflow rate times ``h_min``; equals ``|u|`` for a uniform field."""
    return float(_outflow_rate(u).max()) * u.grid.h_min


def transport_rate_bound(n_max: float, p: Params) -> float:
    """Reaction Lipschitz bound plus the compression rate ``a gamma n^gamma / mu``."""
    return reaction_rate_bound(n_max, p) + p.a * p.gamma * max(n_max, 0.0) ** p.gamma / p.mu


def cfl_dt(n: ScalarField, u: VectorField, p: Params, cfl: float = 0.5) -> float:
    """Stable explicit step.

    ``dt = cfl h / (S + R h + eps)`` with ``S`` the advective speed and ``R``
    the rate bound of :func:`transport_rate_bound`, additionally capped by
    ``0.5 / (alpha + beta (1 + gamma theta) max_n^(gamma theta))``.
    """
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    h = u.grid.h_min
    n_max = n.max()
    dt = cfl * h / (advective_speed(u) + transport_rate_bound(n_max, p) * h + DT_EPS)
    return min(dt, 0.5 / reaction_rate_bound(n_max, p))


def _fluxes(n: np.ndarray, fx: np.ndarray, fy: np.ndarray):
    ny, nx = n.shape
    Fx = np.zeros((ny, nx + 1))
    Fy = np.zeros((ny + 1, nx))
    vx = fx[:, 1:-1]
    vy = fy[1:-1, :]
    Fx[:, 1:-1] = np.maximum(vx, 0) * n[:, :-1] + np.minimum(vx, 0) * n[:, 1:]
    Fy[1:-1, :] = np.maximum(vy, 0) * n[:-1, :] + np.minimum(vy, 0) * n[1:, :]
    return Fx, Fy


def advect(n: ScalarField, u: VectorField, dt: float) -> ScalarField:
    """First-order upwind update of ``dn/dt + div(n u) = 0`` with zero wall flux.

    Raises ``ValueError`` if ``dt`` breaks the positivity (CFL) limit.
    """
    if n.grid != u.grid:
        raise ValueError("n and u live on different grids")
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = float(_outflow_rate(u).max())
    if dt * out > 1 + 1e-12:
        raise ValueError(f"CFL violation: dt * outflow = {dt * out:.4g} > 1")
    g = n.grid
    fx, fy = u.faces()
    Fx, Fy = _fluxes(n.values, fx, fy)
    div = (Fx[:, 1:] - Fx[:, :-1]) / g.hx + (Fy[1:, :] - Fy[:-1, :]) / g.hy
    return n.with_values(n.values - dt * div)


def _heun(v: np.ndarray, dt: float, p: Params) -> np.ndarray:
    e = p.gt

    def f(y):
        return y * (p.alpha - p.beta * np.power(y, e))

    k1 = f(v)
    k2 = f(np.maximum(v + dt * k1, 0.0))
    return v + 0.5 * dt * (k1 + k2)


def react(n: ScalarField, dt: float, p: Params) -> ScalarField:
    """One Heun (RK2) step of ``n' = n G(n)`` in every cell."""
    if n.min() < 0:
        raise ValueError("react needs a nonnegative density")
    return n.with_values(_heun(n.values, dt, p))


def _require_finite(v: np.ndarray, nx: int) -> None:
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        j, i = divmod(int(bad[0]), nx)
        raise FloatingPointError(f"non-finite density at cell (i={i}, j={j})")


def step(n: ScalarField, W: ScalarField, dt: float, p: Params) -> tuple[ScalarField, StepReport]:
    """Strang step ``react(dt/2) -> advect(dt) -> react(dt/2)`` driven by ``u = -grad W``."""
    if n.min() < 0:
        raise ValueError("step needs a nonnegative density")
    u = velocity(W)
    mass_in = integrate(n)
    with np.errstate(over="ignore", invalid="ignore"):
        half = _heun(np.asarray(n.values), 0.5 * dt, p)
    _require_finite(half, n.grid.nx)
    moved = advect(n.with_values(half), u, dt)
    raw = np.array(moved.values)
    lo = float(raw.min())
    if lo < 0:
        # only round-off below 0 is expected before the second reaction half step
        raw = np.maximum(raw, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _heun(raw, 0.5 * dt, p)
    _require_finite(out, n.grid.nx)
    lo = min(lo, float(out.min()))
    clamp = max(0.0, -lo)
    if clamp > CLAMP_WARN:
        log.warning("clamped density undershoot of %.3e to 0", clamp)
    out = np.maximum(out, 0.0)
    new = n.with_values(out)
    fx, fy = u.faces()
    flux_boundary = float(
        np.abs(fx[:, 0]).sum() + np.abs(fx[:, -1]).sum() + np.abs(fy[0, :]).sum() + np.abs(fy[-1, :]).sum()
    )
    report = StepReport(
        dt_used=dt,
        min_n=lo,
        max_n=float(out.max()),
        mass_in=mass_in,
        mass_out=integrate(new),
        flux_boundary=flux_boundary,
        clamp=clamp,
    )
    return new, report
