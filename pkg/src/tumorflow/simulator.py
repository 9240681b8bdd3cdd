"""Coupled time loop and the level-set / gradient diagnostics.

Each step solves the potential from the current density, moves the density
with :func:`tumorflow.transport.step`, and re-solves, so a stored state
``(t, n, W)`` is always self-consistent.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SimConfig, initial_condition
from .core import ScalarField, VectorField, constant_field, gradient_centered, integrate, lq_norm, write_snapshot
from .elliptic import SolverError, divergence_u, solve_potential, velocity
from .kinetics import Params, compute_n_star
from .transport import cfl_dt, step

log = logging.getLogger(__name__)

VACUUM_EPS = 1e-10
GRAD_P = 6
CSV_COLUMNS = ("t", "min_n", "max_n", "l1_dist_nstar", "grad_lp", "cdf_zero", "cdf_nu", "w_min", "w_max", "mass")


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    n: ScalarField
    W: ScalarField
    step_index: int


@dataclass(frozen=True)
class DiagRow:
    t: float
    min_n: float
    max_n: float
    l1_dist_nstar: float
    grad_lp: float
    cdf_zero: float
    cdf_nu: float
    w_min: float
    w_max: float
    mass: float


@dataclass(frozen=True, eq=False)
class Frame:
    """Velocity and velocity divergence at one time, for characteristics."""

    t: float
    u: VectorField
    divu: ScalarField


@dataclass(eq=False)
class RunRecord:
    params: Params
    grid: object
    config: SimConfig
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    termination: str = "running"
    final: SimState | None = None
    frames: list = field(default_factory=list)
    steps: int = 0
    max_clamp: float = 0.0
    max_mass_defect: float = 0.0
    error: str | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([f"{getattr(r, c):.17g}" for c in CSV_COLUMNS])
        return path


def read_diagnostics_csv(path) -> list[DiagRow]:
    with Path(path).open(encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected diagnostics header {header}")
        return [DiagRow(*map(float, row)) for row in reader]


def cdf(n: ScalarField, xi: float) -> float:
    """Measure of the sublevel set ``{n <= xi}``, counted in whole cells."""
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    return n.grid.cell_area * int(np.count_nonzero(n.values <= xi))


def grad_lp_functional(n: ScalarField, p_exp: int = GRAD_P) -> float:
    """``sum_j integral (d_j n)^p`` using centered gradients."""
    if int(p_exp) != p_exp or p_exp % 2 or p_exp < 4:
        raise ValueError(f"p_exp must be an even integer >= 4, got {p_exp}")
    g = gradient_centered(n)
    return integrate(n.with_values(g.ux**p_exp)) + integrate(n.with_values(g.uy**p_exp))


def vacuum_level(p: Params) -> float:
    """Largest ``nu`` with ``beta nu^(gamma theta) + (a/mu) nu^gamma <= alpha / 4``."""
    lo, hi = 0.0, compute_n_star(p)

    def h(v):
        return p.beta * v**p.gt + p.a / p.mu * v**p.gamma - 0.25 * p.alpha

    while hi - lo > 1e-14 * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if h(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def diagnostics(t: float, n: ScalarField, W: ScalarField, p: Params, nu: float | None = None) -> DiagRow:
    if nu is None:
        nu = vacuum_level(p)
    ns = compute_n_star(p)
    return DiagRow(
        t=t,
        min_n=n.min(),
        max_n=n.max(),
        l1_dist_nstar=lq_norm(n - ns, 1),
        grad_lp=grad_lp_functional(n, GRAD_P),
        cdf_zero=cdf(n, VACUUM_EPS),
        cdf_nu=cdf(n, 0.5 * nu),
        w_min=W.min(),
        w_max=W.max(),
        mass=integrate(n),
    )


def run(
    config: SimConfig,
    n0: ScalarField | None = None,
    out_dir=None,
    keep_frames: bool = False,
) -> RunRecord:
    """Integrate the coupled system from ``n0`` (or the configured IC) to ``t_end``.

    Stops early on a steady state (``|n_new - n|_inf / dt <= steady_tol``).
    Solver failure, non-finite values or step-size underflow end the run
    with a partial record whose ``termination`` names the cause.
    """
    p = config.params
    grid = config.grid
    n = initial_condition(config) if n0 is None else n0
    if n.grid != grid:
        raise ValueError("initial density grid does not match the config grid")
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(params=p, grid=grid, config=config)
    nu = vacuum_level(p)
    tol = config.tol
    t = 0.0
    k = 0
    try:
        W = solve_potential(n, p, tol).W
    except SolverError as exc:
        rec.termination = "solver_failure"
        rec.error = str(exc)
        return rec
    pending = list(config.snapshot_times)
    dt_floor = 1e-13 * config.t_end

    def snapshot(t, n):
        if out is None:
            rec.snapshots.append((t, n))
        else:
            path = write_snapshot(out / f"snapshot_{len(rec.snapshots):04d}.txt", n, t)
            rec.snapshots.append((t, path))

    def frame(t, n, W):
        if keep_frames:
            rec.frames.append(Frame(t, velocity(W), divergence_u(n, W, p)))

    rec.rows.append(diagnostics(t, n, W, p, nu))
    frame(t, n, W)
    while pending and pending[0] <= t:
        snapshot(t, n)
        pending.pop(0)

    rec.termination = "t_end"
    while t < config.t_end:
        u = velocity(W)
        dt = cfl_dt(n, u, p, config.cfl)
        if config.dt_max is not None:
            dt = min(dt, config.dt_max)
        horizon = config.t_end if not pending else min(pending[0], config.t_end)
        last = False
        if t + dt >= horizon - 1e-6 * dt:
            # snap onto the horizon instead of leaving a round-off sliver
            dt = horizon - t
            last = horizon == config.t_end
        if dt < dt_floor:
            rec.termination = "dt_underflow"
            rec.error = f"dt={dt:.3e} at t={t:.6g}"
            break
        try:
            n_new, report = step(n, W, dt, p)
            # W tracks a n^gamma closely, so shift the old potential by the change in the source
            guess = W + p.a * (np.power(n_new.values, p.gamma) - np.power(n.values, p.gamma))
            W = solve_potential(n_new, p, tol, x0=guess).W
        except SolverError as exc:
            rec.termination = "solver_failure"
            rec.error = str(exc)
            break
        except FloatingPointError as exc:
            rec.termination = "nan"
            rec.error = str(exc)
            break
        rate = float(np.abs(n_new.values - n.values).max()) / dt
        t = config.t_end if last else t + dt
        k += 1
        n = n_new
        rec.max_clamp = max(rec.max_clamp, report.clamp)
        frame(t, n, W)
        while pending and pending[0] <= t * (1 + 1e-14):
            snapshot(t, n)
            pending.pop(0)
        steady = config.steady_tol > 0 and rate <= config.steady_tol
        if k % config.sample_every == 0 or t >= config.t_end or steady:
            rec.rows.append(diagnostics(t, n, W, p, nu))
        if steady:
            rec.termination = "steady"
            break
    if rec.rows[-1].t != t:
        rec.rows.append(diagnostics(t, n, W, p, nu))
    rec.steps = k
    rec.final = SimState(t, n, W, k)
    if out is not None:
        rec.write_csv(out / "diagnostics.csv")
    return rec


# --- the gradient dissipation check -----------------------------------------

@dataclass(frozen=True)
class DissipationReport:
    status: str  # "pass", "fail" or "inconclusive"
    reason: str
    max_relative_increase: float
    integrated_margin: float
    observed_decrease: float


def check_dissipation(
    record: RunRecord, delta: float | None = None, mu_min: float = 5.0, rel_slack: float = 1e-8
) -> DissipationReport:
    """Check that the sampled gradient functional never increases.

    Outside the small-gradient, large-viscosity, positive-density regime the
    result is ``inconclusive`` rather than a failure. The report also gives
    ``(alpha/8) min(gamma theta, 1) p int grad_lp dt`` next to the observed
    decrease of the functional, for comparison with the a priori estimate.
    """
    p = record.params
    if delta is None:
        delta = record.config.delta
    g = record.column("grad_lp")
    t = record.times
    rel = 0.0
    for a, b in zip(g[:-1], g[1:]):
        if b > a:
            rel = max(rel, (b - a) / max(a, 1e-300))
    factor = p.alpha / 8 * min(p.gt, 1.0) * GRAD_P
    margin = factor * float(np.trapezoid(g, t)) if len(g) > 1 else 0.0
    decrease = float(g[0] - g[-1])
    g0_norm = g[0] ** (1.0 / GRAD_P)
    gates = []
    if g0_norm >= delta:
        gates.append(f"initial gradient norm {g0_norm:.3g} >= delta {delta:.3g}")
    if p.mu < mu_min:
        gates.append(f"mu {p.mu:.3g} < {mu_min:.3g}")
    if record.rows[0].min_n <= 0:
        gates.append("initial density touches vacuum")
    if np.all(g == 0):
        return DissipationReport("pass", "functional identically zero", 0.0, 0.0, 0.0)
    if gates:
        return DissipationReport("inconclusive", "; ".join(gates), rel, margin, decrease)
    ok = rel <= rel_slack
    reason = "non-increasing" if ok else f"increase of {rel:.3e} relative"
    return DissipationReport("pass" if ok else "fail", reason, rel, margin, decrease)


def decay_rate(p: Params) -> float:
    """Certified envelope rate ``alpha gamma theta / 2`` (half the tangent slope at n*)."""
    return 0.5 * p.alpha * p.gt


def decay_envelope(t, M: float, p: Params):
    """``n* + (M - n*) exp(-r t)`` with ``r`` from :func:`decay_rate`."""
    ns = compute_n_star(p)
    return ns + (M - ns) * np.exp(-decay_rate(p) * np.asarray(t))


def constant_state(grid, value: float, p: Params, tol: float = 1e-10) -> SimState:
    n = constant_field(grid, value)
    return SimState(0.0, n, solve_potential(n, p, tol).W, 0)
