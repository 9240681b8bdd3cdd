"""Growth law, equilibria and the spatially homogeneous comparison ODE.

The growth rate is the power law ``G(n) = alpha - beta * n**(gamma*theta)``
and the cell balance ``n * G(n)``. Two equilibria matter:

* ``n_star`` -- the zero of ``G``, the long-time attractor;
* ``eta`` -- the zero of ``alpha - beta n^(gamma theta) - (a/mu) n^gamma``,
  the limit of the lower comparison ODE.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Params:
    mu: float = 1.0
    a: float = 1.0
    gamma: float = 2.0
    theta: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("mu", "a", "gamma", "theta", "alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if self.gamma < 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")

    @property
    def gt(self) -> float:
        """The exponent ``gamma * theta``."""
        return self.gamma * self.theta

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Equilibria:
    n_star: float
    eta: float
    w_star: float


@dataclass(frozen=True)
class OdeTrace:
    times: np.ndarray
    values: np.ndarray
    m: float

    def at(self, t):
        """Linear interpolation of the trace at time(s) ``t``."""
        return np.interp(t, self.times, self.values)


def _power(n, e):
    # 0**e == 0 for e > 0 in numpy already; keep scalars as floats
    return np.power(n, e) if isinstance(n, np.ndarray) else float(n) ** e


def _check_nonneg(n):
    if np.any(np.asarray(n) < 0):
        raise ValueError("density must be nonnegative")


def growth_G(n, p: Params):
    _check_nonneg(n)
    return p.alpha - p.beta * _power(n, p.gt)


def reaction_rhs(n, p: Params):
    """``alpha n - beta n^(1 + gamma theta)``."""
    _check_nonneg(n)
    return n * (p.alpha - p.beta * _power(n, p.gt))


def comparison_rhs(n, p: Params):
    """Right side of the lower comparison ODE (adds ``-(a/mu) n^(1+gamma)``)."""
    _check_nonneg(n)
    return n * (p.alpha - p.beta * _power(n, p.gt) - p.a / p.mu * _power(n, p.gamma))


def reaction_rate_bound(n_max: float, p: Params) -> float:
    """Lipschitz bound of the reaction on ``[0, n_max]``."""
    return p.alpha + p.beta * (1 + p.gt) * max(n_max, 0.0) ** p.gt


def compute_n_star(p: Params) -> float:
    return (p.alpha / p.beta) ** (1.0 / p.gt)


def compute_eta(p: Params, atol: float = 0.0) -> float:
    """Positive root of ``alpha - beta n^(gamma theta) - (a/mu) n^gamma`` by bisection.

    With the default ``atol=0`` the bracket is halved until it cannot shrink
    in floating point, which keeps the residual at round-off even where the
    root is steep (small ``eta`` with ``gamma theta < 1``).
    """

    def h(n):
        return p.alpha - p.beta * n**p.gt - p.a / p.mu * n**p.gamma

    lo, hi = 0.0, compute_n_star(p)
    assert h(lo) > 0 and h(hi) < 0, "bracket failure for eta"
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def equilibria(p: Params) -> Equilibria:
    ns = compute_n_star(p)
    return Equilibria(n_star=ns, eta=compute_eta(p), w_star=p.a * ns**p.gamma)


def _rk4(rhs, m, t_end, dt, p, guard):
    if m < 0:
        raise ValueError("initial value must be nonnegative")
    if not (dt > 0 and t_end > 0):
        raise ValueError("dt and t_end must be positive")
    if dt > t_end:
        raise ValueError("dt must not exceed t_end")
    nsteps = int(math.ceil(t_end / dt - 1e-12))
    times = np.empty(nsteps + 1)
    vals = np.empty(nsteps + 1)
    times[0], vals[0] = 0.0, m
    t, y = 0.0, float(m)
    for k in range(1, nsteps + 1):
        h = min(dt, t_end - t) if k == nsteps else dt
        k1 = rhs(y, p)
        k2 = rhs(max(y + 0.5 * h * k1, 0.0), p)
        k3 = rhs(max(y + 0.5 * h * k2, 0.0), p)
        k4 = rhs(max(y + h * k3, 0.0), p)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_end if k == nsteps else t + h
        if guard is not None and y > guard:
            raise ArithmeticError(f"ODE trace left its a priori bound at t={t}: {y} > {guard}")
        times[k], vals[k] = t, y
    return OdeTrace(times, vals, float(m))


def solve_comparison_ode(m: float, t_end: float, dt: float, p: Params) -> OdeTrace:
    """Classical RK4 for ``n' = alpha n - beta n^(1+gamma theta) - (a/mu) n^(1+gamma)``.

    The last step is shortened to land on ``t_end``.
    """
    bound = 2 * max(m, compute_eta(p))
    return _rk4(comparison_rhs, m, t_end, dt, p, bound)


def solve_reduced_ode(m: float, t_end: float, dt: float, p: Params) -> OdeTrace:
    """RK4 for ``n' = n G(n)``: the exact law of spatially constant solutions."""
    bound = 2 * max(m, compute_n_star(p))
    return _rk4(reaction_rhs, m, t_end, dt, p, bound)
