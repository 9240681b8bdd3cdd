"""Kernels of ``-mu Lap + I``: free-space fundamental solutions and Neumann Green's functions.

The free-space kernels are

* 2D: ``K0(r / sqrt(mu)) / (2 pi mu)``
* 3D: ``exp(-r / sqrt(mu)) / (4 pi mu r)``

:func:`fundamental_normalization_check` tests the defining identity
``int (-mu Lap phi + phi) Psi = phi(0)`` by radial quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate as _quad
from scipy.sparse.linalg import splu

from .core import GridSpec, ScalarField
from .elliptic import DEFAULT_TOL, operator_matrix, solve_brinkman, solve_brinkman_many

EULER_GAMMA = 0.57721566490153286061
SERIES_SPLIT = 2.0
MAX_GREEN_CELLS = 4096


# --- modified Bessel functions of the second kind ---------------------------

def _k01_series(x: float) -> tuple[float, float]:
    """Power series for ``K0`` and ``K1``, accurate for ``0 < x <= 2``."""
    q = 0.25 * x * x
    lg = math.log(0.5 * x) + EULER_GAMMA
    # K0 = -(lg) I0 + sum_k q^k/(k!)^2 H_k
    # K1 = 1/x + ln(x/2) I1 - (x/4) sum_k q^k/(k!(k+1)!) (psi(k+1) + psi(k+2))
    t0 = 1.0  # q^k / (k!)^2
    t1 = 1.0  # q^k / (k! (k+1)!)
    harm = 0.0
    i0 = k0_tail = 0.0
    i1_sum = k1_sum = 0.0
    k = 0
    while True:
        i0 += t0
        k0_tail += t0 * harm
        i1_sum += t1
        psi_sum = 2.0 * harm + 1.0 / (k + 1) - 2.0 * EULER_GAMMA
        k1_sum += t1 * psi_sum
        k += 1
        harm += 1.0 / k
        t0 *= q / (k * k)
        t1 *= q / (k * (k + 1))
        if t0 < 1e-18 * i0 and k > 2:
            break
    k0 = -lg * i0 + k0_tail
    i1 = 0.5 * x * i1_sum
    k1 = 1.0 / x + math.log(0.5 * x) * i1 - 0.25 * x * k1_sum
    return k0, k1


def _k01_cf(x: float) -> tuple[float, float]:
    """Steed's continued fraction (Temme's CF2) for ``K0`` and ``K1``, ``x > 2``."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, 10000):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < 1e-17:
            break
    else:  # pragma: no cover - converges in a few dozen terms for x > 2
        raise ArithmeticError(f"K0 continued fraction did not converge at x={x}")
    h *= a1
    k0 = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def _k01(x: float) -> tuple[float, float]:
    if not x > 0:
        raise ValueError(f"Bessel K needs x > 0, got {x}")
    return _k01_series(x) if x <= SERIES_SPLIT else _k01_cf(x)


def _map(fn, x):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return fn(float(arr))
    return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)


def bessel_k0(x):
    """Modified Bessel function ``K0`` (scalar or array), relative error below ``1e-9``.

    Uses the power series for ``x <= 2`` and ``sqrt(pi / 2x) e^-x / s`` with
    ``s`` from a continued fraction beyond that.
    """
    return _map(lambda v: _k01(v)[0], x)


def bessel_k1(x):
    """``K1 = -K0'``, computed alongside ``K0``."""
    return _map(lambda v: _k01(v)[1], x)


# --- free-space kernels -------------------------------------------------------

def _check_dim(dim):
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("r must be positive")
    return r


def psi_fundamental(r, mu: float, dim: int):
    """Free-space fundamental solution of ``-mu Lap + I`` at distance ``r``."""
    _check_dim(dim)
    if not mu > 0:
        raise ValueError("mu must be positive")
    r = _check_r(r)
    s = math.sqrt(mu)
    if dim == 2:
        out = bessel_k0(r / s) / (2 * math.pi * mu)
    else:
        out = np.exp(-r / s) / (4 * math.pi * mu * r)
    return float(out) if np.ndim(out) == 0 else out


def psi_radial_derivative(r, mu: float, dim: int):
    """``d Psi / dr`` (negative)."""
    _check_dim(dim)
    r = _check_r(r)
    s = math.sqrt(mu)
    if dim == 2:
        out = -bessel_k1(r / s) / (2 * math.pi * mu * s)
    else:
        out = -np.exp(-r / s) * (1.0 / (s * r) + 1.0 / r**2) / (4 * math.pi * mu)
    return float(out) if np.ndim(out) == 0 else out


def psi_cell_average(mu: float, area: float) -> float:
    """Mean of the 2D kernel over a disk of the given area, centred at the source.

    Closed form from ``int_0^b t K0(t) dt = 1 - b K1(b)``.
    """
    rho = math.sqrt(area / math.pi)
    s = math.sqrt(mu)
    b = rho / s
    integral = s * s * (1.0 - b * float(bessel_k1(b)))
    return 2.0 * integral / (rho * rho * 2 * math.pi * mu)


@dataclass(frozen=True)
class RadialBump:
    """Smooth radial test function with ``phi(0) = 1``.

    ``kind="compact"`` is ``exp(1 - 1/(1 - (r/R)^2))`` on ``r < R``;
    ``kind="gaussian"`` is ``exp(-(r/R)^2)``, integrated out to ``12 R``.
    """

    radius: float = 1.0
    kind: str = "compact"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.kind not in ("compact", "gaussian"):
            raise ValueError(f"unknown bump kind {self.kind!r}")

    @property
    def support(self) -> float:
        return self.radius if self.kind == "compact" else 12.0 * self.radius

    def derivatives(self, r: float) -> tuple[float, float, float]:
        """``(phi, phi', phi'')`` at ``r``."""
        R = self.radius
        if self.kind == "gaussian":
            e = math.exp(-((r / R) ** 2))
            return e, -2 * r / R**2 * e, (4 * r * r / R**4 - 2 / R**2) * e
        if r >= R:
            return 0.0, 0.0, 0.0
        s = (r / R) ** 2
        q = 1.0 / (1.0 - s)
        phi = math.exp(1.0 - q)
        # phi' = -phi * q^2 * s', with s' = 2r/R^2 and q' = q^2 s'
        sp = 2 * r / R**2
        spp = 2 / R**2
        dq = q * q * sp
        d1 = -phi * q * q * sp
        d2 = -(d1 * q * q * sp + phi * 2 * q * dq * sp + phi * q * q * spp)
        return phi, d1, d2

    def laplacian_over(self, r: float, dim: int) -> float:
        """``phi'' + (dim - 1) phi' / r``, with the ``r -> 0`` limit handled."""
        _, d1, d2 = self.derivatives(r)
        if r == 0.0:
            return dim * d2
        return d2 + (dim - 1) * d1 / r


def fundamental_normalization_check(
    mu: float, dim: int, phi: RadialBump | None = None, scale: float = 1.0
) -> float:
    """Relative defect ``|int (-mu Lap phi + phi) Psi - phi(0)| / |phi(0)|``.

    ``scale`` multiplies the kernel, so a wrong constant shows up linearly
    in the defect.
    """
    _check_dim(dim)
    bump = phi or RadialBump(radius=max(1.0, 3 * math.sqrt(mu)))
    surface = 2 * math.pi if dim == 2 else 4 * math.pi
    s = math.sqrt(mu)

    def integrand(r):
        if r == 0.0:
            return 0.0
        val, _, _ = bump.derivatives(r)
        lap = bump.laplacian_over(r, dim)
        if dim == 2:
            kern = float(bessel_k0(r / s)) / (2 * math.pi * mu)
            weight = r
        else:
            # fold r^2 into the kernel to avoid the 1/r factor
            kern = math.exp(-r / s) * r / (4 * math.pi * mu)
            weight = 1.0
        return (-mu * lap + val) * kern * weight * surface

    R = bump.support
    cuts = np.concatenate([[0.0], np.geomspace(1e-8 * R, R, 40)])
    total = 0.0
    with warnings.catch_warnings():
        # quad flags round-off once it is already at machine precision
        warnings.simplefilter("ignore", _quad.IntegrationWarning)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            part, _ = _quad.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
            total += part
    phi0 = bump.derivatives(0.0)[0]
    return abs(scale * total - phi0) / abs(phi0)


# --- discrete Neumann Green's matrix -----------------------------------------

@dataclass(frozen=True, eq=False)
class GreenMatrix:
    """``entries[i, j]`` is the discrete Green value at cell ``i`` for source cell ``j``.

    Cells are numbered row-major with ``x`` fastest, ``index = j_y * nx + i_x``.
    """

    grid: GridSpec
    mu: float
    entries: np.ndarray
    tol: float

    def apply(self, f: ScalarField) -> ScalarField:
        """``sum_j G[i, j] f_j hx hy``."""
        vals = self.entries @ np.asarray(f.values).ravel() * self.grid.cell_area
        return ScalarField(self.grid, vals)

    def column(self, j: int) -> ScalarField:
        return ScalarField(self.grid, self.entries[:, j])

    def symmetry_defect(self) -> float:
        """``max |G - G^T| / max |G|``."""
        G = self.entries
        return float(np.abs(G - G.T).max() / np.abs(G).max())

    def min_entry(self) -> float:
        return float(self.entries.min())

    def write_triplets(self, path) -> Path:
        path = Path(path)
        N = self.entries.shape[0]
        ii, jj = np.divmod(np.arange(N * N), N)
        with path.open("w", encoding="utf-8") as fh:
            for i, j, v in zip(ii, jj, self.entries.ravel()):
                fh.write(f"{i} {j} {v:.17g}\n")
        return path


def read_triplets(path, grid: GridSpec) -> np.ndarray:
    N = grid.size
    G = np.zeros((N, N))
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            i, j, v = line.split()
            G[int(i), int(j)] = float(v)
    return G


def discrete_green_matrix(
    grid: GridSpec, mu: float, tol: float = DEFAULT_TOL, method: str = "lu", batch: int = 256
) -> GreenMatrix:
    """Column ``j`` solves ``-mu Lap_h G + G = e_j / (hx hy)``.

    ``method="lu"`` factors the sparse operator once and back-substitutes
    every column; ``method="cg"`` runs batched conjugate gradients to
    ``tol``. Both are deterministic.
    """
    N = grid.size
    if N > MAX_GREEN_CELLS:
        raise ValueError(f"grid has {N} cells; the dense Green matrix is limited to {MAX_GREEN_CELLS}")
    inv_area = 1.0 / grid.cell_area
    if method == "lu":
        lu = splu(operator_matrix(grid, mu))
        G = lu.solve(np.eye(N) * inv_area)
    elif method == "cg":
        ny, nx = grid.shape
        G = np.empty((N, N))
        for start in range(0, N, batch):
            cols = np.arange(start, min(start + batch, N))
            F = np.zeros((len(cols), ny, nx))
            F.reshape(len(cols), -1)[np.arange(len(cols)), cols] = inv_area
            X, _ = solve_brinkman_many(F, grid, mu, tol)
            G[:, cols] = X.reshape(len(cols), -1).T
    else:
        raise ValueError(f"unknown method {method!r}; use 'lu' or 'cg'")
    return GreenMatrix(grid, mu, G, tol)


def cell_index(grid: GridSpec, i: int, j: int) -> int:
    """Flat index of cell ``(i, j)`` (``i`` along ``x``)."""
    if not (0 <= i < grid.nx and 0 <= j < grid.ny):
        raise IndexError(f"cell ({i}, {j}) outside {grid.nx}x{grid.ny} grid")
    return j * grid.nx + i


def interior_lower_bound(G: GreenMatrix, delta: float) -> float:
    """Min of ``G(x, y)`` over cell pairs at least ``delta`` from the walls and from each other."""
    g = G.grid
    x, y = g.mesh()
    x = x.ravel()
    y = y.ravel()
    wall = np.minimum.reduce([x, g.lx - x, y, g.ly - y])
    inner = np.flatnonzero(wall >= delta)
    if inner.size == 0:
        raise ValueError(f"no cells at distance >= {delta} from the boundary")
    dx = x[inner, None] - x[None, inner]
    dy = y[inner, None] - y[None, inner]
    far = np.hypot(dx, dy) >= delta
    if not far.any():
        raise ValueError(f"no interior cell pairs separated by {delta}")
    sub = G.entries[np.ix_(inner, inner)]
    return float(sub[far].min())


# --- the corrector construction -----------------------------------------------

def _source_point(grid: GridSpec, y) -> tuple[float, float]:
    i, j = y
    return grid.center(i, j)


def corrector_green(y, grid: GridSpec, mu: float, tol: float = DEFAULT_TOL) -> ScalarField:
    """``Psi(|x - y|) - phi(x, y)`` on every cell, for a source at the centre of cell ``y = (i, j)``.

    ``phi`` solves the discrete ``-mu Lap phi + phi = 0`` whose wall flux
    equals the analytic ``grad Psi . n``, so the difference carries zero
    normal flux. The source cell holds the cell average of ``Psi``.

    Raises
    ------
    ValueError
        If the source lies closer than three cells to a wall.
    """
    cx, cy = _source_point(grid, y)
    margin = min(cx, grid.lx - cx, cy, grid.ly - cy)
    if margin < 3 * max(grid.hx, grid.hy) * (1 - 1e-12):
        raise ValueError(f"source cell {y} is within 3h of the boundary")
    hx, hy = grid.hx, grid.hy
    xs = grid.x_centers()
    ys = grid.y_centers()

    def dpsi(px, py, comp):
        r = np.hypot(px - cx, py - cy)
        d = psi_radial_derivative(r, mu, 2)
        return d * ((px - cx) if comp == "x" else (py - cy)) / r

    # wall values of d Psi/dx (left, right) and d Psi/dy (bottom, top)
    gl = dpsi(np.zeros_like(ys), ys, "x")
    gr = dpsi(np.full_like(ys, grid.lx), ys, "x")
    gb = dpsi(xs, np.zeros_like(xs), "y")
    gt = dpsi(xs, np.full_like(xs, grid.ly), "y")
    boundary = np.zeros(grid.shape)
    boundary[:, 0] -= gl / hx
    boundary[:, -1] += gr / hx
    boundary[0, :] -= gb / hy
    boundary[-1, :] += gt / hy
    rhs = ScalarField(grid, mu * boundary)
    phi = solve_brinkman(rhs, mu, tol).W.values

    X, Y = grid.mesh()
    r = np.hypot(X - cx, Y - cy)
    src = r == 0
    r_safe = np.where(src, 1.0, r)
    psi = np.asarray(psi_fundamental(r_safe, mu, 2))
    psi = np.where(src, psi_cell_average(mu, grid.cell_area), psi)
    return ScalarField(grid, psi - phi)

