"""Brinkman / screened-Poisson solve ``-mu Lap W + W = f`` with Neumann walls.

The Laplacian is the 5-point stencil written in flux form with zero flux
through the boundary faces, which is the same as mirroring the edge cells
into ghost cells. The operator is symmetric positive definite with all
eigenvalues >= 1, so conjugate gradients converge and the error obeys
``|W - W_exact|_inf <= |residual|_2``. Tolerances are relative residuals
``|r|_2 / |f|_2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import GridSpec, ScalarField, VectorField, gradient_centered
from .kinetics import Params

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
STALL_WINDOW = 500


class SolverError(RuntimeError):
    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class EllipticSolve:
    W: ScalarField
    iterations: int
    residual_norm: float


def face_gradients(W: np.ndarray, hx: float, hy: float) -> tuple[np.ndarray, np.ndarray]:
    """Compact face-normal derivatives; boundary faces carry zero flux."""
    *lead, ny, nx = W.shape
    gx = np.zeros((*lead, ny, nx + 1))
    gy = np.zeros((*lead, ny + 1, nx))
    gx[..., :, 1:-1] = (W[..., :, 1:] - W[..., :, :-1]) / hx
    gy[..., 1:-1, :] = (W[..., 1:, :] - W[..., :-1, :]) / hy
    return gx, gy


def _laplacian(W: np.ndarray, hx: float, hy: float) -> np.ndarray:
    gx, gy = face_gradients(W, hx, hy)
    return (gx[..., :, 1:] - gx[..., :, :-1]) / hx + (gy[..., 1:, :] - gy[..., :-1, :]) / hy


def _apply(W: np.ndarray, mu: float, hx: float, hy: float) -> np.ndarray:
    return W - mu * _laplacian(W, hx, hy)


def _diagonal(grid: GridSpec, mu: float) -> np.ndarray:
    ny, nx = grid.shape
    cx = np.full(nx, 2.0)
    cy = np.full(ny, 2.0)
    cx[0] -= 1
    cx[-1] -= 1
    cy[0] -= 1
    cy[-1] -= 1
    if nx == 1:
        cx[:] = 0
    if ny == 1:
        cy[:] = 0
    return 1.0 + mu * (cx[None, :] / grid.hx**2 + cy[:, None] / grid.hy**2)


def laplacian(W: ScalarField) -> ScalarField:
    g = W.grid
    return W.with_values(_laplacian(W.values, g.hx, g.hy))


def apply_operator(W: ScalarField, mu: float) -> ScalarField:
    """``-mu Lap_h W + W`` with homogeneous Neumann (mirrored ghost) walls."""
    g = W.grid
    return W.with_values(_apply(W.values, mu, g.hx, g.hy))


def solve_brinkman(
    f: ScalarField,
    mu: float,
    tol: float = DEFAULT_TOL,
    x0: ScalarField | None = None,
    max_iter: int | None = None,
) -> EllipticSolve:
    """Jacobi-preconditioned conjugate gradients for ``-mu Lap_h W + W = f``.

    Iteration starts from ``x0`` (default ``f`` itself, exact for constant
    data) and stops once the relative residual ``|r|_2 / |f|_2`` is at most
    ``tol``. Because the operator's spectrum lies in ``[1, inf)`` the pointwise
    error is bounded by the absolute residual ``|r|_2``.

    Raises
    ------
    SolverError
        If the iteration cap (default ``10 * nx * ny``) is reached, or the
        residual stops improving for :data:`STALL_WINDOW` iterations (the
        requested ``tol`` is below the round-off floor).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not mu > 0:
        raise ValueError("mu must be positive")
    g = f.grid
    b = np.asarray(f.values, dtype=float)
    scale = math.sqrt(float(np.vdot(b, b)))
    if scale == 0.0:
        return EllipticSolve(f.with_values(np.zeros(g.shape)), 0, 0.0)
    if max_iter is None:
        max_iter = 10 * g.size
    hx, hy = g.hx, g.hy
    dinv = 1.0 / _diagonal(g, mu)
    x = b.copy() if x0 is None else np.array(x0.values, dtype=float)
    r = b - _apply(x, mu, hx, hy)
    target = tol * scale
    rnorm = math.sqrt(float(np.vdot(r, r)))
    best, best_it = rnorm, 0
    it = 0
    if rnorm > target:
        z = dinv * r
        d = z.copy()
        rz = float(np.vdot(r, z))
        while True:
            Ad = _apply(d, mu, hx, hy)
            step = rz / float(np.vdot(d, Ad))
            x += step * d
            r -= step * Ad
            it += 1
            if it % 50 == 0:
                # guard against drift of the recursive residual
                r = b - _apply(x, mu, hx, hy)
            rnorm = math.sqrt(float(np.vdot(r, r)))
            if rnorm <= target:
                r_true = b - _apply(x, mu, hx, hy)
                rnorm = math.sqrt(float(np.vdot(r_true, r_true)))
                if rnorm <= target:
                    break
                r = r_true
            if rnorm < 0.5 * best:
                best, best_it = rnorm, it
            elif it - best_it > STALL_WINDOW:
                raise SolverError("conjugate gradient stagnated above the tolerance", it, rnorm / scale)
            if it >= max_iter:
                raise SolverError("conjugate gradient hit its iteration cap", it, rnorm / scale)
            z = dinv * r
            rz_new = float(np.vdot(r, z))
            d = z + (rz_new / rz) * d
            rz = rz_new
    return EllipticSolve(f.with_values(x), it, rnorm / scale)


def solve_brinkman_many(F: np.ndarray, grid: GridSpec, mu: float, tol: float = DEFAULT_TOL):
    """Batched version of :func:`solve_brinkman` for a stack ``F`` of shape ``(k, ny, nx)``.

    Every right-hand side runs its own CG recurrence; converged ones are
    frozen. Returns ``(W, iterations)``.
    """
    B = np.asarray(F, dtype=float)
    k = B.shape[0]
    hx, hy = grid.hx, grid.hy
    dinv = 1.0 / _diagonal(grid, mu)
    scale = np.sqrt(np.einsum("kij,kij->k", B, B))
    target = tol * np.where(scale > 0, scale, 1.0)
    X = np.zeros_like(B)
    R = B.copy()

    def dots(a, b):
        return np.einsum("kij,kij->k", a, b)

    active = np.sqrt(dots(R, R)) > target
    Z = dinv * R
    D = Z.copy()
    rz = dots(R, Z)
    it = 0
    cap = 10 * grid.size
    while active.any():
        AD = _apply(D, mu, hx, hy)
        dAd = dots(D, AD)
        step = np.where(active, rz / np.where(active, dAd, 1.0), 0.0)
        X += step[:, None, None] * D
        R -= step[:, None, None] * AD
        it += 1
        if it % 50 == 0:
            R = B - _apply(X, mu, hx, hy)
        rn = np.sqrt(dots(R, R))
        done = active & (rn <= target)
        if done.any():
            R_true = B - _apply(X, mu, hx, hy)
            rn_true = np.sqrt(dots(R_true, R_true))
            R = np.where(done[:, None, None], R_true, R)
            active = active & ~(done & (rn_true <= target))
        if it >= cap and active.any():
            raise SolverError("batched conjugate gradient hit its iteration cap", it, float(rn.max() / scale.max()))
        Z = dinv * R
        rz_new = dots(R, Z)
        beta = np.where(active, rz_new / np.where(rz == 0, 1.0, rz), 0.0)
        D = Z + beta[:, None, None] * D
        rz = rz_new
    return X, it


def operator_matrix(grid: GridSpec, mu: float):
    """The operator ``-mu Lap_h + I`` as a CSC sparse matrix on row-major flattened cells."""
    from scipy import sparse

    ny, nx = grid.shape
    N = grid.size
    idx = np.arange(N).reshape(ny, nx)
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [_diagonal(grid, mu).ravel()]
    for a, b, h in (
        (idx[:, :-1], idx[:, 1:], grid.hx),
        (idx[:-1, :], idx[1:, :], grid.hy),
    ):
        off = np.full(a.size, -mu / h**2)
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [off, off]
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return A.tocsc()


def pressure(n: ScalarField, p: Params) -> ScalarField:
    """``a n^gamma``."""
    return n.with_values(p.a * np.power(n.values, p.gamma))


def hopf_violation(W: ScalarField, n: ScalarField, p: Params) -> float:
    """How far ``W`` leaves ``[a (min n)^gamma, a (max n)^gamma]`` (0 if inside)."""
    lo = p.a * n.min() ** p.gamma
    hi = p.a * n.max() ** p.gamma
    return max(0.0, lo - W.min(), W.max() - hi)


def solve_potential(
    n: ScalarField, p: Params, tol: float = DEFAULT_TOL, x0: ScalarField | None = None
) -> EllipticSolve:
    """Solve for ``W`` given the density and assert the Hopf bounds afterwards."""
    if n.min() < 0:
        raise ValueError("density must be nonnegative")
    f = pressure(n, p)
    sol = solve_brinkman(f, p.mu, tol, x0=x0)
    f2 = math.sqrt(float(np.vdot(f.values, f.values)))
    # the pointwise error is at most the absolute residual |r|_2
    slack = max(10 * tol * max(f.max(), 1.0), 1.01 * sol.residual_norm * f2)
    viol = hopf_violation(sol.W, n, p)
    if viol > slack:
        raise AssertionError(f"Hopf bounds violated by {viol:.3e} (slack {slack:.1e})")
    return sol


def divergence_u(n: ScalarField, W: ScalarField, p: Params) -> ScalarField:
    """``div u = (a n^gamma - W) / mu``, pointwise."""
    if n.grid != W.grid:
        raise ValueError("n and W live on different grids")
    return W.with_values((p.a * np.power(n.values, p.gamma) - W.values) / p.mu)


def velocity(W: ScalarField) -> VectorField:
    """``u = -grad W``.

    Cell-centered components come from ``gradient_centered`` with the
    wall-normal component zeroed on the wall cells. Face velocities are the
    compact differences, so their discrete divergence is exactly ``-Lap_h W``.
    """
    g = W.grid
    grad = gradient_centered(W)
    ux = -np.array(grad.ux)
    uy = -np.array(grad.uy)
    ux[:, 0] = 0.0
    ux[:, -1] = 0.0
    uy[0, :] = 0.0
    uy[-1, :] = 0.0
    gx, gy = face_gradients(W.values, g.hx, g.hy)
    return VectorField(g, ux, uy, face_x=-gx, face_y=-gy)
