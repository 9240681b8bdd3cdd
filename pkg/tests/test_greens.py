from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorflow.core import GridSpec, ScalarField
from tumorflow.elliptic import solve_brinkman
from tumorflow.greens import (
    EULER_GAMMA,
    MAX_GREEN_CELLS,
    RadialBump,
    bessel_k0,
    bessel_k1,
    cell_index,
    corrector_green,
    discrete_green_matrix,
    fundamental_normalization_check,
    interior_lower_bound,
    psi_cell_average,
    psi_fundamental,
    psi_radial_derivative,
    read_triplets,
)

mp.mp.dps = 30


# --- Bessel functions --------------------------------------------------------

def test_k0_log_asymptotic():
    x = 1e-6
    assert abs(bessel_k0(x) + math.log(x / 2) + EULER_GAMMA) <= 1e-6


def test_k0_at_one_matches_integral_representation():
    oracle = float(mp.quad(lambda t: mp.exp(-mp.cosh(t)), [0, 1, 3, 10]))  # e^{-cosh 10} < 1e-4000
    assert abs(bessel_k0(1.0) - oracle) <= 1e-9 * oracle


def test_k0_large_argument_asymptotic():
    x = 20.0
    assert abs(bessel_k0(x) / (math.exp(-x) * math.sqrt(math.pi / (2 * x))) - 1) <= 1e-2


@settings(max_examples=80, deadline=None)
@given(st.floats(1e-4, 60.0))
def test_k0_k1_against_mpmath(x):
    for fn, order in ((bessel_k0, 0), (bessel_k1, 1)):
        ref = float(mp.besselk(order, x))
        assert abs(fn(x) - ref) <= 1e-9 * ref


def test_bessel_split_is_continuous():
    lo, hi = np.nextafter(2.0, 0.0), np.nextafter(2.0, 3.0)
    assert bessel_k0(lo) == pytest.approx(bessel_k0(hi), rel=1e-12)
    assert bessel_k1(lo) == pytest.approx(bessel_k1(hi), rel=1e-12)


@pytest.mark.parametrize("x", [0.0, -1.0, float("nan")])
def test_bessel_rejects_nonpositive(x):
    with pytest.raises(ValueError):
        bessel_k0(x)
    with pytest.raises(ValueError):
        bessel_k1(x)


def test_bessel_vectorised():
    xs = np.array([0.5, 2.0, 7.5])
    assert np.array_equal(bessel_k0(xs), [bessel_k0(x) for x in xs])


# --- free-space kernels ------------------------------------------------------

@pytest.mark.parametrize("dim", [2, 3])
def test_psi_strictly_decreasing(dim):
    r = np.geomspace(1e-4, 10, 400)
    v = psi_fundamental(r, 0.3, dim)
    assert np.all(np.diff(v) < 0)
    assert np.all(psi_radial_derivative(r, 0.3, dim) < 0)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("mu", [0.01, 0.5, 4.0])
def test_psi_mu_scaling(dim, mu):
    r = np.geomspace(1e-3, 5, 50)
    lhs = psi_fundamental(r, mu, dim)
    rhs = psi_fundamental(r / math.sqrt(mu), 1.0, dim) / mu
    # in 3D the 1/r factor contributes another mu^(-1/2)
    if dim == 3:
        rhs = rhs / math.sqrt(mu)
    assert np.max(np.abs(lhs / rhs - 1)) <= 1e-12


def test_psi_radial_derivative_matches_finite_difference():
    for dim in (2, 3):
        r, h = 0.4, 1e-6
        fd = (psi_fundamental(r + h, 0.2, dim) - psi_fundamental(r - h, 0.2, dim)) / (2 * h)
        assert psi_radial_derivative(r, 0.2, dim) == pytest.approx(fd, rel=1e-7)


def test_psi_rejects_bad_input():
    with pytest.raises(ValueError):
        psi_fundamental(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        psi_fundamental(1.0, -1.0, 3)
    with pytest.raises(ValueError):
        psi_fundamental(1.0, 1.0, 4)


def test_psi_equation_away_from_origin():
    """``-mu Lap Psi + Psi = 0`` for r > 0, by a radial finite difference."""
    mu, h = 0.5, 1e-4
    for dim in (2, 3):
        for r in (0.2, 1.0, 2.5):
            f = lambda s: psi_fundamental(s, mu, dim)  # noqa: E731
            lap = (f(r + h) - 2 * f(r) + f(r - h)) / h**2 + (dim - 1) / r * (f(r + h) - f(r - h)) / (2 * h)
            assert abs(-mu * lap + f(r)) <= 1e-5 * abs(f(r))


def test_cell_average_matches_quadrature():
    mu, area = 0.1, (1 / 32) ** 2
    rho = math.sqrt(area / math.pi)
    s = math.sqrt(mu)
    oracle = mp.quad(lambda t: 2 * mp.pi * t * mp.besselk(0, t / s), [0, rho]) / (2 * mp.pi * mu) / area
    assert psi_cell_average(mu, area) == pytest.approx(float(oracle), rel=1e-10)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("kind", ["compact", "gaussian"])
@pytest.mark.parametrize("mu", [0.1, 1.0, 10.0])
def test_normalization_identity(dim, kind, mu):
    bump = RadialBump(radius=max(1.0, 3 * math.sqrt(mu)), kind=kind)
    assert fundamental_normalization_check(mu, dim, bump) <= 1e-3


@pytest.mark.parametrize("dim", [2, 3])
def test_normalization_is_linear_in_the_constant(dim):
    assert fundamental_normalization_check(1.0, dim, scale=0.5) == pytest.approx(0.5, abs=1e-6)
    assert fundamental_normalization_check(1.0, dim, scale=2.0) == pytest.approx(1.0, abs=1e-6)


def test_bump_rejects_bad_arguments():
    with pytest.raises(ValueError):
        RadialBump(radius=0.0)
    with pytest.raises(ValueError):
        RadialBump(kind="square")


def test_bump_derivatives_match_finite_differences():
    for kind in ("compact", "gaussian"):
        b = RadialBump(0.8, kind)
        r, h = 0.37, 1e-5
        f0, d1, d2 = b.derivatives(r)
        assert d1 == pytest.approx((b.derivatives(r + h)[0] - b.derivatives(r - h)[0]) / (2 * h), rel=1e-6)
        assert d2 == pytest.approx((b.derivatives(r + h)[1] - b.derivatives(r - h)[1]) / (2 * h), rel=1e-6)


# --- discrete Green's matrix ---------------------------------------------------

@pytest.fixture(scope="module")
def green16():
    return discrete_green_matrix(GridSpec(16, 16), 0.1, tol=1e-12)


def test_matrix_reproduces_solver(green16, rng):
    g = green16.grid
    f = ScalarField(g, rng.normal(size=g.shape))
    ref = solve_brinkman(f, green16.mu, 1e-13).W
    assert float(np.abs(green16.apply(f).values - ref.values).max()) <= 1e-8


def test_matrix_symmetric_and_positive(green16):
    assert green16.symmetry_defect() <= 10 * green16.tol
    assert green16.min_entry() > 0


def test_cg_and_lu_agree():
    g = GridSpec(8, 12, 1.0, 1.5)
    lu = discrete_green_matrix(g, 0.3, tol=1e-12)
    cg = discrete_green_matrix(g, 0.3, tol=1e-12, method="cg", batch=40)
    scale = np.abs(lu.entries).max()
    assert np.abs(lu.entries - cg.entries).max() <= 1e-9 * scale
    assert cg.symmetry_defect() <= 10 * cg.tol
    with pytest.raises(ValueError):
        discrete_green_matrix(g, 0.3, method="dense")


def test_matrix_grows_toward_source(green16):
    g = green16.grid
    j = cell_index(g, 8, 8)
    col = green16.column(j).values
    row = col[8, :9]  # cells (0..8, 8) approaching the source along x
    assert np.all(np.diff(row) > 0)
    assert col[8, 8] == col.max()


def test_interior_lower_bound_stable_under_refinement():
    mu, delta = 0.1, 0.25
    m = [interior_lower_bound(discrete_green_matrix(GridSpec(n, n), mu), delta) for n in (32, 48)]
    assert min(m) > 0
    assert abs(m[1] - m[0]) <= 0.1 * m[1]
    with pytest.raises(ValueError):
        interior_lower_bound(discrete_green_matrix(GridSpec(8, 8), mu), 0.6)


def test_matrix_size_limit():
    side = int(math.isqrt(MAX_GREEN_CELLS)) + 1
    with pytest.raises(ValueError, match="limited"):
        discrete_green_matrix(GridSpec(side, side), 1.0)


def test_cell_index_row_major():
    g = GridSpec(5, 3)
    assert cell_index(g, 0, 0) == 0
    assert cell_index(g, 4, 0) == 4
    assert cell_index(g, 0, 1) == 5
    assert cell_index(g, 4, 2) == 14
    with pytest.raises(IndexError):
        cell_index(g, 5, 0)


def test_triplet_round_trip(tmp_path):
    G = discrete_green_matrix(GridSpec(4, 3), 0.5)
    path = G.write_triplets(tmp_path / "green.txt")
    lines = path.read_text().splitlines()
    assert len(lines) == 144
    assert lines[1].split()[:2] == ["0", "1"]
    assert np.array_equal(read_triplets(path, G.grid), G.entries)


# --- corrector -------------------------------------------------------------------

def _psi_grid(grid, y, mu):
    cx, cy = grid.center(*y)
    X, Y = grid.mesh()
    r = np.hypot(X - cx, Y - cy)
    return r, np.where(r == 0, psi_cell_average(mu, grid.cell_area), psi_fundamental(np.where(r == 0, 1, r), mu, 2))


def test_corrector_vanishes_for_short_screening_length():
    g = GridSpec(32, 32)
    mu, y = 1e-3, (16, 16)
    r, psi = _psi_grid(g, y, mu)
    phi = psi - corrector_green(y, g, mu, tol=1e-12).values
    assert np.abs(phi).max() <= 1e-3 * float(psi_fundamental(g.hx, mu, 2))


@pytest.mark.parametrize("mu", [0.1, 0.01])
def test_corrector_matches_matrix_column(mu):
    g = GridSpec(32, 32)
    y = (12, 18)
    Gm = discrete_green_matrix(g, mu)
    col = Gm.column(cell_index(g, *y)).values
    corr = corrector_green(y, g, mu).values
    r, _ = _psi_grid(g, y, mu)
    # compare off the source, where the point kernel is resolved by the grid
    mask = (r > 1.5 * g.hx) & (r < 0.4)
    assert np.max(np.abs(corr[mask] - col[mask]) / col[mask]) <= 0.05


def test_corrector_swapped_pairs_symmetric():
    g = GridSpec(32, 32)
    mu = 0.1
    a, b = (8, 10), (20, 15)
    Ga = corrector_green(a, g, mu).values
    Gb = corrector_green(b, g, mu).values
    # value at b from source a against value at a from source b
    v_ab = Ga[b[1], b[0]]
    v_ba = Gb[a[1], a[0]]
    assert abs(v_ab - v_ba) <= 0.05 * max(v_ab, v_ba)


def test_corrector_rejects_sources_near_the_wall():
    g = GridSpec(32, 32)
    with pytest.raises(ValueError, match="3h"):
        corrector_green((2, 16), g, 0.1)
    with pytest.raises(ValueError):
        corrector_green((16, 29), g, 0.1)
    corrector_green((3, 28), g, 0.1)  # exactly three cells of clearance is allowed
