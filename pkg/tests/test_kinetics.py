from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorflow.kinetics import (
    Params,
    comparison_rhs,
    compute_eta,
    compute_n_star,
    equilibria,
    growth_G,
    reaction_rhs,
    solve_comparison_ode,
    solve_reduced_ode,
)
from tumorflow.simulator import vacuum_level

params_st = st.builds(
    Params,
    mu=st.floats(0.05, 50),
    a=st.floats(0.05, 5),
    gamma=st.floats(1.0, 4.0),
    theta=st.floats(0.1, 3.0),
    alpha=st.floats(0.1, 5),
    beta=st.floats(0.1, 5),
)


def test_params_validation():
    with pytest.raises(ValueError):
        Params(mu=-1.0)
    with pytest.raises(ValueError):
        Params(gamma=0.5)
    assert Params(gamma=2, theta=0.25).gt == 0.5


def test_growth_examples(default_params):
    p = default_params
    assert growth_G(0.0, p) == p.alpha
    assert abs(growth_G(compute_n_star(p), p)) <= 1e-12
    assert growth_G(4.0, p) == pytest.approx(-3.0, abs=1e-15)
    with pytest.raises(ValueError):
        growth_G(-0.1, p)


def test_reaction_rhs_examples(default_params):
    p = default_params
    assert reaction_rhs(0.0, p) == 0.0
    assert abs(reaction_rhs(compute_n_star(p), p)) <= 1e-15


@settings(max_examples=60, deadline=None)
@given(params_st, st.floats(0.0, 3.0))
def test_reaction_below_tangent_above_n_star(p, excess):
    ns = compute_n_star(p)
    n = ns * (1 + excess)
    assert reaction_rhs(n, p) <= -p.alpha * p.gt * (n - ns) + 1e-12 * max(1.0, n)


@settings(max_examples=60, deadline=None)
@given(params_st)
def test_growth_strictly_decreasing(p):
    # start away from 0, where n^(gamma theta) can sit below double resolution of G
    n = np.linspace(0.3, 3.0, 200) * compute_n_star(p)
    assert np.all(np.diff(growth_G(n, p)) < 0)


def test_n_star_closed_forms():
    assert compute_n_star(Params(alpha=3.0, beta=3.0)) == 1.0
    assert compute_n_star(Params(alpha=2.0, beta=1.0, gamma=2.0, theta=1.0)) == pytest.approx(math.sqrt(2), rel=1e-15)


def test_n_star_residual_random_draws():
    r = np.random.default_rng(5)
    for _ in range(100):
        p = Params(mu=r.uniform(0.1, 10), a=r.uniform(0.1, 3), gamma=r.uniform(1, 3), theta=r.uniform(0.2, 2),
                   alpha=r.uniform(0.2, 3), beta=r.uniform(0.2, 3))
        assert abs(growth_G(compute_n_star(p), p)) <= 1e-14


def test_eta_quadratic_oracle():
    p = Params(mu=10, a=1, gamma=2, theta=0.5, alpha=1, beta=1)
    oracle = (-1 + math.sqrt(1.4)) / 0.2
    assert compute_eta(p) == pytest.approx(oracle, abs=1e-13)
    assert compute_eta(p) == pytest.approx(0.916079783099616, abs=1e-12)


def test_eta_small_beta_limit():
    p = Params(mu=2.0, a=2.0, gamma=1.0, theta=0.5, alpha=1.0, beta=1e-12)
    assert compute_eta(p) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(params_st)
def test_equilibria_invariants(p):
    e = equilibria(p)
    assert 0 < e.eta < e.n_star
    assert abs(p.alpha - p.beta * e.eta**p.gt - p.a / p.mu * e.eta**p.gamma) <= 1e-12 * max(1.0, p.alpha)
    assert e.w_star == pytest.approx(p.a * e.n_star**p.gamma)


def test_comparison_equilibria(default_params):
    p = default_params
    zero = solve_comparison_ode(0.0, 5.0, 0.01, p)
    assert np.all(zero.values == 0)
    eta = compute_eta(p)
    flat = solve_comparison_ode(eta, 5.0, 0.01, p)
    assert np.abs(flat.values - eta).max() <= 1e-10


def test_comparison_from_half_eta(default_params):
    p = default_params
    eta = compute_eta(p)
    m = eta / 2
    tr = solve_comparison_ode(m, 50.0 / p.alpha, 0.01, p)
    assert np.all(np.diff(tr.values) > 0) or np.all(np.diff(tr.values[: np.argmax(tr.values)]) > 0)
    assert abs(tr.values[-1] - eta) <= 1e-6
    fine = solve_comparison_ode(m, 50.0 / p.alpha, 0.005, p)
    assert np.abs(fine.at(tr.times) - tr.values).max() <= 1e-9
    # while below nu the net rate is at least 3 alpha / 4, so the trace outgrows m e^(alpha t / 2)
    nu = vacuum_level(p)
    small = solve_comparison_ode(0.01 * nu, 1.0, 0.001, p)
    below = small.values <= nu
    assert np.all(small.values[below] >= 0.01 * nu * np.exp(0.5 * p.alpha * small.times[below]))


def test_comparison_monotone_both_sides(default_params):
    p = default_params
    eta = compute_eta(p)
    T = 100.0 / p.alpha
    up = solve_comparison_ode(0.3 * eta, T, 0.01, p)
    down = solve_comparison_ode(3.0 * eta, T, 0.01, p)
    assert np.all(np.diff(up.values) >= 0) and np.all(np.diff(up.values[:500]) > 0)
    assert np.all(np.diff(down.values) <= 0) and np.all(np.diff(down.values[:500]) < 0)
    assert abs(up.values[-1] - eta) <= 1e-6 and abs(down.values[-1] - eta) <= 1e-6


def test_rk4_fourth_order(default_params):
    p = default_params
    finals = [solve_comparison_ode(0.2, 3.0, dt, p).values[-1] for dt in (0.2, 0.1, 0.05)]
    ratio = (finals[0] - finals[1]) / (finals[1] - finals[2])
    assert ratio == pytest.approx(16, rel=0.2)


def test_last_step_lands_on_t_end(default_params):
    tr = solve_comparison_ode(0.2, 1.05, 0.1, default_params)
    assert tr.times[-1] == 1.05 and len(tr.times) == 12
    with pytest.raises(ValueError):
        solve_comparison_ode(0.2, 0.05, 0.1, default_params)


def test_reduced_ode_tends_to_n_star(default_params):
    p = default_params
    tr = solve_reduced_ode(0.3, 40.0, 0.01, p)
    assert abs(tr.values[-1] - compute_n_star(p)) <= 1e-10
    assert np.all(np.diff(tr.values) >= 0)


def test_comparison_is_lower_bound_of_reduced(default_params):
    p = default_params
    n = np.linspace(0, 2, 50)
    assert np.all(comparison_rhs(n, p) <= reaction_rhs(n, p))
    c = solve_comparison_ode(0.3, 5.0, 0.01, p)
    r = solve_reduced_ode(0.3, 5.0, 0.01, p)
    assert np.all(c.values <= r.values + 1e-15)
