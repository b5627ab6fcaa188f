import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erf

from conftest import MAXWELL_A0
from isolandau import profiles
from isolandau.errors import ParameterError
from isolandau.fields import CartesianGrid3, Field, RadialGrid, lp_norm
from isolandau.potential import (a_lower_bound, a_upper_bound_lp, a_upper_bound_rmin,
                                 solve_poisson, solve_poisson_3d, solve_poisson_radial)


def ball_potential(r):
    """Closed form for the unit-height ball of radius 1."""
    r = np.asarray(r, dtype=float)
    return np.where(r <= 1, 0.5 - r**2 / 6, 1 / (3 * np.maximum(r, 1e-300)))


def test_radial_ball_matches_closed_form():
    g = RadialGrid(4.0, 2048)
    sol = solve_poisson(profiles.uniform_ball(g))
    assert sol.method == "radial_quadrature"
    assert sol.at(0.0) == pytest.approx(0.5, abs=1e-3)
    assert sol.at(1.0) == pytest.approx(1 / 3, abs=1e-3)
    np.testing.assert_allclose(sol.a.values, ball_potential(g.nodes), atol=1e-3)


def test_radial_maxwellian_matches_erf_form():
    g = RadialGrid(12.0, 1024)
    a = solve_poisson_radial(profiles.maxwellian(g)).a.values
    r = g.nodes
    exact = erf(r / math.sqrt(2)) / (4 * math.pi * r)
    np.testing.assert_allclose(a, exact, atol=1e-6)
    assert a[0] == pytest.approx(MAXWELL_A0, rel=1e-4)


def test_radial_residual_is_small():
    g = RadialGrid(12.0, 1024)
    assert solve_poisson(profiles.maxwellian(g)).residual < 1e-4


def test_radial_second_order_convergence():
    errs = []
    for n in (256, 512, 1024):
        g = RadialGrid(4.0, n)
        sol = solve_poisson(profiles.maxwellian(g, variance=0.5))
        r = g.nodes
        exact = erf(r) / (4 * math.pi * r)
        errs.append(np.max(np.abs(sol.a.values - exact)))
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5


def test_cartesian_ball_within_two_percent():
    g = CartesianGrid3(2.0, 64)
    sol = solve_poisson_3d(profiles.uniform_ball(g))
    assert sol.method == "fft_free_space"
    assert sol.at((0.0, 0.0, 0.0)) == pytest.approx(0.5, rel=0.02)
    assert sol.at((1.0, 0.0, 0.0)) == pytest.approx(1 / 3, rel=0.02)


def test_cartesian_potential_is_symmetric():
    g = CartesianGrid3(3.0, 24)
    a = solve_poisson(profiles.maxwellian(g)).a.values
    np.testing.assert_allclose(a, np.flip(a, axis=0), rtol=1e-12)
    np.testing.assert_allclose(a, np.transpose(a, (1, 0, 2)), rtol=1e-12)


def test_negative_density_is_rejected():
    g = RadialGrid(2.0, 16)
    with pytest.raises(ParameterError):
        solve_poisson(Field(g, -np.ones(g.shape)))


def test_lower_bound_holds_for_maxwellian():
    g = RadialGrid(12.0, 1024)
    u = profiles.maxwellian(g)
    a = solve_poisson(u).a.values
    assert np.all(a >= a_lower_bound(g.nodes, 1.0, 1.5))
    assert a_lower_bound(0.0, 1.0, 1.5) == pytest.approx(1 / (16 * math.pi * math.sqrt(1.5)))


def test_upper_bound_lp_dominates_sup_a():
    g = RadialGrid(12.0, 1024)
    u = profiles.maxwellian(g)
    a_max = solve_poisson(u).a.max()
    for p in (1.6, 2.0, 3.0):
        assert a_max <= a_upper_bound_lp(1.0, lp_norm(u, p), p)
        assert a_upper_bound_rmin(1.0, lp_norm(u, p), p) > 0
    with pytest.raises(ParameterError):
        a_upper_bound_lp(1.0, 1.0, 1.5)


@given(st.floats(0.1, 10.0))
def test_potential_is_linear_in_density(c):
    g = RadialGrid(6.0, 128)
    u = profiles.maxwellian(g)
    np.testing.assert_allclose(solve_poisson(c * u).a.values, c * solve_poisson(u).a.values,
                               rtol=1e-12)


@given(st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_lower_bound_decreases_with_radius(r1, r2):
    lo, hi = sorted((r1, r2))
    assert a_lower_bound(hi, 1.0, 1.5) <= a_lower_bound(lo, 1.0, 1.5)
