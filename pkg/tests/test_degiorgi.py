from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import radial_config
from isolandau import profiles
from isolandau.degiorgi import (DeGiorgiLadder, cutoff_energy_constant, degiorgi_report,
                                energy_identity_residual, m_exponent, m_threshold,
                                ramp_derivative_maxima, recurrence_check, recurrence_constant,
                                seed_threshold, support_consistent, truncation)
from isolandau.dynamics import run
from isolandau.errors import ParameterError, ResolutionError
from isolandau.fields import RadialGrid


def test_ladder_values():
    L = DeGiorgiLadder(T=1.0, R=8.0, M=2.0, n_max=3)
    np.testing.assert_array_equal(L.times, [0.25, 0.375, 0.4375, 0.46875, 0.484375])
    np.testing.assert_array_equal(L.radii, [8.0, 6.0, 5.0, 4.5, 4.25])
    np.testing.assert_array_equal(L.levels, [0.0, 1.0, 1.5, 1.75, 1.875])
    assert L.annulus_width(2) == 0.5


@given(st.floats(1e-3, 1e3), st.floats(1e-2, 1e2), st.floats(1e-3, 1e3), st.integers(0, 30))
def test_ladder_matches_closed_forms(T, R, M, n):
    L = DeGiorgiLadder(T, R, M, n_max=30)
    assert L.time(n) == pytest.approx(float(Fraction(2) - Fraction(1, 2**n)) * T / 4, rel=1e-15)
    assert L.radius(n) == pytest.approx(float(1 + Fraction(1, 2**n)) * R / 2, rel=1e-15)
    assert L.level(n) == pytest.approx(float(1 - Fraction(1, 2**n)) * M, rel=1e-15, abs=1e-300)
    assert L.time(n + 1) > L.time(n)
    assert L.radius(n + 1) < L.radius(n)


def test_ladder_validation():
    with pytest.raises(ParameterError):
        DeGiorgiLadder(0.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        DeGiorgiLadder(1.0, 1.0, 1.0, n_max=2.5)


def test_cutoff_needs_resolution():
    L = DeGiorgiLadder(1.0, 8.0, 1.0)
    with pytest.raises(ResolutionError):
        L.eta(RadialGrid(12.0, 512), 8)
    eta = L.eta(RadialGrid(8.0, 4096), 8).values
    g = RadialGrid(8.0, 4096)
    assert np.all(eta[g.radius <= L.radius(9)] == 1.0)
    assert np.all(eta[g.radius >= L.radius(8)] == 0.0)


def test_cutoff_constants_are_bounded():
    d1, d2 = ramp_derivative_maxima()
    assert d1 == pytest.approx(2.0, rel=1e-6)
    L = DeGiorgiLadder(1.0, 8.0, 1.0)
    for n in range(9):
        grad, hess = L.cutoff_constants(n)
        assert grad == pytest.approx(0.5)
        assert hess <= 1.0


def test_cutoff_energy_constant():
    assert cutoff_energy_constant(2.0) == pytest.approx(2 + 8 + 4)
    assert cutoff_energy_constant(5 / 3) == pytest.approx(4 * 3 / 5 + 2 * (1 / 9) / (5 / 3 * 2 / 3) + 10 + 4)
    with pytest.raises(ParameterError):
        cutoff_energy_constant(1.0)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_truncation_is_monotone_in_level(k1, k2):
    u = profiles.maxwellian(RadialGrid(6.0, 64), mass=20.0)
    lo, hi = sorted((k1, k2))
    assert np.all(truncation(u, hi).values <= truncation(u, lo).values)


@given(st.integers(1, 8), st.floats(0.01, 2.0))
def test_support_consistency(n, M):
    u = profiles.maxwellian(RadialGrid(6.0, 256), mass=10.0)
    assert support_consistent(u, DeGiorgiLadder(1.0, 6.0, M), n)


def test_m_exponent_exact():
    assert m_exponent(2, 3) == 21 / 8
    assert m_exponent(50, 3) < m_exponent(1, 3)
    with pytest.raises(ParameterError, match="smallest admissible n is 1"):
        m_exponent(0, 3)
    with pytest.raises(ParameterError):
        m_exponent(2, 2)
    th = m_threshold(0.5, 2, 3)
    assert th.threshold == pytest.approx(3.0 ** (21 / 8))


def test_recurrence_algebra():
    U = [0.1, 0.1**1.5, 0.0]
    C = recurrence_constant(U, 3)
    assert C == pytest.approx(1.0)
    assert seed_threshold(3, 1.0) == pytest.approx(1 / 4096)
    verdict = recurrence_check(U, 3, C)
    assert verdict.verdict == "no-decay" and all(verdict.holds)
    assert recurrence_check([1e-4, 0.0], 3, 1.0).verdict == "decay"
    with pytest.raises(ParameterError):
        recurrence_check([-1.0], 3, 1.0)


def test_bounded_maxwellian_decays(degiorgi_run):
    sup = max(s.u.max() for s in degiorgi_run.states)
    ladder = DeGiorgiLadder(degiorgi_run.states[-1].t, 8.0, 2 * sup)
    report = degiorgi_report(degiorgi_run, ladder)
    U = report.U
    assert all(b <= a for a, b in zip(U, U[1:]))
    assert U[8] < 1e-8
    assert report.recurrence.verdict == "decay"


def test_tight_level_gives_geometric_decay(degiorgi_run):
    sup = max(s.u.max() for s in degiorgi_run.states)
    ladder = DeGiorgiLadder(degiorgi_run.states[-1].t, 8.0, sup)
    U = degiorgi_report(degiorgi_run, ladder).U
    assert all(b < a for a, b in zip(U, U[1:]))
    assert U[8] < 1e-5 * U[0]


@pytest.mark.parametrize("n", [512, 1024])
def test_energy_inequality_residual(n):
    traj = run(radial_config(n, t_end=0.02, r_max=8.0, stride=10))
    ladder = DeGiorgiLadder(0.02, 8.0, traj.states[0].u.max())
    eta = ladder.eta(traj.states[0].u.grid, 1)
    for s0, s1 in zip(traj.states, traj.states[1:]):
        res = energy_identity_residual(s0, s1, eta, ladder.level(1))
        assert res.residual <= 1e-2 * abs(res.lhs)
        assert abs(res.identity_defect) < 0.05


def test_report_serializes(degiorgi_run):
    ladder = DeGiorgiLadder(0.02, 8.0, 1.0, n_max=2)
    report = degiorgi_report(degiorgi_run, ladder)
    d = report.to_dict()
    assert d["verdict"] in ("decay", "no-decay")
    assert report.to_csv().splitlines()[0] == "n,U_n"
    assert len(report.to_csv().splitlines()) == 4
