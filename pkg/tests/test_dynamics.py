import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import radial_config
from isolandau import profiles
from isolandau.dynamics import (KS_ALPHA_MAX, GridSpec, SimConfig, SimState, run, stable_dt,
                                step_divergence, step_nondivergence)
from isolandau.errors import ParameterError, StabilityError
from isolandau.fields import RadialGrid, moment


def test_mass_is_conserved(maxwell_run):
    m0 = maxwell_run.records[0].mass
    for rec in maxwell_run.records:
        assert abs(rec.mass - m0) <= 1e-10 * m0
    assert maxwell_run.clipped_mass == 0.0


def test_run_reaches_end_time_exactly(maxwell_run):
    assert maxwell_run.states[-1].t == 0.1
    assert maxwell_run.steps == maxwell_run.states[-1].step


def test_even_cartesian_run_keeps_zero_first_moment(cartesian_run):
    for rec in cartesian_run.records:
        assert np.max(np.abs(rec.first_moment)) <= 1e-12
    m0 = cartesian_run.records[0].mass
    assert abs(cartesian_run.records[-1].mass - m0) <= 1e-10 * m0


def test_step_rejects_unstable_dt():
    state = SimState.initial(profiles.maxwellian(RadialGrid(12.0, 256)))
    dt_max = stable_dt(state.u.grid, state.a.a.max())
    with pytest.raises(StabilityError) as info:
        step_divergence(state, 1.5 * dt_max)
    assert info.value.dt_max == pytest.approx(dt_max)
    with pytest.raises(ParameterError):
        step_divergence(state, -1.0)


def test_stable_dt_in_vacuum_is_infinite():
    assert stable_dt(RadialGrid(1.0, 16), 0.0) == np.inf


def test_constant_density_is_stationary_for_divergence_form():
    g = RadialGrid(4.0, 64)
    state = SimState.initial(profiles.uniform_ball(g, radius=10.0))
    # interior of the zero-flux box: u grad a and a grad u cancel against the flat profile
    nxt = step_divergence(state, 0.5 * stable_dt(g, state.a.a.max()))
    assert moment(nxt.u, 0) == pytest.approx(moment(state.u, 0), rel=1e-13)


def test_nondivergence_form_mass_balance():
    # a Laplacian u + alpha u^2 = div(a grad u - u grad a) - (1 - alpha) u^2
    landau = run(radial_config(256, t_end=0.05, form="nondivergence", stride=1000))
    assert landau.records[-1].mass == pytest.approx(1.0, rel=1e-5)
    ks = run(radial_config(256, t_end=0.05, form="nondivergence", alpha=0.5, stride=1000))
    assert ks.records[-1].mass < landau.records[-1].mass - 1e-4


def test_alpha_validation():
    with pytest.raises(ParameterError):
        SimConfig(form="nondivergence", alpha=0.0)
    with pytest.warns(UserWarning):
        SimConfig(form="nondivergence", alpha=KS_ALPHA_MAX)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SimConfig(form="nondivergence", alpha=1.0)
        SimConfig(form="nondivergence", alpha=0.5)


def test_config_validation():
    with pytest.raises(ParameterError):
        SimConfig(form="weak")
    with pytest.raises(ParameterError):
        SimConfig(cfl_safety=1.5)
    with pytest.raises(ParameterError):
        SimConfig(output_stride=0)
    with pytest.raises(ParameterError):
        GridSpec("spherical").build()


def test_resume_is_bit_exact():
    config = radial_config(256, t_end=0.05, stride=3)
    full = run(config)
    middle = full.states[2]
    rest = run(config, start=middle, emit_start=False)
    np.testing.assert_array_equal(rest.states[-1].u.values, full.states[-1].u.values)
    assert [r.t for r in rest.records] == [r.t for r in full.records[3:]]


def test_nonnegativity_is_preserved(maxwell_run):
    for s in maxwell_run.states:
        assert np.all(s.u.values >= 0)


@given(st.floats(0.3, 3.0))
def test_step_commutes_with_scaling_of_time(c):
    # u -> c u(c t) maps solutions to solutions: one step of dt/c on c u0 equals c times one step of dt
    g = RadialGrid(8.0, 64)
    u0 = profiles.maxwellian(g)
    s = SimState.initial(u0)
    dt = 0.4 * stable_dt(g, s.a.a.max())
    one = step_divergence(s, dt)
    scaled = step_divergence(SimState.initial(c * u0), dt / c)
    np.testing.assert_allclose(scaled.u.values, c * one.u.values, rtol=1e-10, atol=1e-15)


@given(st.floats(0.1, 0.9))
def test_nondivergence_step_is_monotone_in_alpha(alpha):
    g = RadialGrid(8.0, 64)
    s = SimState.initial(profiles.maxwellian(g))
    dt = 0.4 * stable_dt(g, s.a.a.max())
    lo = step_nondivergence(s, dt, alpha)
    hi = step_nondivergence(s, dt, alpha + 0.05)
    assert np.all(hi.u.values >= lo.u.values)
