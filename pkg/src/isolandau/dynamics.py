"""Explicit finite-volume time stepping for the two forms of the equation.

divergence form      u_t = div(a grad u - u grad a),   -Laplacian a = u
nondivergence form   u_t = a Laplacian u + alpha u^2

Face fluxes use arithmetic face averages of ``a`` and ``u``; the outer faces
and the ``r = 0`` face carry no flux, so the discrete mass of the divergence
form changes only through round-off and negativity clipping.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import profiles
from .errors import ParameterError, StabilityError
from .fields import CartesianGrid3, Field, RadialGrid, divergence, face_diff, face_mean, laplacian, quad
from .potential import PotentialSolution, solve_poisson

log = logging.getLogger(__name__)

KS_ALPHA_MAX = 74.0 / 75.0
FORMS = ("divergence", "nondivergence")


@dataclass(frozen=True)
class GridSpec:
    kind: str = "radial"
    extent: float = 12.0
    n: int = 1024

    def build(self):
        if self.kind == "radial":
            return RadialGrid(float(self.extent), int(self.n))
        if self.kind == "cartesian":
            return CartesianGrid3(float(self.extent), int(self.n))
        raise ParameterError(f"unknown grid kind {self.kind!r} (radial or cartesian)")


@dataclass(frozen=True)
class SimConfig:
    form: str = "divergence"
    alpha: float = 1.0
    grid: GridSpec = field(default_factory=GridSpec)
    t_end: float = 0.1
    cfl_safety: float = 0.5
    output_stride: int = 50
    init: str = "maxwellian"
    init_params: tuple = ()
    blowup_factor: float = 1e6
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.form not in FORMS:
            raise ParameterError(f"form must be one of {FORMS}, got {self.form!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ParameterError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.t_end >= 0:
            raise ParameterError(f"t_end must be >= 0, got {self.t_end}")
        if int(self.output_stride) < 1:
            raise ParameterError("output stride must be a positive step count")
        if not self.blowup_factor > 1:
            raise ParameterError("blowup_factor must exceed 1")
        if self.form == "nondivergence":
            check_alpha(self.alpha)

    def initial_field(self) -> Field:
        return profiles.build(self.grid.build(), self.init, dict(self.init_params))


def check_alpha(alpha):
    """alpha = 1 is the expanded Landau equation; other values are the KS variant."""
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if alpha != 1.0 and alpha >= KS_ALPHA_MAX:
        warnings.warn(f"alpha={alpha} lies outside the analysed range (0, 74/75)", stacklevel=3)


@dataclass(frozen=True)
class SimState:
    t: float
    u: Field
    a: PotentialSolution
    step: int = 0
    clipped_mass: float = 0.0

    @classmethod
    def initial(cls, u: Field, t=0.0, step=0):
        return cls(t, u, solve_poisson(u), step)


def stable_dt(grid, a_max, cfl_safety=1.0) -> float:
    """``cfl h^2 / (2 d max a)`` with d = 3; infinite in vacuum."""
    if a_max <= 0:
        return math.inf
    return cfl_safety * grid.spacing**2 / (2 * grid.dim * a_max)


def _check_dt(state, dt, cfl_safety):
    if not dt >= 0:
        raise ParameterError(f"dt must be nonnegative, got {dt}")
    dt_max = stable_dt(state.u.grid, float(state.a.a.values.max()), cfl_safety)
    if dt > dt_max * (1 + 1e-12):
        raise StabilityError(dt, dt_max)


def divergence_rhs(grid, u, a) -> np.ndarray:
    fluxes = [af * du - uf * da for af, du, uf, da in
              zip(face_mean(grid, a), face_diff(grid, u), face_mean(grid, u), face_diff(grid, a))]
    return divergence(grid, fluxes)


def nondivergence_rhs(grid, u, a, alpha) -> np.ndarray:
    return a * laplacian(grid, u) + alpha * u * u


def _advance(state, dt, rhs) -> SimState:
    grid = state.u.grid
    new = state.u.values + dt * rhs
    neg = new < 0
    clipped = 0.0
    if np.any(neg):
        clipped = quad(grid, np.where(neg, -new, 0.0))
        new = np.where(neg, 0.0, new)
    u = Field(grid, new)
    return SimState(state.t + dt, u, solve_poisson(u), state.step + 1, clipped)


def step_divergence(state: SimState, dt: float, cfl_safety: float = 1.0) -> SimState:
    _check_dt(state, dt, cfl_safety)
    return _advance(state, dt, divergence_rhs(state.u.grid, state.u.values, state.a.a.values))


def step_nondivergence(state: SimState, dt: float, alpha: float = 1.0, cfl_safety: float = 1.0) -> SimState:
    _check_dt(state, dt, cfl_safety)
    rhs = nondivergence_rhs(state.u.grid, state.u.values, state.a.a.values, alpha)
    return _advance(state, dt, rhs)


@dataclass
class Trajectory:
    config: SimConfig
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    blowup: dict | None = None
    clipped_mass: float = 0.0
    steps: int = 0

    @property
    def times(self):
        return np.array([s.t for s in self.states])


def run(config: SimConfig, start: SimState | None = None, calibration=None,
        on_emit: Callable | None = None, on_checkpoint: Callable | None = None,
        keep_states: bool = True, emit_start: bool = True) -> Trajectory:
    """Advance to ``t_end`` emitting a state and a diagnostics record every stride.

    ``start`` resumes from a restored state; the step/time bookkeeping then
    continues exactly as in an uninterrupted run.  A resumed run usually
    passes ``emit_start=False`` because the start slice was already emitted.
    """
    from .diagnostics import DEFAULT_CALIBRATION, record

    calibration = calibration or DEFAULT_CALIBRATION
    state = start if start is not None else SimState.initial(config.initial_field())
    grid = state.u.grid
    traj = Trajectory(config)
    ceiling = config.blowup_factor * max(state.u.max(), np.finfo(float).tiny)
    stride = int(config.output_stride)

    def emit(s):
        rec = record(s, calibration)
        traj.records.append(rec)
        if keep_states:
            traj.states.append(s)
        if on_emit is not None:
            on_emit(s, rec)

    if emit_start:
        emit(state)
    stepper = step_divergence if config.form == "divergence" else None
    while state.t < config.t_end:
        dt = stable_dt(grid, float(state.a.a.values.max()), config.cfl_safety)
        remaining = config.t_end - state.t
        if dt >= remaining * (1 - 1e-12):
            dt = remaining
        if stepper is not None:
            state = stepper(state, dt, config.cfl_safety)
        else:
            state = step_nondivergence(state, dt, config.alpha, config.cfl_safety)
        if dt == remaining:
            state = replace(state, t=config.t_end)
        traj.clipped_mass += state.clipped_mass
        traj.steps += 1
        if not np.all(np.isfinite(state.u.values)) or state.u.max() > ceiling:
            emit(state)
            traj.blowup = {"t": state.t, "step": state.step, "max_u": state.u.max(),
                           "ceiling": ceiling}
            log.warning("blow-up detected at t=%.6g (max u %.3g > %.3g)", state.t, state.u.max(), ceiling)
            break
        if state.step % stride == 0 or state.t >= config.t_end:
            emit(state)
        if on_checkpoint is not None and config.checkpoint_every and state.step % config.checkpoint_every == 0:
            on_checkpoint(state)
    return traj
