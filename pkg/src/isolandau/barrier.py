"""Radial supersolutions ``g`` with ``a Laplacian g + u g < 0`` and comparison monitoring.

The comparison argument is stated for the nondivergence form; running the
monitor on divergence-form trajectories is allowed and flagged in the report.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .fields import Field, lp_weak_norm
from .inequalities import _states_of
from .potential import solve_poisson

MONOTONE_RTOL = 1e-12


def _require_radial(*fields):
    grid = fields[0].grid
    for f in fields:
        if f.grid.kind != "radial":
            raise ParameterError("barrier checks need fields on a RadialGrid")
        if f.grid != grid:
            raise ParameterError("fields live on different grids")


def monotone_radial_check(u: Field) -> bool:
    """True iff ``u(r_(i+1)) <= u(r_i) + 1e-12 max u`` for every i."""
    _require_radial(u)
    v = u.values
    tol = MONOTONE_RTOL * max(float(np.max(np.abs(v))), 0.0)
    return bool(np.all(v[1:] <= v[:-1] + tol))


def radial_laplacian(g: Field) -> np.ndarray:
    """Finite-volume ``g'' + 2 g'/r``; the outer face reuses the last interior slope.

    Unlike the zero-flux operator of the dynamics, this does not invent a
    reflecting wall for barriers that keep decaying past the grid.
    """
    grid = g.grid
    h = grid.spacing
    slope = np.diff(g.values) / h
    flux = np.zeros(grid.n_points + 1)
    flux[1:-1] = grid.face_areas[1:-1] * slope
    flux[-1] = grid.face_areas[-1] * slope[-1]
    return (flux[1:] - flux[:-1]) / grid.volumes


@dataclass(frozen=True)
class BarrierSpec:
    g: Field
    p_weak: float

    def __post_init__(self):
        _require_radial(self.g)
        if not np.all(self.g.values > 0):
            raise ParameterError("a barrier must be strictly positive")
        if not monotone_radial_check(self.g):
            raise ParameterError("a barrier must be radially nonincreasing")
        if not np.isfinite(lp_weak_norm(self.g, self.p_weak)):
            raise ParameterError(f"barrier is not in weak L^{self.p_weak}")

    @property
    def weak_norm(self):
        return lp_weak_norm(self.g, self.p_weak)


@dataclass(frozen=True)
class BarrierResult:
    residual: Field
    max: float
    argmax_r: float
    min: float
    verdict: str

    def to_dict(self):
        return {"name": "barrier_residual", "max": self.max, "argmax_r": self.argmax_r,
                "min": self.min, "verdict": self.verdict}


def barrier_residual(u: Field, g: Field, a: Field | None = None) -> BarrierResult:
    """``a[u] Laplacian g + u g``; PASS iff strictly negative at every node (no tolerance)."""
    _require_radial(u, g)
    if a is None:
        a = solve_poisson(u).a
    else:
        _require_radial(u, a)
    res = a.values * radial_laplacian(g) + u.values * g.values
    i = int(np.argmax(res))
    top = float(res[i])
    return BarrierResult(Field(u.grid, res), top, float(u.grid.nodes[i]), float(res.min()),
                         "PASS" if top < 0 else "FAIL")


@dataclass(frozen=True)
class ComparisonReport:
    clean: bool
    first_violation: float | None
    margins: tuple
    times: tuple
    form: str | None = None

    @property
    def verdict(self):
        return "CLEAN" if self.clean else "VIOLATED"

    def to_dict(self):
        out = {"name": "comparison", "verdict": self.verdict,
               "first_violation_time": self.first_violation,
               "times": list(self.times), "min_margin": list(self.margins)}
        if self.form is not None and self.form != "nondivergence":
            out["note"] = f"comparison principle applied to the {self.form} form (extension)"
        return out


def comparison_monitor(traj, g: Field) -> ComparisonReport:
    """Check ``u <= g`` on every emitted slice; needs ``u_0 < g`` strictly to start."""
    states = _states_of(traj)
    if not states:
        raise ParameterError("empty trajectory")
    _require_radial(states[0].u, g)
    if not np.all(states[0].u.values < g.values):
        bad = float(g.grid.nodes[np.argmax(states[0].u.values >= g.values)])
        raise ParameterError(f"precondition u0 < g fails (first at r={bad:g})")
    margins, times = [], []
    first = None
    for s in states:
        m = float(np.min(g.values - s.u.values))
        margins.append(m)
        times.append(s.t)
        if m < 0 and first is None:
            first = s.t
    form = getattr(getattr(traj, "config", None), "form", None)
    return ComparisonReport(first is None, first, tuple(margins), tuple(times), form)
