"""Per-slice scalars: entropy, its production, moments, kappa and the a-priori bounds.

Constants that are only known to exist (the ``C`` of the upper bound on ``a``,
the entropy lower bound and the moment growth bound) go through a calibration
protocol: measure the smallest admissible constant over a reference suite,
multiply by a fixed safety factor, freeze the result, then assert the bound on
new runs.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.ndimage import minimum_filter1d

from .errors import ParameterError
from .fields import FOUR_PI, Field, gradient, moment, quad, weighted_fisher
from .potential import a_lower_bound


def worker_count() -> int:
    """Worker cap from ``LNDAU_THREADS``; affects speed only."""
    try:
        n = int(os.environ.get("LNDAU_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def entropy(u: Field) -> float:
    v = u.values
    if np.any(v < 0):
        raise ParameterError("entropy needs a nonnegative field")
    pos = v > 0
    ulogu = np.zeros_like(v)
    ulogu[pos] = v[pos] * np.log(v[pos])
    return quad(u.grid, ulogu)


def log_gradient(u: Field) -> list[np.ndarray]:
    """``grad log u`` at the nodes; zero at vacuum nodes.

    Where the whole difference stencil sits inside the support, ``log u`` is
    differenced directly (exact for Gaussians and exponentials); next to
    vacuum the quotient ``grad u / u`` is used instead.
    """
    v = u.values
    pos = v > 0
    safe = np.where(pos, v, 1.0)
    direct = gradient(u.grid, np.log(safe))
    quotient = gradient(u.grid, v)
    out = []
    for ax, (dl, dq) in enumerate(zip(direct, quotient)):
        inside = minimum_filter1d(pos.astype(np.uint8), size=5, axis=ax, mode="nearest") > 0
        out.append(np.where(inside, dl, np.where(pos, dq / safe, 0.0)))
    return out


# entropy production ---------------------------------------------------------

def _radial_pair_block(r, w, g, rows):
    ri = r[rows, None]
    big = np.maximum(ri, r[None, :])
    small = np.minimum(ri, r[None, :])
    gi = g[rows, None]
    kern = (gi * gi + g[None, :] ** 2) / big - (2.0 / 3.0) * gi * g[None, :] * small / big**2
    return float(np.sum(w[rows, None] * w[None, :] * kern))


def _blocked_sum(fn, n, block):
    starts = range(0, n, block)
    slices = [slice(s, min(s + block, n)) for s in starts]
    workers = worker_count()
    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, slices))
    else:
        parts = [fn(s) for s in slices]
    # block-ordered reduction: identical for every worker count
    return float(np.sum(np.array(parts)))


def _radial_production_pair(u: Field, block=256) -> float:
    grid = u.grid
    r = grid.nodes
    w = grid.volumes * u.values
    (g,) = log_gradient(u)
    total = _blocked_sum(lambda rows: _radial_pair_block(r, w, g, rows), r.size, block)
    return 0.5 * total / FOUR_PI


def _radial_production_prefix(u: Field) -> float:
    """The radial pair sum regrouped with prefix sums, O(n)."""
    grid = u.grid
    r = grid.nodes
    w = grid.volumes * u.values
    (g,) = log_gradient(u)
    below = np.cumsum(w) - w
    above = np.cumsum((w / r)[::-1])[::-1] - w / r
    s = (below + w) / r + above
    c = w * g
    cr_below = np.cumsum(c * r) - c * r
    q = np.sum(c * c / r) + 2.0 * np.sum(c / r**2 * cr_below)
    return (np.sum(w * g * g * s) - q / 3.0) / FOUR_PI


def _coarsen(grid, max_points):
    n = grid.n_per_axis
    for s in range(1, n + 1):
        if n % s == 0 and (n // s) ** 3 <= max_points:
            return s
    return n


def _cartesian_production_pair(u: Field, max_points=4096, block=512) -> float:
    grid = u.grid
    s = _coarsen(grid, max_points)
    m = grid.n_per_axis // s
    vol = grid.spacing**3

    def blocks(arr):
        return arr.reshape(m, s, m, s, m, s).sum(axis=(1, 3, 5))

    w = blocks(u.values) * vol
    gs = log_gradient(u)
    pos = w > 0
    safe = np.where(pos, w, 1.0)
    gc = [np.where(pos, blocks(u.values * gk) * vol / safe, 0.0).ravel() for gk in gs]
    centers = [blocks(c) / s**3 for c in grid.coords]
    x = np.stack([c.ravel() for c in centers], axis=1)
    gvec = np.stack(gc, axis=1)
    w = w.ravel()
    keep = w > 0
    x, gvec, w = x[keep], gvec[keep], w[keep]

    def part(rows):
        d = np.sqrt(np.sum((x[rows, None, :] - x[None, :, :]) ** 2, axis=2))
        dg = np.sum((gvec[rows, None, :] - gvec[None, :, :]) ** 2, axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = np.where(d > 0, dg / np.where(d > 0, d, 1.0), 0.0)
        return float(np.sum(w[rows, None] * w[None, :] * kern))

    total = _blocked_sum(part, w.size, block)
    return 0.5 * total / FOUR_PI


def entropy_production(u: Field, a: Field | None = None, method: str = "auto") -> float:
    """``-dH/dt = (1/8 pi) iint u(x)u(y)/|x-y| |grad log u(x) - grad log u(y)|^2``.

    Radial data use the exact spherical means ``<1/|x-y|> = 1/max(r,s)`` and
    ``<cos/|x-y|> = min(r,s)/(3 max(r,s)^2)``; ``method`` picks the O(n^2) pair
    sum or its O(n) prefix-sum regrouping (``auto`` switches above 4096 nodes).
    Cartesian data use the pair sum on block-averaged cells.  ``a`` is not
    needed by the pair form and is accepted for interface symmetry.
    """
    if np.any(u.values < 0):
        raise ParameterError("entropy production needs a nonnegative field")
    if u.grid.kind == "radial":
        if method == "auto":
            method = "pair" if u.grid.n_points <= 4096 else "prefix"
        if method == "pair":
            return _radial_production_pair(u)
        if method == "prefix":
            return float(_radial_production_prefix(u))
        raise ParameterError(f"unknown production method {method!r}")
    return _cartesian_production_pair(u)


def entropy_production_local(u: Field, a: Field) -> float:
    """Cross-check: ``int a |grad u|^2 / u - int u^2`` (integration by parts)."""
    v = u.values
    pos = v > 0
    comps = gradient(u.grid, v)
    g2 = sum(c * c for c in comps)
    integrand = np.where(pos, a.values * g2 / np.where(pos, v, 1.0), 0.0)
    return quad(u.grid, integrand) - quad(u.grid, v * v)


# kappa and the lower bound on a ---------------------------------------------

def kappa(mass, E) -> float:
    if not mass > 0 or not E > 0:
        raise ParameterError(f"kappa needs mass > 0 and E > 0 (got {mass}, {E})")
    return mass**1.5 / (8.0 * math.pi * (math.sqrt(E) + math.sqrt(mass)))


@dataclass(frozen=True)
class MassRCheck:
    radius: float
    inner_mass: float
    half_mass: float

    @property
    def holds(self) -> bool:
        return self.inner_mass >= self.half_mass


def mass_in_ball_check(u: Field) -> MassRCheck:
    """``int_{B_R} u >= mass/2`` with ``R = 2 sqrt(E / mass)``."""
    mass = moment(u, 0)
    E = moment(u, 2)
    radius = 2.0 * math.sqrt(E / mass)
    inner = quad(u.grid, np.where(u.grid.radius < radius, u.values, 0.0))
    return MassRCheck(radius, inner, 0.5 * mass)


def is_even(u: Field, tol=1e-12) -> bool:
    if u.grid.kind == "radial":
        return True
    v = u.values
    scale = tol * max(float(np.max(np.abs(v))), np.finfo(float).tiny)
    return all(float(np.max(np.abs(v - np.flip(v, axis=ax)))) <= scale for ax in range(3))


def entropy_inequality_residual(s0, s1) -> float:
    """``dH/dt + kappa * fisher`` over two consecutive slices (trapezoid in the slice pair).

    The cancellation behind this inequality needs even data, so non-even
    Cartesian slices are refused.
    """
    for s in (s0, s1):
        if not is_even(s.u):
            raise ParameterError("entropy inequality needs even (or radial) data")
    dt = s1.t - s0.t
    if not dt > 0:
        raise ParameterError("slices must be in increasing time order")
    dH = (entropy(s1.u) - entropy(s0.u)) / dt
    terms = []
    for s in (s0, s1):
        mass, E = moment(s.u, 0), moment(s.u, 2)
        if mass == 0:
            terms.append(0.0)
            continue
        terms.append(kappa(mass, E) * weighted_fisher(s.u))
    return dH + 0.5 * (terms[0] + terms[1])


# upper bound on a, entropy lower bound, moment growth ------------------------

def theta(eps) -> float:
    if not 0 < eps <= 1.5:
        raise ParameterError(f"theta needs 0 < eps <= 3/2, got {eps}")
    return 1.5 * (1 + 2 * eps) / (3 + 2 * eps)


def exponent_from_eps(eps) -> float:
    """``p = 1/theta``; runs over [1, 2) as eps runs over (0, 3/2]."""
    return 1.0 / theta(eps)


def _check_p_entropy(p):
    if not 1 <= p < 2:
        raise ParameterError(f"the entropy upper bound on a needs 1 <= p < 2, got {p}")


def a_upper_bound_entropy(p, x_abs, kappa_t, dH_dt, C):
    """Bound on ``a^p``: ``C/(2-p) (1+|x|) (1 - dH/dt / kappa)``."""
    _check_p_entropy(p)
    if dH_dt > 0:
        raise ParameterError(f"dH/dt must be <= 0, got {dH_dt}")
    if not kappa_t > 0:
        raise ParameterError("kappa must be positive")
    return C / (2 - p) * (1 + np.asarray(x_abs)) * (1 - dH_dt / kappa_t)


def a_upper_needed_constant(p, a_vals, radius, kappa_t, dH_dt) -> float:
    """Smallest ``C`` making the entropy upper bound on ``a`` hold on one slice."""
    _check_p_entropy(p)
    dH_dt = min(dH_dt, 0.0)
    shape = (1 + radius) * (1 - dH_dt / kappa_t) / (2 - p)
    return float(np.max(np.maximum(a_vals, 0.0) ** p / shape))


def _check_eps_hlb(eps):
    if not 0 < eps < 0.4:
        raise ParameterError(f"entropy lower bound needs 0 < eps < 2/5, got {eps}")


def entropy_lower_bound(E, eps, C) -> float:
    """``C_eps (1 + E)^((1 - eps)/2)``, an upper bound on ``-H``."""
    _check_eps_hlb(eps)
    return C * (1 + E) ** ((1 - eps) / 2)


def exact(x) -> Fraction:
    """Rational value of ``x``; floats are read through their shortest decimal form (1.9 -> 19/10)."""
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    return Fraction(repr(float(x)))


def moment_growth_exponent(p, eps):
    """``(2p/(2p-4+eps), (2p-3)/(2p-4+eps))`` for ``9/5 < p < 2``, ``4-2p < eps < 2/5``.

    Evaluated in exact rationals, so (1.9, 0.3) gives exactly (38, 8).
    """
    p, eps = exact(p), exact(eps)
    problems = []
    if not Fraction(9, 5) < p < 2:
        problems.append(f"p={float(p)} violates 9/5 < p < 2")
    if not eps < Fraction(2, 5):
        problems.append(f"eps={float(eps)} violates eps < 2/5")
    if not eps > 4 - 2 * p:
        problems.append(f"eps={float(eps)} violates eps > 4 - 2p = {float(4 - 2 * p)}")
    if problems:
        raise ParameterError("; ".join(problems))
    denom = 2 * p - 4 + eps
    return float(2 * p / denom), float((2 * p - 3) / denom)


def moment_upper_bound(t, p, eps, C) -> float:
    exponent, _ = moment_growth_exponent(p, eps)
    return C * (1 + t**exponent)


# calibration ----------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    """Frozen constants for the bounds whose constants the theory leaves open."""

    a_ub_p: float = 1.5
    a_ub_C: float = 1.0
    h_lb_eps: float = 0.3
    h_lb_C: float = 10.0
    e_ub_p: float = 1.9
    e_ub_eps: float = 0.3
    e_ub_C: float = 10.0
    safety: float = 2.0
    source: str = "unset"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def needed_constants(states, cal: Calibration) -> dict:
    """Smallest admissible constants over the given slices (no safety factor)."""
    need = {"a_ub_C": 0.0, "h_lb_C": 0.0, "e_ub_C": 0.0}
    exponent, _ = moment_growth_exponent(cal.e_ub_p, cal.e_ub_eps)
    for s in states:
        mass, E = moment(s.u, 0), moment(s.u, 2)
        if mass <= 0:
            continue
        k = kappa(mass, E)
        D = entropy_production(s.u, s.a.a)
        need["a_ub_C"] = max(need["a_ub_C"], a_upper_needed_constant(
            cal.a_ub_p, s.a.a.values, s.u.grid.radius, k, -D))
        negH = -entropy(s.u)
        need["h_lb_C"] = max(need["h_lb_C"], negH / (1 + E) ** ((1 - cal.h_lb_eps) / 2))
        need["e_ub_C"] = max(need["e_ub_C"], E / (1 + s.t**exponent))
    return need


def calibrate(trajectories, base: Calibration | None = None, source="reference suite") -> Calibration:
    base = base or Calibration()
    need = {"a_ub_C": 0.0, "h_lb_C": 0.0, "e_ub_C": 0.0}
    for traj in trajectories:
        states = traj.states if hasattr(traj, "states") else traj
        for key, val in needed_constants(states, base).items():
            need[key] = max(need[key], val)
    return replace(base, source=source, **{k: base.safety * v for k, v in need.items()})


# Frozen from ``reference_suite()`` (see calibration.py); regenerate with
# ``python -m isolandau.calibration``.
DEFAULT_CALIBRATION = Calibration(
    a_ub_C=0.002957074716858009,
    h_lb_C=6.5209433259103475,
    e_ub_C=6.006347595235785,
    source="reference suite n=512 t_end=0.05",
)


# records --------------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    first_moment: tuple
    E: float
    H: float
    D: float
    kappa: float
    weighted_fisher: float
    a_min_margin: float
    a_ub_margin: float
    H_lb_margin: float
    E_ub_margin: float
    clipped_mass: float

    CSV_HEADER = ("t", "mass", "mx", "my", "mz", "E", "H", "D", "kappa", "fisher",
                  "a_lb_margin", "clipped_mass")

    def csv_values(self):
        mx, my, mz = self.first_moment
        return (self.t, self.mass, mx, my, mz, self.E, self.H, self.D, self.kappa,
                self.weighted_fisher, self.a_min_margin, self.clipped_mass)


def record(state, cal: Calibration | None = None) -> DiagnosticsRecord:
    cal = cal or DEFAULT_CALIBRATION
    u = state.u
    a = state.a.a.values
    radius = u.grid.radius
    mass = moment(u, 0)
    first = tuple(float(x) for x in moment(u, 1))
    E = moment(u, 2)
    H = entropy(u)
    D = entropy_production(u, state.a.a)
    fisher = weighted_fisher(u)
    if mass > 0 and E > 0:
        k = kappa(mass, E)
        a_min_margin = float(np.min(a - a_lower_bound(radius, mass, E)))
        bound = a_upper_bound_entropy(cal.a_ub_p, radius, k, -max(D, 0.0), cal.a_ub_C)
        a_ub_margin = float(np.min(bound - np.maximum(a, 0.0) ** cal.a_ub_p))
        H_lb_margin = entropy_lower_bound(E, cal.h_lb_eps, cal.h_lb_C) + H
        E_ub_margin = moment_upper_bound(state.t, cal.e_ub_p, cal.e_ub_eps, cal.e_ub_C) - E
    else:
        k = a_min_margin = a_ub_margin = H_lb_margin = E_ub_margin = math.nan
    return DiagnosticsRecord(state.t, mass, first, E, H, D, k, fisher, a_min_margin,
                             a_ub_margin, H_lb_margin, E_ub_margin, state.clipped_mass)


# conditional decay monitor ----------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    s: float
    C: float
    consistent: bool


@dataclass(frozen=True)
class RateReport:
    R: float
    u_fit: RateFit
    a_fit: RateFit
    times: tuple = field(default=())


def _fit_rate(times, sups, s):
    """Smallest ``C`` with ``sup_{[t,T]} q <= C (1/t + 1)^s`` over slices with t > 0."""
    tail_max = np.maximum.accumulate(np.asarray(sups)[::-1])[::-1]
    ok = times > 0
    if not np.any(ok):
        return RateFit(s, math.inf, False)
    C = float(np.max(tail_max[ok] / (1.0 / times[ok] + 1.0) ** s))
    return RateFit(s, C, bool(math.isfinite(C)))


def conditional_rate_monitor(states, s1, s2, R) -> RateReport:
    if not s1 > 1:
        raise ParameterError(f"s1 must exceed 1, got {s1}")
    if not s2 > 1.0 / 3.0:
        raise ParameterError(f"s2 must exceed 1/3, got {s2}")
    if len(states) < 4:
        raise ParameterError(f"need at least 4 slices, got {len(states)}")
    times = np.array([s.t for s in states])
    u_sup = [float(np.max(np.where(s.u.grid.radius <= R, s.u.values, 0.0))) for s in states]
    a_sup = [float(np.max(s.a.a.values)) for s in states]
    return RateReport(R, _fit_rate(times, u_sup, s1), _fit_rate(times, a_sup, s2), tuple(times))
