"""Level-set energies of the De Giorgi iteration on a computed trajectory.

Times, radii and levels follow the geometric ladders

    T_n = (2 - 2^-n) T / 4,   R_n = (1 + 2^-n) R / 2,   k_n = M (1 - 2^-n),

and the cutoff ``eta_n`` is a smooth ramp from 1 on ``B_{n+1}`` to 0 outside
``B_n``.  Truncations ``u_n = (u - k_n)_+`` are supported on ``{u > k_n}``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .diagnostics import exact
from .errors import ParameterError, ResolutionError
from .fields import Field, face_energy, laplacian, quad
from .inequalities import _states_of
from .profiles import cutoff, smooth_step

MIN_CELLS_ACROSS = 4
DEFAULT_P = 5.0 / 3.0


def cutoff_energy_constant(p) -> float:
    """Constant multiplying ``int u_k^p a |grad eta|^2`` once the cross terms are absorbed.

    Cauchy-Schwarz with weights ``2(p-1)/p`` and ``(p-1)/p`` leaves a
    dissipation of ``(p-1)/p`` and collects
    ``4/p + 2(p-2)^2/(p(p-1)) + 4p/(p-1) + 4``.
    """
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    return 4 / p + 2 * (p - 2) ** 2 / (p * (p - 1)) + 4 * p / (p - 1) + 4


@lru_cache(maxsize=1)
def ramp_derivative_maxima():
    """``(max |psi'|, max |psi''|)`` of the smooth ramp, sampled densely on [0, 1]."""
    s = np.linspace(0.0, 1.0, 200_001)
    d1 = np.gradient(smooth_step(s), s, edge_order=2)
    d2 = np.gradient(d1, s, edge_order=2)
    return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))


@dataclass(frozen=True)
class DeGiorgiLadder:
    T: float
    R: float
    M: float
    n_max: int = 8

    def __post_init__(self):
        if not (self.T > 0 and self.R > 0 and self.M > 0):
            raise ParameterError("ladder needs T, R, M > 0")
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise ParameterError(f"n_max must be a nonnegative integer, got {self.n_max}")

    def time(self, n):
        return 0.25 * (2.0 - 2.0**-n) * self.T

    def radius(self, n):
        return 0.5 * (1.0 + 2.0**-n) * self.R

    def level(self, n):
        return self.M * (1.0 - 2.0**-n)

    @property
    def times(self):
        return np.array([self.time(n) for n in range(self.n_max + 2)])

    @property
    def radii(self):
        return np.array([self.radius(n) for n in range(self.n_max + 2)])

    @property
    def levels(self):
        return np.array([self.level(n) for n in range(self.n_max + 2)])

    def annulus_width(self, n):
        return self.radius(n) - self.radius(n + 1)

    def check_resolution(self, grid, n):
        cells = self.annulus_width(n) / grid.spacing
        if cells < MIN_CELLS_ACROSS:
            raise ResolutionError(f"cutoff {n} spans {cells:.2f} cells (need {MIN_CELLS_ACROSS}); "
                                  f"refine to h <= {self.annulus_width(n) / MIN_CELLS_ACROSS:.3g}")
        if self.radius(n) > grid.extent:
            raise ResolutionError(f"ball B_{n} of radius {self.radius(n):g} leaves the grid")

    def eta(self, grid, n) -> Field:
        self.check_resolution(grid, n)
        return Field(grid, cutoff(grid.radius, self.radius(n + 1), self.radius(n)))

    def cutoff_constants(self, n):
        """Measured ``C`` in ``|grad eta_n| <= C 2^(n+1)`` and ``|D^2 eta_n| <= C 2^(2n+2)``.

        The Hessian of a radial profile has eigenvalues ``eta''`` and ``eta'/r``;
        both are bounded through the ramp's own derivative maxima.
        """
        d1, d2 = ramp_derivative_maxima()
        w = self.annulus_width(n)
        grad = d1 / w
        hess = max(d2 / w**2, d1 / (w * self.radius(n + 1)))
        return grad / 2.0 ** (n + 1), hess / 2.0 ** (2 * n + 2)


def truncation(u: Field, k: float) -> Field:
    """``(u - k)_+``; the support is ``{u > k}``."""
    if not k >= 0:
        raise ParameterError(f"truncation level must be >= 0, got {k}")
    return Field(u.grid, np.maximum(u.values - k, 0.0))


def support_consistent(u: Field, ladder: DeGiorgiLadder, n: int) -> bool:
    """``{u_n > 0}`` coincides with ``{u_{n-1} > M / 2^n}`` node by node."""
    if n < 1:
        raise ParameterError("support comparison needs n >= 1")
    un = truncation(u, ladder.level(n)).values
    prev = truncation(u, ladder.level(n - 1)).values
    return bool(np.array_equal(un > 0, prev > ladder.M / 2.0**n))


def _window_integral(times, values, t0):
    """``int_{t0}^{T} f dt`` by trapezoid, interpolating the integrand at ``t0``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if t0 >= times[-1]:
        return 0.0
    f0 = float(np.interp(t0, times, values))
    keep = times > t0
    t = np.concatenate(([t0], times[keep]))
    f = np.concatenate(([f0], values[keep]))
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))


@dataclass(frozen=True)
class LevelEnergy:
    n: int
    total: float
    time_term: float
    cutoff_term: float
    level_term: float


def level_energy(traj, ladder: DeGiorgiLadder, n: int, p: float = DEFAULT_P,
                 C_eps_p: float = 1.0, C_p: float | None = None) -> LevelEnergy:
    """``U_n`` as the sum of its three space-time terms.

    time_term   ``(2^(n+2)/T + C(eps,p)) int_{T_n}^T int eta_n^2 u_n^p``
    cutoff_term ``(C(p)+1) 4^(n+1) int_{T_n}^T int_{B_n} a eta_n^2 u_n^p``
    level_term  ``2 p k_n^2 int_{T_n}^T int eta_n^2 u_n^(p-1)``
    """
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    if int(n) != n or n < 0:
        raise ParameterError(f"n must be a nonnegative integer, got {n}")
    states = _states_of(traj)
    if not states or states[0].t > ladder.time(0) or states[-1].t < ladder.T * (1 - 1e-12):
        raise ParameterError("trajectory must span [T/4, T] of the ladder")
    C_p = cutoff_energy_constant(p) if C_p is None else C_p
    grid = states[0].u.grid
    eta2 = ladder.eta(grid, n).values ** 2
    k = ladder.level(n)
    ball = grid.radius <= ladder.radius(n)
    times, up, aup, upm1 = [], [], [], []
    for s in states:
        un = np.maximum(s.u.values - k, 0.0)
        pos = un > 0
        unp = np.where(pos, un, 0.0) ** p
        times.append(s.t)
        up.append(quad(grid, eta2 * unp))
        aup.append(quad(grid, np.where(ball, s.a.a.values * eta2 * unp, 0.0)))
        upm1.append(quad(grid, eta2 * np.where(pos, un ** (p - 1), 0.0)))
    t0 = ladder.time(n)
    time_term = (2.0 ** (n + 2) / ladder.T + C_eps_p) * _window_integral(times, up, t0)
    cutoff_term = (C_p + 1) * 4.0 ** (n + 1) * _window_integral(times, aup, t0)
    level_term = 2 * p * k * k * _window_integral(times, upm1, t0)
    return LevelEnergy(n, time_term + cutoff_term + level_term, time_term, cutoff_term, level_term)


# recurrence ------------------------------------------------------------------------

def _check_q(q):
    if not q > 2:
        raise ParameterError(f"q must exceed 2 for the recurrence to be superlinear, got {q}")


def recurrence_constant(U, q) -> float:
    """Largest ``U_n / (4^(n-1) U_(n-1)^(q/2))`` over consecutive pairs with ``U_(n-1) > 0``."""
    _check_q(q)
    best = 0.0
    for n in range(1, len(U)):
        if U[n - 1] > 0:
            best = max(best, U[n] / (4.0 ** (n - 1) * U[n - 1] ** (q / 2)))
    return best


def seed_threshold(q, C) -> float:
    """Largest ``U_0`` with ``U_0^(q/2-1) <= 1 / (C 8^(1/(q/2-1)))``."""
    _check_q(q)
    e = q / 2 - 1
    if C <= 0:
        return math.inf
    return (1.0 / (C * 8.0 ** (1.0 / e))) ** (1.0 / e)


@dataclass(frozen=True)
class RecurrenceVerdict:
    q: float
    C: float
    holds: tuple
    seed: float
    threshold: float
    verdict: str


def recurrence_check(U, q, C_meas) -> RecurrenceVerdict:
    """Per-n test of ``U_n <= 4^(n-1) C U_(n-1)^(q/2)`` plus the seed condition.

    The verdict is ``decay`` iff the seed ``U_0`` lies under the induction
    threshold, which forces ``U_n -> 0``.
    """
    _check_q(q)
    if any(x < 0 for x in U):
        raise ParameterError("level energies must be nonnegative")
    holds = tuple(bool(U[n] <= 4.0 ** (n - 1) * C_meas * U[n - 1] ** (q / 2) * (1 + 1e-12))
                  for n in range(1, len(U)))
    thr = seed_threshold(q, C_meas)
    verdict = "decay" if U[0] <= thr else "no-decay"
    return RecurrenceVerdict(q, C_meas, holds, U[0], thr, verdict)


# level threshold ---------------------------------------------------------------------

def m_exponent(n, q) -> float:
    """``alpha(n) = ((7n+5)/(3n+2) + n)(q/2-1) / ((5/3+n)(q/2-1) - 1)``, evaluated in exact rationals."""
    n, qf = exact(n), exact(q)
    e = qf / 2 - 1
    den = (Fraction(5, 3) + n) * e - 1
    if den <= 0:
        if e <= 0:
            raise ParameterError(f"q={q} gives no admissible n (need q > 2)")
        n_min = math.floor(1 / e - Fraction(5, 3)) + 1
        raise ParameterError(f"denominator (5/3+n)(q/2-1)-1 = {float(den):.6g} <= 0 for n={n}, q={q}; "
                             f"smallest admissible n is {max(n_min, 0)}")
    return float(((7 * n + 5) / (3 * n + 2) + n) * e / den)


@dataclass(frozen=True)
class MThreshold:
    n: int
    q: float
    alpha: float
    c: float
    threshold: float
    target: dict = field(default_factory=dict)


def m_threshold(T, n, q, c=1.0) -> MThreshold:
    """Level ``M > c (1/T + 1)^alpha(n)`` that makes the iteration seed small enough."""
    if not T > 0:
        raise ParameterError(f"T must be positive, got {T}")
    alpha = m_exponent(n, q)
    target = {"statement": "sup over (T/4, T) x B_{R/2} of u <= c0 (1/T + 1)^s",
              "time_window": [T / 4, T], "s": alpha}
    return MThreshold(n, q, alpha, c, c * (1.0 / T + 1.0) ** alpha, target)


# energy inequality ----------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyResidual:
    lhs: float
    rhs: float
    residual: float
    identity_defect: float
    terms: dict


def _energy_terms(s, eta, k, p):
    grid = s.u.grid
    u = s.u.values
    a = s.a.a.values
    e = eta.values
    uk = np.maximum(u - k, 0.0)
    pos = uk > 0
    ukp = uk**p
    ukh = uk ** (p / 2)
    w = e * ukh
    dissip = face_energy(grid, a, w)
    return {
        "mass": quad(grid, e * e * ukp),
        "dissipation": dissip,
        "cross": face_energy(grid, a * ukh, w, e),
        "cutoff": face_energy(grid, a * ukp, e),
        "drift": face_energy(grid, ukp, a, e * e),
        "reaction": quad(grid, u * e * e * ukp),
        "level": quad(grid, u * e * e * np.where(pos, uk ** (p - 1), 0.0)),
        "curvature": quad(grid, a * ukp * laplacian(grid, e * e)),
    }


def energy_identity_residual(s0, s1, eta: Field, k: float, p: float = DEFAULT_P,
                             C_p: float | None = None) -> EnergyResidual:
    """Both sides of the localized energy inequality between consecutive slices.

    LHS ``d/dt int eta^2 u_k^p + ((p-1)/p) int a |grad(eta u_k^(p/2))|^2``
    RHS ``(p-1) int eta^2 u u_k^p + p k int eta^2 u u_k^(p-1)
    + C(p) int u_k^p a |grad eta|^2 - int a u_k^p Laplacian(eta^2)``

    The time derivative is a difference quotient and the space integrals are
    averaged over the two slices.  ``identity_defect`` measures the exact
    identity the inequality is derived from, relative to its dissipation.
    """
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    if not k >= 0:
        raise ParameterError(f"k must be >= 0, got {k}")
    dt = s1.t - s0.t
    if not dt > 0:
        raise ParameterError("slices must be in increasing time order")
    grid = s0.u.grid
    if eta.grid != grid or s1.u.grid != grid:
        raise ParameterError("slices and cutoff must share a grid")
    C_p = cutoff_energy_constant(p) if C_p is None else C_p
    t0, t1 = _energy_terms(s0, eta, k, p), _energy_terms(s1, eta, k, p)
    avg = {key: 0.5 * (t0[key] + t1[key]) for key in t0}
    ddt = (t1["mass"] - t0["mass"]) / dt
    lhs = ddt + (p - 1) / p * avg["dissipation"]
    rhs = ((p - 1) * avg["reaction"] + p * k * avg["level"] + C_p * avg["cutoff"]
           - avg["curvature"])
    first = 4 * (p - 2) / p * avg["cross"] + 4 / p * avg["cutoff"]
    second = avg["drift"] + (p - 1) * avg["reaction"] + p * k * avg["level"]
    exact_lhs = ddt + 4 * (p - 1) / p * avg["dissipation"]
    scale = max(abs(exact_lhs), 4 * (p - 1) / p * avg["dissipation"], np.finfo(float).tiny)
    defect = (exact_lhs - first - second) / scale
    terms = dict(avg, ddt=ddt)
    return EnergyResidual(lhs, rhs, lhs - rhs, defect, terms)


# report ------------------------------------------------------------------------------

@dataclass(frozen=True)
class DeGiorgiReport:
    ladder: DeGiorgiLadder
    p: float
    q: float
    energies: tuple
    recurrence: RecurrenceVerdict
    cutoff_constants: tuple

    @property
    def U(self):
        return [e.total for e in self.energies]

    def to_dict(self):
        rec = self.recurrence
        return {
            "name": "degiorgi",
            "params": {"T": self.ladder.T, "R": self.ladder.R, "M": self.ladder.M,
                       "n_max": self.ladder.n_max, "p": self.p, "q": self.q},
            "ladder": {"T_n": self.ladder.times.tolist(), "R_n": self.ladder.radii.tolist(),
                       "k_n": self.ladder.levels.tolist()},
            "U": self.U,
            "terms": [{"n": e.n, "time": e.time_term, "cutoff": e.cutoff_term, "level": e.level_term}
                      for e in self.energies],
            "cutoff_constants": [list(c) for c in self.cutoff_constants],
            "recurrence": {"C": rec.C, "holds": list(rec.holds), "seed": rec.seed,
                           "threshold": rec.threshold},
            "verdict": rec.verdict,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("n", "U_n"))
        for e in self.energies:
            writer.writerow((e.n, f"{e.total:.17g}"))
        return buf.getvalue()


def degiorgi_report(traj, ladder: DeGiorgiLadder, q: float = 3.0, p: float = DEFAULT_P,
                    C_meas: float | None = None, C_eps_p: float = 1.0) -> DeGiorgiReport:
    """Level energies for ``n = 0..n_max`` and the recurrence verdict.

    Without ``C_meas`` the recurrence constant is measured on the same ladder.
    """
    _check_q(q)
    energies = tuple(level_energy(traj, ladder, n, p, C_eps_p) for n in range(ladder.n_max + 1))
    U = [e.total for e in energies]
    C = recurrence_constant(U, q) if C_meas is None else C_meas
    consts = tuple(ladder.cutoff_constants(n) for n in range(ladder.n_max + 1))
    return DeGiorgiReport(ladder, p, q, energies, recurrence_check(U, q, C), consts)
