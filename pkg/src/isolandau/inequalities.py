"""Numerical probes of the functional inequalities behind the regularity argument.

Every probe returns an ``InequalityReport`` with both sides, their ratio and
a verdict.  Probes over finite test-function families only ever produce
lower estimates of the best constant; reports say so in their ``params``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ResolutionError
from .fields import Field, face_energy, quad
from .potential import a_upper_bound_lp
from .profiles import bump

# relative slack for inequalities that hold exactly for positive-weight sums
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class InequalityReport:
    name: str
    params: dict
    lhs: float
    rhs: float
    ratio: float
    verdict: str
    details: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"name": self.name, "params": self.params, "lhs": self.lhs, "rhs": self.rhs,
               "ratio": self.ratio, "verdict": self.verdict}
        if self.details:
            out["details"] = self.details
        return out


def _ratio(lhs, rhs):
    if lhs == 0:
        return 0.0
    return lhs / rhs if rhs > 0 else math.inf


def _states_of(traj):
    return list(traj.states if hasattr(traj, "states") else traj)


def trapezoid(times, values) -> float:
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


# test functions ---------------------------------------------------------------

@dataclass(frozen=True)
class TestFunctionFamily:
    grid: object
    members: tuple
    labels: tuple

    __test__ = False  # keep pytest from collecting the class

    def __post_init__(self):
        if len(self.members) != len(self.labels):
            raise ParameterError("one label per family member")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(zip(self.labels, self.members))

    @classmethod
    def standard(cls, grid):
        """Gaussians of several widths, shells, bumps, polynomials times a cutoff and a constant."""
        r = grid.radius
        items = {}
        for w in (0.5, 1.0, 2.0, 4.0):
            items[f"gauss_w{w:g}"] = np.exp(-(r / w) ** 2)
        for c in (1.0, 2.0, 3.0):
            items[f"shell_c{c:g}"] = np.exp(-((r - c) ** 2))
        for R in (1.0, 2.0, 4.0):
            items[f"bump_R{R:g}"] = bump(r, R)
        items["poly_1+r2_bump3"] = (1 + r**2) * bump(r, 3.0)
        items["poly_r2_bump4"] = r**2 * bump(r, 4.0)
        if grid.kind == "cartesian":
            x, y, z = grid.coords
            items["gauss_off_x1"] = np.exp(-((x - 1) ** 2 + y**2 + z**2))
            items["gauss_off_yz"] = np.exp(-(x**2 + (y - 1) ** 2 + (z + 1) ** 2) / 2)
            items["poly_xy_bump3"] = x * y * bump(r, 3.0)
            items["poly_(1+x2)(1+z)_bump3"] = (1 + x**2) * (1 + z) * bump(r, 3.0)
        items["constant"] = np.ones(grid.shape)
        labels = tuple(items)
        return cls(grid, tuple(Field(grid, items[k]) for k in labels), labels)


# epsilon-Poincare ---------------------------------------------------------------

def _restrict(grid, values, R):
    if R is None:
        return values
    return np.where(grid.radius <= R, values, 0.0)


def eps_poincare_terms(u: Field, a: Field, phi: Field, R=None):
    """``(int u phi^2, int a |grad phi|^2, int phi^2)``, optionally over the ball ``B_R``."""
    grid = u.grid
    p = _restrict(grid, phi.values, R)
    return (quad(grid, u.values * p * p), face_energy(grid, a.values, p), quad(grid, p * p))


def eps_poincare_constant(u: Field, a: Field, eps: float, fam: TestFunctionFamily, R=None) -> float:
    """Lower estimate of ``C_eps``: max over the family of ``(int u phi^2 - eps int a|grad phi|^2) / int phi^2``.

    With ``R`` the test functions are cut to ``B_R`` (the local reading of the
    inequality); without it they live on the whole grid.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if len(fam) == 0:
        raise ParameterError("empty test-function family")
    best = -math.inf
    for _, phi in fam:
        num, grad, norm = eps_poincare_terms(u, a, phi, R)
        if norm == 0:
            continue
        best = max(best, (num - eps * grad) / norm)
    if best == -math.inf:
        raise ParameterError("every family member vanishes")
    return best


def eps_poincare_report(u, a, eps_grid, fam, R=None) -> InequalityReport:
    """Constants on an eps ladder for both readings (global and ball ``B_R``)."""
    eps_grid = sorted(float(e) for e in eps_grid)
    glob = [eps_poincare_constant(u, a, e, fam) for e in eps_grid]
    local = [eps_poincare_constant(u, a, e, fam, R) for e in eps_grid] if R is not None else None
    monotone = all(x >= y for x, y in zip(glob, glob[1:]))
    if local is not None:
        monotone = monotone and all(x >= y for x, y in zip(local, local[1:]))
    details = {"eps": eps_grid, "C_global": glob}
    if local is not None:
        details["C_ball"] = local
    return InequalityReport("eps_poincare", {"R": R, "family_size": len(fam), "estimate": "lower"},
                            glob[0], glob[-1], _ratio(glob[-1], glob[0]) if glob[0] else 0.0,
                            "PASS" if monotone else "FAIL", details)


# nonlocal Poincare ----------------------------------------------------------------

def gks_terms(u: Field, a: Field, p: float):
    if not p > 0:
        raise ParameterError(f"p must be positive, got {p}")
    if np.any(u.values < 0):
        raise ParameterError("the probe needs a nonnegative slice")
    lhs = quad(u.grid, u.values ** (p + 1))
    rhs = ((p + 1) / p) ** 2 * face_energy(u.grid, a.values, u.values ** (p / 2))
    return lhs, rhs


def gks_ratio(u: Field, a: Field, p: float) -> float:
    """``int u^(p+1) / (((p+1)/p)^2 int a |grad u^(p/2)|^2)``; 0 for the zero field, inf on a zero denominator."""
    lhs, rhs = gks_terms(u, a, p)
    return _ratio(lhs, rhs)


def gks_report(u, a, p) -> InequalityReport:
    lhs, rhs = gks_terms(u, a, p)
    ratio = _ratio(lhs, rhs)
    tol = 1.0 + 5.0 * u.grid.spacing
    return InequalityReport("gks", {"p": p, "tolerance": tol}, lhs, rhs, ratio,
                            "PASS" if ratio <= tol else "FAIL")


# weighted Sobolev in space-time --------------------------------------------------

def check_sobolev_q(q):
    if not 1 < q < 10.0 / 3.0:
        raise ParameterError(f"q must lie in the open interval (1, 10/3), got {q}")


def weighted_sobolev_terms(states, phi, q):
    """Both sides of ``(int int phi^q a)^(2/q) <= C (int int a|grad phi|^2 + sup_t int phi^2)``.

    ``phi`` is a Field (static test function) or a callable ``state -> Field``.
    """
    check_sobolev_q(q)
    states = _states_of(states)
    if len(states) < 2:
        raise ParameterError("need at least two slices")
    times = [s.t for s in states]
    pq, grad, sq = [], [], []
    for s in states:
        f = phi(s) if callable(phi) else phi
        v = np.abs(f.values)
        a = s.a.a.values
        pq.append(quad(s.u.grid, v**q * a))
        grad.append(face_energy(s.u.grid, a, f.values))
        sq.append(quad(s.u.grid, v * v))
    lhs = trapezoid(times, pq) ** (2.0 / q)
    rhs = trapezoid(times, grad) + max(sq)
    return lhs, rhs


def weighted_sobolev_ratio(states, phi, q) -> float:
    """Smallest ``C`` for which the space-time weighted Sobolev bound holds for this probe."""
    return _ratio(*weighted_sobolev_terms(states, phi, q))


def weighted_sobolev_report(states, phi, q, C=None) -> InequalityReport:
    lhs, rhs = weighted_sobolev_terms(states, phi, q)
    ratio = _ratio(lhs, rhs)
    verdict = "RECORDED" if C is None else ("PASS" if ratio <= C else "FAIL")
    return InequalityReport("weighted_sobolev", {"q": q, "C": C}, lhs, rhs, ratio, verdict)


# space-time integrability ----------------------------------------------------------

def _gamma(grid):
    return 1.0 / (1.0 + grid.radius)


def l3_gamma_norm(u: Field) -> float:
    """``(int u^3 / (1 + |x|)^3)^(1/3)``."""
    return quad(u.grid, u.values**3 * _gamma(u.grid) ** 3) ** (1.0 / 3.0)


def l1l3_estimate(traj) -> float:
    """Time integral of the weighted ``L^3`` norm, trapezoid over the emitted slices."""
    states = _states_of(traj)
    return trapezoid([s.t for s in states], [l3_gamma_norm(s.u) for s in states])


def l1l3_report(traj, C=None) -> InequalityReport:
    """Cross-check against ``C (int int |grad sqrt u|^2 / (1+|x|) + int int u)``."""
    states = _states_of(traj)
    if len(states) < 2:
        raise ParameterError("need at least two slices")
    times = [s.t for s in states]
    lhs = l1l3_estimate(states)
    fisher = [face_energy(s.u.grid, _gamma(s.u.grid), np.sqrt(s.u.values)) for s in states]
    mass = [quad(s.u.grid, s.u.values) for s in states]
    rhs = trapezoid(times, fisher) + trapezoid(times, mass)
    ratio = _ratio(lhs, rhs)
    verdict = "RECORDED" if C is None else ("PASS" if ratio <= C else "FAIL")
    return InequalityReport("l1l3", {"C": C}, lhs, rhs, ratio, verdict)


def l53_chain(u: Field):
    """Slice-wise Holder interpolation ``int u^(5/3) <= (int u (1+|x|)^2)^(3/5) (int u^3 (1+|x|)^-3)^(1/3)``."""
    grid = u.grid
    v = u.values
    w = 1.0 + grid.radius
    lhs = quad(grid, v ** (5.0 / 3.0))
    rhs = quad(grid, v * w * w) ** 0.6 * quad(grid, v**3 / w**3) ** (1.0 / 3.0)
    return lhs, rhs


def l53_estimate(traj) -> float:
    """``int_0^T int u^(5/3)`` by trapezoid in time."""
    states = _states_of(traj)
    return trapezoid([s.t for s in states],
                     [quad(s.u.grid, s.u.values ** (5.0 / 3.0)) for s in states])


def l53_report(traj) -> InequalityReport:
    states = _states_of(traj)
    violations = []
    worst = 0.0
    for s in states:
        lhs, rhs = l53_chain(s.u)
        worst = max(worst, _ratio(lhs, rhs))
        if lhs > rhs * (1 + ROUNDOFF):
            violations.append(s.t)
    times = [s.t for s in states]
    rhs_int = trapezoid(times, [l53_chain(s.u)[1] for s in states])
    return InequalityReport("l53", {"slices": len(states)}, l53_estimate(states), rhs_int, worst,
                            "PASS" if not violations else "FAIL",
                            {"violation_times": violations})


# gain of integrability ------------------------------------------------------------

def gain_alpha(n) -> float:
    """Decay exponent ``(n+1)/(3n+2)`` of ``sup a`` obtained from ``L^(5/3+n)`` control."""
    if n < 0:
        raise ParameterError(f"n must be >= 0, got {n}")
    return (n + 1) / (3 * n + 2)


def gain_integrability_bound(traj, n: int, C=None) -> InequalityReport:
    """Compare ``sup_[T/4,T] int u^(5/3+n)`` with ``(1/T+1)^(n+1) int_0^T int u^(5/3)``.

    Also checks slice-wise that ``sup a <= 4 |u|_1^e1 |u|_p^e2`` for ``p = 5/3 + n``.
    """
    if int(n) != n or n < 0:
        raise ParameterError(f"n must be a nonnegative integer, got {n}")
    states = _states_of(traj)
    if len(states) < 2:
        raise ParameterError("need at least two slices")
    T = states[-1].t
    if not T > 0:
        raise ParameterError("trajectory must cover a positive time interval")
    p = 5.0 / 3.0 + n
    window = [s for s in states if s.t >= T / 4]
    sup_int = 0.0
    for s in window:
        vals = s.u.values**p
        integral = quad(s.u.grid, vals)
        if integral > 0 and float(vals.max()) * s.u.grid.spacing**3 > 0.1 * integral:
            raise ResolutionError(f"u^{p:g} is under-resolved at t={s.t:g}; use a finer grid or smaller n")
        sup_int = max(sup_int, integral)
    shape = (1.0 / T + 1.0) ** (n + 1) * l53_estimate(states)
    ratio = _ratio(sup_int, shape)
    chain = []
    for s in states:
        mass = quad(s.u.grid, s.u.values)
        lp = quad(s.u.grid, s.u.values**p) ** (1.0 / p)
        chain.append(float(s.a.a.values.max()) <= a_upper_bound_lp(mass, lp, p) * (1 + ROUNDOFF))
    ok = all(chain) and (C is None or ratio <= C)
    details = {"alpha": [gain_alpha(k) for k in range(n + 1)],
               "sup_a_exponent": gain_alpha(n), "sup_a_chain_violations": chain.count(False)}
    return InequalityReport("gain_integrability", {"n": n, "p": p, "T": T, "C": C},
                            sup_int, shape, ratio, "PASS" if ok else "FAIL", details)
