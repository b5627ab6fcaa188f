"""Free-space Newtonian potential ``a = u * 1/(4 pi |x|)`` and pointwise bounds on it."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ParameterError
from .fields import FOUR_PI, Field, laplacian

# int over [-1/2, 1/2]^3 of 1/|x|
CUBE_INV_R = 3.0 * math.log(2.0 + math.sqrt(3.0)) - 0.5 * math.pi


@dataclass(frozen=True)
class PotentialSolution:
    a: Field
    method: str
    source: Field

    @cached_property
    def residual(self) -> float:
        """Max relative defect of the discrete ``-Laplacian a`` against ``u`` on interior nodes."""
        return _residual(self.source, self.a.values)

    def at(self, point):
        """Evaluate the potential by interpolation.

        ``point`` is a radius on radial grids and a 3-vector on Cartesian ones.
        Radially the profile is continued evenly through ``r = 0``.
        """
        grid = self.a.grid
        vals = self.a.values
        if grid.kind == "radial":
            r = abs(float(point))
            nodes = grid.nodes
            if r <= nodes[0]:
                # a(r) ~ c0 + c2 r^2 near the origin
                r0, r1 = nodes[0], nodes[1]
                c2 = (vals[1] - vals[0]) / (r1**2 - r0**2)
                return float(vals[0] + c2 * (r**2 - r0**2))
            return float(np.interp(r, nodes, vals))
        interp = RegularGridInterpolator((grid.axis,) * 3, vals, bounds_error=True)
        return float(interp(np.asarray(point, dtype=float).reshape(1, 3))[0])


def _check_nonnegative(u: Field):
    if not u.is_finite():
        raise ParameterError("density contains non-finite values")
    if np.any(u.values < 0):
        raise ParameterError("density must be nonnegative")


def _residual(u: Field, a_vals) -> float:
    grid = u.grid
    if grid.kind == "radial":
        # exact shell volumes here: the midpoint volumes carry an O(1/i^2)
        # relative defect near the origin that says nothing about a itself
        shells = FOUR_PI / 3.0 * np.diff(grid.faces**3)
        defect = -laplacian(grid, a_vals) * grid.volumes / shells - u.values
        interior = defect[1:-1]
    else:
        defect = -laplacian(grid, a_vals) - u.values
        interior = defect[1:-1, 1:-1, 1:-1]
    scale = float(np.max(np.abs(u.values)))
    if scale == 0:
        return float(np.max(np.abs(interior)))
    return float(np.max(np.abs(interior)) / scale)


def radial_potential_values(grid, u_vals) -> np.ndarray:
    """``a(r) = (1/r) int_0^r s^2 u ds + int_r^inf s u ds`` by midpoint prefix sums.

    Each node takes half of its own cell in both the inner and outer sum.
    """
    r = grid.nodes
    h = grid.spacing
    w2 = r * r * u_vals * h
    w1 = r * u_vals * h
    inner = np.cumsum(w2) - 0.5 * w2
    outer = np.cumsum(w1[::-1])[::-1] - 0.5 * w1
    return inner / r + outer


def solve_poisson_radial(u: Field) -> PotentialSolution:
    if u.grid.kind != "radial":
        raise ParameterError("solve_poisson_radial needs a RadialGrid field")
    _check_nonnegative(u)
    a = radial_potential_values(u.grid, u.values)
    return PotentialSolution(Field(u.grid, a), "radial_quadrature", u)


_plan_lock = threading.Lock()


@lru_cache(maxsize=8)
def _kernel_spectrum(grid) -> np.ndarray:
    n = grid.n_per_axis
    h = grid.spacing
    idx = np.arange(2 * n)
    d = np.minimum(idx, 2 * n - idx) * h
    dx, dy, dz = np.meshgrid(d, d, d, indexing="ij", sparse=True)
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    with np.errstate(divide="ignore"):
        kernel = 1.0 / (FOUR_PI * dist)
    kernel[0, 0, 0] = CUBE_INV_R / (FOUR_PI * h)
    return np.fft.rfftn(kernel * h**3)


def kernel_spectrum(grid) -> np.ndarray:
    with _plan_lock:
        return _kernel_spectrum(grid)


def cartesian_potential_values(grid, u_vals) -> np.ndarray:
    n = grid.n_per_axis
    spec = kernel_spectrum(grid)
    conv = np.fft.irfftn(np.fft.rfftn(u_vals, s=(2 * n,) * 3, axes=(0, 1, 2)) * spec,
                         s=(2 * n,) * 3, axes=(0, 1, 2))
    return np.ascontiguousarray(conv[:n, :n, :n])


def solve_poisson_3d(u: Field) -> PotentialSolution:
    """Hockney zero-padded convolution: the doubled box realizes free-space conditions."""
    if u.grid.kind != "cartesian":
        raise ParameterError("solve_poisson_3d needs a CartesianGrid3 field")
    if u.grid.n_per_axis < 16:
        raise ParameterError("grid too small for the 3D solver (n < 16)")
    _check_nonnegative(u)
    a = cartesian_potential_values(u.grid, u.values)
    return PotentialSolution(Field(u.grid, a), "fft_free_space", u)


def solve_poisson(u: Field) -> PotentialSolution:
    if u.grid.kind == "radial":
        return solve_poisson_radial(u)
    return solve_poisson_3d(u)


def potential_values(grid, u_vals) -> np.ndarray:
    """Unvalidated fast path used inside the time loop."""
    if grid.kind == "radial":
        return radial_potential_values(grid, u_vals)
    return cartesian_potential_values(grid, u_vals)


def a_lower_bound(x_abs, mass, E):
    """``(1/16 pi) mass^(3/2) / (E^(1/2) + |x| mass^(1/2))``; accepts arrays for ``x_abs``."""
    if not mass > 0 or not E > 0:
        raise ParameterError(f"a_lower_bound needs mass > 0 and E > 0 (got {mass}, {E})")
    return mass**1.5 / (16.0 * math.pi * (math.sqrt(E) + np.asarray(x_abs) * math.sqrt(mass)))


def _upper_exponents(p):
    if not p > 1.5:
        raise ParameterError(f"a_upper_bound_lp needs p > 3/2, got {p}")
    return (2 * p - 3) / (3 * (p - 1)), p / (3 * (p - 1))


def a_upper_bound_lp(mass, lp, p) -> float:
    """``4 |u|_1^((2p-3)/(3(p-1))) |u|_p^(p/(3(p-1)))``."""
    e1, e2 = _upper_exponents(p)
    if mass < 0 or lp < 0:
        raise ParameterError("norms must be nonnegative")
    return 4.0 * mass**e1 * lp**e2


def a_upper_bound_rmin(mass, lp, p) -> float:
    """Minimizer of ``F(r) = c1/r + c2 r^(2-3/p)`` with ``c1 = |u|_1``, ``c2 = 4 pi |u|_p``."""
    _upper_exponents(p)
    c1, c2 = mass, FOUR_PI * lp
    if c2 == 0:
        return math.inf
    return (c1 / ((2 - 3 / p) * c2)) ** (p / (3 * (p - 1)))
