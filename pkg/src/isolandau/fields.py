"""Grids, immutable fields and the quadrature primitives every other module uses.

Two discretizations of R^3 are supported:

* ``RadialGrid`` -- cell-centered nodes ``r_i = (i + 1/2) h`` on ``[0, r_max]``
  for radially symmetric data, with cell volume ``4 pi r_i^2 h``.
* ``CartesianGrid3`` -- a cell-centered box ``[-L, L]^3`` with ``n`` cells per
  axis, centered at the origin so that even data stay even.

All reductions go through ``numpy.sum`` on contiguous arrays, whose pairwise
summation order depends only on the array shape.  Results are therefore
bit-reproducible for a fixed grid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParameterError

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n_points: int

    kind = "radial"
    dim = 3

    def __post_init__(self):
        if not self.r_max > 0:
            raise ParameterError(f"r_max must be positive, got {self.r_max}")
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise ParameterError(f"n_points must be an integer >= 8, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return self.r_max / self.n_points

    h = spacing

    @property
    def shape(self):
        return (self.n_points,)

    @property
    def extent(self) -> float:
        return self.r_max

    @cached_property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_points) + 0.5) * self.spacing

    @property
    def radius(self) -> np.ndarray:
        return self.nodes

    @cached_property
    def faces(self) -> np.ndarray:
        return np.arange(self.n_points + 1) * self.spacing

    @cached_property
    def volumes(self) -> np.ndarray:
        return FOUR_PI * self.nodes**2 * self.spacing

    @cached_property
    def face_areas(self) -> np.ndarray:
        return FOUR_PI * self.faces**2

    def describe(self) -> dict:
        return {"kind": self.kind, "r_max": self.r_max, "n_points": self.n_points,
                "spacing": self.spacing}


@dataclass(frozen=True)
class CartesianGrid3:
    half_width: float
    n_per_axis: int

    kind = "cartesian"
    dim = 3

    def __post_init__(self):
        if not self.half_width > 0:
            raise ParameterError(f"half_width must be positive, got {self.half_width}")
        n = self.n_per_axis
        if int(n) != n or n < 16 or n % 2:
            raise ParameterError(f"n_per_axis must be an even integer >= 16, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_per_axis

    h = spacing

    @property
    def shape(self):
        return (self.n_per_axis,) * 3

    @property
    def extent(self) -> float:
        return self.half_width

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n_per_axis) + 0.5) * self.spacing

    @cached_property
    def coords(self):
        return np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        x, y, z = self.coords
        return np.sqrt(x * x + y * y + z * z)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.full(self.shape, self.spacing**3)

    def describe(self) -> dict:
        return {"kind": self.kind, "half_width": self.half_width,
                "n_per_axis": self.n_per_axis, "spacing": self.spacing}


Grid = RadialGrid | CartesianGrid3


class Field:
    """Immutable samples of a scalar quantity on a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        values = np.array(values, dtype=np.float64, copy=True)
        if values.shape != grid.shape:
            raise ParameterError(f"values of shape {values.shape} do not match grid {grid.shape}")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def __repr__(self):
        return f"Field({self.grid!r}, max={self.values.max():.6g})"

    def __add__(self, other):
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __mul__(self, c):
        return Field(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def max(self) -> float:
        return float(self.values.max())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def _check_same_grid(f, g):
    if f.grid != g.grid:
        raise ParameterError("fields live on different grids")


class Weight(enum.Enum):
    UNIT = "unit"
    GAMMA = "gamma"
    GAMMA_CUBED = "gamma_cubed"

    def evaluate(self, radius):
        if self is Weight.UNIT:
            return np.ones_like(radius)
        gamma = 1.0 / (1.0 + radius)
        if self is Weight.GAMMA:
            return gamma
        return gamma**3


def _require_finite(f: Field):
    if not f.is_finite():
        raise ParameterError("field contains non-finite values")


def quad(grid, values) -> float:
    """Sum ``values * cell volume`` over the grid (no validation)."""
    return float(np.sum(values * grid.volumes))


def integrate(f: Field, w: Weight = Weight.UNIT) -> float:
    _require_finite(f)
    if w is Weight.UNIT:
        return quad(f.grid, f.values)
    return quad(f.grid, f.values * w.evaluate(f.grid.radius))


def moment(f: Field, order: int):
    """Mass (0), first-moment vector (1) or ``E = int |x|^2/2 f`` (2)."""
    _require_finite(f)
    grid = f.grid
    if order == 0:
        return quad(grid, f.values)
    if order == 1:
        if grid.kind == "radial":
            return np.zeros(3)
        return np.array([quad(grid, c * f.values) for c in grid.coords])
    if order == 2:
        return quad(grid, 0.5 * grid.radius**2 * f.values)
    raise ParameterError(f"moment order must be 0, 1 or 2, got {order}")


def lp_norm(f: Field, p: float, w: Weight = Weight.UNIT) -> float:
    if not p >= 1:
        raise ParameterError(f"lp_norm requires p >= 1, got {p}")
    _require_finite(f)
    vals = np.abs(f.values) ** p
    if w is not Weight.UNIT:
        vals = vals * w.evaluate(f.grid.radius)
    return quad(f.grid, vals) ** (1.0 / p)


def lp_weak_norm(f: Field, p: float, n_levels: int = 64) -> float:
    """``sup_lambda lambda |{f >= lambda}|^(1/p)`` over a log-spaced level ladder.

    The ladder runs from the smallest positive value to the maximum.  Level
    sets use ``>=`` so that a constant plateau is captured at its own height.
    """
    if not p > 0:
        raise ParameterError(f"weak norm requires p > 0, got {p}")
    _require_finite(f)
    if np.any(f.values < 0):
        raise ParameterError("weak norm requires a nonnegative field")
    vals = f.values.ravel()
    vols = np.broadcast_to(f.grid.volumes, f.grid.shape).ravel()
    pos = vals > 0
    if not np.any(pos):
        return 0.0
    lo, hi = vals[pos].min(), vals[pos].max()
    levels = np.geomspace(lo, hi, max(int(n_levels), 64)) if hi > lo else np.array([hi])
    levels[-1] = hi
    order = np.argsort(vals, kind="stable")
    sorted_vals = vals[order]
    tail = np.cumsum(vols[order][::-1])[::-1]
    idx = np.searchsorted(sorted_vals, levels, side="left")
    measure = np.where(idx < vals.size, tail[np.minimum(idx, vals.size - 1)], 0.0)
    return float(np.max(levels * measure ** (1.0 / p)))


def gradient(grid, values) -> list[np.ndarray]:
    """Centered-difference gradient components at the nodes.

    On the radial grid the single component is ``d/dr`` with even reflection
    across ``r = 0``; outer edges use second-order one-sided differences.
    """
    h = grid.spacing
    if grid.kind == "radial":
        d = np.gradient(values, h, edge_order=2)
        d[0] = (values[1] - values[0]) / (2.0 * h)
        return [d]
    return list(np.gradient(values, h, edge_order=2))


def grad_sq(grid, values) -> np.ndarray:
    comps = gradient(grid, values)
    out = comps[0] ** 2
    for c in comps[1:]:
        out = out + c**2
    return out


def weighted_fisher(f: Field) -> float:
    """``int |grad sqrt f|^2 / (1 + |x|)``; vacuum nodes contribute nothing."""
    _require_finite(f)
    if np.any(f.values < 0):
        raise ParameterError("weighted_fisher requires a nonnegative field")
    root = np.sqrt(f.values)
    g2 = grad_sq(f.grid, root)
    g2 = np.where(f.values > 0, g2, 0.0)
    return quad(f.grid, g2 / (1.0 + f.grid.radius))


# Conservative face operators.  Fluxes live on interior faces; the outer faces
# (and the r = 0 face, whose area vanishes) carry zero flux.

def face_diff(grid, values):
    """Difference quotients across interior faces, one array per axis."""
    h = grid.spacing
    if grid.kind == "radial":
        return [np.diff(values) / h]
    return [np.diff(values, axis=ax) / h for ax in range(3)]


def face_mean(grid, values):
    if grid.kind == "radial":
        return [0.5 * (values[1:] + values[:-1])]
    out = []
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        out.append(0.5 * (values[tuple(lo)] + values[tuple(hi)]))
    return out


def divergence(grid, fluxes) -> np.ndarray:
    """Finite-volume divergence of interior-face fluxes with zero-flux boundaries."""
    if grid.kind == "radial":
        (flux,) = fluxes
        total = np.zeros(grid.n_points + 1)
        total[1:-1] = grid.face_areas[1:-1] * flux
        return (total[1:] - total[:-1]) / grid.volumes
    h = grid.spacing
    out = np.zeros(grid.shape)
    for ax, flux in enumerate(fluxes):
        pad = [(0, 0)] * 3
        pad[ax] = (1, 1)
        full = np.pad(flux, pad)
        out += np.diff(full, axis=ax) / h
    return out


def laplacian(grid, values) -> np.ndarray:
    return divergence(grid, face_diff(grid, values))


def face_volumes(grid):
    """Control volume of each interior face, so that ``sum w |Dv|^2 * vol`` is a gradient energy."""
    h = grid.spacing
    if grid.kind == "radial":
        return [grid.face_areas[1:-1] * h]
    return [np.full(s.shape, h**3) for s in face_diff(grid, np.zeros(grid.shape))]


def face_energy(grid, weight, values, other=None) -> float:
    """``int w grad v . grad g`` on faces (``g = v`` by default).

    Equal to ``-int v div(w grad g)`` for the discrete divergence above, which
    keeps energy identities exact at the discrete level.
    """
    dv = face_diff(grid, values)
    dg = dv if other is None else face_diff(grid, other)
    wf = face_mean(grid, np.broadcast_to(weight, grid.shape)) if np.ndim(weight) else None
    total = 0.0
    for ax, vol in enumerate(face_volumes(grid)):
        term = dv[ax] * dg[ax] * vol
        if wf is not None:
            term = term * wf[ax]
        else:
            term = term * float(weight)
        total += float(np.sum(term))
    return total
