"""Initial profiles sampled at grid nodes."""
from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError
from .fields import Field

SUPPORTED = ("maxwellian", "uniform_ball", "custom-table")


def maxwellian(grid, mass=1.0, variance=1.0, center=(0.0, 0.0, 0.0)) -> Field:
    """Gaussian ``mass (2 pi s)^(-3/2) exp(-|x - c|^2 / 2s)``."""
    if variance <= 0 or mass < 0:
        raise ParameterError("maxwellian needs variance > 0 and mass >= 0")
    norm = mass * (2.0 * math.pi * variance) ** -1.5
    if grid.kind == "radial":
        if any(center):
            raise ParameterError("a radial grid cannot hold an off-center profile")
        r2 = grid.nodes**2
    else:
        x, y, z = grid.coords
        r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
    return Field(grid, norm * np.exp(-0.5 * r2 / variance))


def uniform_ball(grid, radius=1.0, height=1.0) -> Field:
    return Field(grid, np.where(grid.radius <= radius, float(height), 0.0))


def from_table(grid, r, u) -> Field:
    """Linear interpolation of a radial table ``(r, u)``; zero beyond the table."""
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    if r.ndim != 1 or r.shape != u.shape or r.size < 2 or np.any(np.diff(r) <= 0):
        raise ParameterError("custom table needs increasing radii and matching values")
    if np.any(u < 0):
        raise ParameterError("custom table values must be nonnegative")
    return Field(grid, np.interp(grid.radius, r, u, right=0.0))


def load_table(path):
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ParameterError(f"{path}: expected two columns r,u")
    return data[:, 0], data[:, 1]


def _floats(name, params, allowed):
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ParameterError(f"unknown init key(s) for {name}: {', '.join(unknown)}; "
                             f"allowed: {', '.join(allowed)}")
    try:
        return {k: float(v) for k, v in params.items()}
    except ValueError as exc:
        raise ParameterError(f"non-numeric init parameter for {name}: {exc}") from None


def build(grid, name, params=None) -> Field:
    params = dict(params or {})
    if name == "maxwellian":
        vals = _floats(name, params, ("mass", "variance", "cx", "cy", "cz"))
        center = tuple(vals.pop(k, 0.0) for k in ("cx", "cy", "cz"))
        return maxwellian(grid, center=center, **vals)
    if name == "uniform_ball":
        return uniform_ball(grid, **_floats(name, params, ("radius", "height")))
    if name == "custom-table":
        if "path" not in params:
            raise ParameterError("custom-table profile needs init.path")
        return from_table(grid, *load_table(params["path"]))
    raise ParameterError(f"unknown initial profile {name!r}; supported: {', '.join(SUPPORTED)}")


def smooth_step(s):
    """C-infinity ramp: 0 for s <= 0, 1 for s >= 1, built from ``exp(-1/s)``."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        g = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return f / (f + g)


def cutoff(radius, inner, outer):
    """Radial cutoff equal to 1 on ``|x| <= inner`` and 0 on ``|x| >= outer``."""
    if not 0 <= inner < outer:
        raise ParameterError(f"cutoff needs 0 <= inner < outer, got {inner}, {outer}")
    return smooth_step((outer - np.asarray(radius)) / (outer - inner))


def bump(radius, width):
    """``exp(1 - 1/(1 - s^2))`` with ``s = |x|/width``; equals 1 at the origin."""
    s2 = (np.asarray(radius) / width) ** 2
    inside = s2 < 1
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - s2, 1.0)), 0.0)
