"""Gauss-Weierstrass (heat) and Ornstein-Uhlenbeck propagators on a grid.

The heat semigroup is applied as the exact Fourier multiplier
``exp(-t |xi|^2)`` (circular convolution with the periodized kernel).  The
Ornstein-Uhlenbeck semigroup is not translation invariant, so it is applied
by direct Riemann-sum quadrature of the Mehler integral.  The Mehler kernel
factorizes over the axes, which keeps the 2-d case at the cost of two dense
1-d products.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalGuardError
from .grid import GridSpec, SampledField
from .spectral import abs_wavenumber, apply_multiplier

# mass outside SAFE_SIGMAS standard deviations is below 1e-10 per axis
SAFE_SIGMAS = 7.0
DECAY_SIGMAS = 6.0
DECAY_TOL = 1e-12
# Riemann sums of a Gaussian with stddev >= 1.25 h are exact to ~1e-12
MIN_SIGMA_PER_H = 1.25


class SemigroupKind(enum.Enum):
    GW = "GW"
    OU = "OU"


@dataclass(frozen=True)
class PropagatorConfig:
    kind: SemigroupKind
    grid: GridSpec
    ou_truncation: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SemigroupKind(self.kind))
        if self.ou_truncation is not None and not 0 < self.ou_truncation <= self.grid.half_width:
            raise ValueError("OU truncation radius must lie in (0, half_width]")

    @property
    def truncation(self) -> float:
        return self.grid.half_width if self.ou_truncation is None else self.ou_truncation


def gw_step(f: SampledField, t: float) -> SampledField:
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if t == 0:
        return f
    xi = abs_wavenumber(f.grid)
    return apply_multiplier(f, np.exp(-t * xi ** 2))


def mehler_stddev(t: float) -> float:
    """Standard deviation (per axis) of y under the Mehler kernel M_t(x, .)."""
    return float(np.sqrt(-np.expm1(-2.0 * t) / 2.0))


def mehler_matrix(t: float, x: np.ndarray, y: np.ndarray, h: float) -> np.ndarray:
    """Quadrature weights h * M_t(x_i, y_j) for the 1-d Mehler kernel."""
    v = -np.expm1(-2.0 * t)
    diff = y[None, :] - np.exp(-t) * x[:, None]
    return h * np.exp(-diff ** 2 / v) / np.sqrt(np.pi * v)


def ou_safe_axis(t: float, x: np.ndarray, truncation: float) -> np.ndarray:
    """Per-axis test: does the truncated quadrature keep the Mehler mass at x?"""
    if t == 0:
        return np.abs(x) <= truncation
    return np.exp(-t) * np.abs(x) + SAFE_SIGMAS * mehler_stddev(t) <= truncation


def ou_safe_region(grid: GridSpec, t: float, truncation: Optional[float] = None) -> np.ndarray:
    R = grid.half_width if truncation is None else truncation
    ok = ou_safe_axis(t, grid.axis(), R)
    out = ok
    for _ in range(grid.d - 1):
        out = np.logical_and.outer(out, ok)
    return out


def _check_ou_inputs(f: SampledField, t: float, truncation: float, require_decay: bool):
    g = f.grid
    sigma = mehler_stddev(t)
    if sigma < MIN_SIGMA_PER_H * g.spacing:
        raise NumericalGuardError(
            f"OU time step t={t} is below the quadrature resolution of the grid")
    if require_decay:
        cutoff = truncation - DECAY_SIGMAS * sigma
        far = np.max(np.abs(np.stack(g.coordinates())), axis=0) > cutoff
        if far.any() and np.max(np.abs(f.values[far])) >= DECAY_TOL:
            raise NumericalGuardError("OU quadrature truncation unsafe")


def ou_evaluate(f: SampledField, t: float, points: np.ndarray,
                truncation: Optional[float] = None, require_decay: bool = True) -> np.ndarray:
    """(S_t f) on the tensor grid ``points^d`` (points may be off-grid)."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    g = f.grid
    R = g.half_width if truncation is None else truncation
    points = np.asarray(points, dtype=float)
    if t == 0:
        raise ValueError("ou_evaluate needs t > 0; use the field itself at t = 0")
    _check_ou_inputs(f, t, R, require_decay)
    y = g.axis()
    keep = np.abs(y) <= R
    M = mehler_matrix(t, points, y[keep], g.spacing)
    vals = f.values
    for axis in range(g.d):
        vals = np.compress(keep, vals, axis=axis)
        vals = np.moveaxis(np.tensordot(M, vals, axes=([1], [axis])), 0, axis)
    return vals


def ou_step(f: SampledField, t: float, truncation: Optional[float] = None,
            require_decay: bool = True) -> SampledField:
    """Mehler-kernel quadrature of the OU semigroup on the grid points.

    Outputs are trustworthy only on :func:`ou_safe_region`.  With
    ``require_decay`` the input must be negligible near the truncation
    boundary; bounded inputs that do not decay (constants, say) can be
    propagated with ``require_decay=False`` and read on the safe region.
    """
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if t == 0:
        return f
    return SampledField(f.grid, ou_evaluate(f, t, f.grid.axis(), truncation, require_decay))


def step(cfg: PropagatorConfig, f: SampledField, t: float, require_decay: bool = True) -> SampledField:
    if cfg.kind is SemigroupKind.GW:
        return gw_step(f, t)
    return ou_step(f, t, cfg.truncation, require_decay)


def orbit(f: SampledField, times: Sequence[float], cfg: PropagatorConfig,
          require_decay: bool = True) -> list:
    """[S_t f for t in times], each evaluated directly from f."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("orbit times must be nonnegative")
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("orbit times must be sorted")
    return [step(cfg, f, t, require_decay) for t in times]
