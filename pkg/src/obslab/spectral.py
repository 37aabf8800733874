"""Smooth cutoff, scaled DFT and the band-limiting projections P_lambda.

Transform convention: ``F f(xi) = int f(x) exp(-i x.xi) dx``.  On a grid
``x_j = -L + j h`` this is approximated by ``h^d * DFT`` of the values with
the origin moved to index 0, evaluated on angular frequencies
``xi_k = pi k / L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalGuardError
from .grid import GridSpec, SampledField, l1_norm


def _g(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore"):         # 1/x overflows for subnormal x; exp(-inf) = 0
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x):
    """C^infinity step: 0 for x <= 0, 1 for x >= 1, g(x) / (g(x) + g(1-x)) between."""
    gx, g1 = _g(x), _g(1.0 - np.asarray(x, dtype=float))
    return gx / (gx + g1)


def eta(r):
    """Radial cutoff profile: 1 on [0, 1/2], 0 on [1, inf), smooth and monotone between."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("eta is defined on [0, inf)")
    out = smooth_step(2.0 * (1.0 - r))
    return float(out) if out.ndim == 0 else out


def chi(lam: float, xi_abs):
    """The multiplier chi_lambda = eta(|xi| / lambda)."""
    return eta(np.asarray(xi_abs) / lam)


@dataclass(frozen=True, eq=False)
class SpectrumField:
    """Fourier coefficients in numpy FFT order; ``wavenumbers`` gives matching xi."""

    grid: GridSpec
    coefficients: np.ndarray

    def wavenumbers(self) -> list:
        return wavenumbers(self.grid)

    def abs_wavenumber(self) -> np.ndarray:
        return abs_wavenumber(self.grid)


def wavenumbers(grid: GridSpec) -> list:
    k = 2 * np.pi * np.fft.fftfreq(grid.n_per_axis, d=grid.spacing)
    return list(np.meshgrid(*([k] * grid.d), indexing="ij"))


def abs_wavenumber(grid: GridSpec) -> np.ndarray:
    return np.sqrt(sum(k ** 2 for k in wavenumbers(grid)))


def nyquist(grid: GridSpec) -> float:
    return np.pi / grid.spacing


def forward_transform(f: SampledField) -> SpectrumField:
    g = f.grid
    coeffs = g.cell_volume * np.fft.fftn(np.fft.ifftshift(f.values))
    return SpectrumField(g, coeffs)


def inverse_transform(F: SpectrumField, real: bool = False) -> SampledField:
    g = F.grid
    values = np.fft.fftshift(np.fft.ifftn(F.coefficients)) / g.cell_volume
    if real:
        values = values.real
    return SampledField(g, values)


def apply_multiplier(f: SampledField, mult: np.ndarray) -> SampledField:
    """Inverse transform of ``mult * F f``; real input stays real for even multipliers."""
    F = forward_transform(f)
    out = inverse_transform(SpectrumField(f.grid, mult * F.coefficients))
    if not np.iscomplexobj(f.values):
        out = SampledField(f.grid, out.values.real)
    return out


@dataclass(frozen=True)
class Projection:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("projection needs lambda > 0")

    def multiplier(self, grid: GridSpec) -> np.ndarray:
        if self.lam >= nyquist(grid):
            raise NumericalGuardError("cutoff exceeds Nyquist")
        return chi(self.lam, abs_wavenumber(grid))


def apply_projection(p: Projection, f: SampledField) -> SampledField:
    return apply_multiplier(f, p.multiplier(f.grid))


def apply_complement(p: Projection, f: SampledField) -> SampledField:
    """(I - P_lambda) f."""
    return apply_multiplier(f, 1.0 - p.multiplier(f.grid))


# relative size a multiplier may keep at the edge of the frequency box
ALIAS_TOL = 1e-14


def multiplier_l1(mult, grid: GridSpec) -> float:
    """L1 norm of the inverse transform of a frequency multiplier.

    ``mult`` is either a callable of the wavenumber arrays ``(xi_1, .., xi_d)``
    or an array already sampled in FFT order.
    """
    if callable(mult):
        sampled = np.asarray(mult(*wavenumbers(grid)))
    else:
        sampled = np.asarray(mult)
    sampled = np.broadcast_to(sampled, grid.shape)
    n = grid.n_per_axis
    edge = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.d):
        idx = [slice(None)] * grid.d
        idx[axis] = n // 2
        edge[tuple(idx)] = True
    if np.max(np.abs(sampled[edge]), initial=0.0) >= ALIAS_TOL:
        raise NumericalGuardError("aliasing risk: multiplier does not decay at Nyquist")
    return l1_norm(inverse_transform(SpectrumField(grid, sampled)))


def cutoff_kernel_l1(lam: float, grid: GridSpec) -> float:
    """||F^{-1} chi_lambda||_{L1}, the Young bound for ||P_lambda||."""
    return multiplier_l1(Projection(lam).multiplier(grid), grid)
