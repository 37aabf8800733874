"""Uniform periodic grids on [-L, L)^d, sampled fields, norms and observation sets.

Fields are stored as numpy arrays of shape ``(n,) * d`` (row-major over the
axes).  Coordinates along every axis are ``x_j = -L + j*h`` so the origin is
the grid point with index ``n // 2``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalGuardError


@dataclass(frozen=True)
class GridSpec:
    d: int
    half_width: float
    n_per_axis: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.n_per_axis < 8 or self.n_per_axis % 2:
            raise ValueError("n_per_axis must be an even integer >= 8")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_per_axis

    @property
    def shape(self) -> tuple:
        return (self.n_per_axis,) * self.d

    @property
    def size(self) -> int:
        return self.n_per_axis ** self.d

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.d

    def axis(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.n_per_axis)

    def coordinates(self) -> list:
        """Coordinate arrays (one per axis) broadcast to the full grid shape."""
        ax = self.axis()
        return list(np.meshgrid(*([ax] * self.d), indexing="ij"))

    def radius(self) -> np.ndarray:
        """Euclidean distance of every grid point to the origin."""
        return np.sqrt(sum(c ** 2 for c in self.coordinates()))

    def origin_index(self) -> tuple:
        return (self.n_per_axis // 2,) * self.d


@dataclass(frozen=True, eq=False)
class SampledField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.size != self.grid.size:
            raise ValueError(
                f"expected {self.grid.size} values, got {values.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "SampledField":
        """Sample ``func(*coords)`` on every grid point."""
        return cls(grid, func(*grid.coordinates()))

    def __add__(self, other):
        _same_grid(self.grid, other.grid)
        return SampledField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self.grid, other.grid)
        return SampledField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return SampledField(self.grid, scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledField(self.grid, -self.values)


def _same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise ValueError("fields live on different grids")


def sup_norm(f: SampledField) -> float:
    return float(np.max(np.abs(f.values)))


def l1_norm(f: SampledField) -> float:
    """Left-endpoint Riemann sum of |f|."""
    return float(f.grid.cell_volume * np.sum(np.abs(f.values)))


def gaussian_kernel(grid: GridSpec, t: float) -> SampledField:
    """The heat kernel (4 pi t)^{-d/2} exp(-|x|^2 / (4t)) sampled on ``grid``."""
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    r2 = grid.radius() ** 2
    return SampledField(grid, (4 * np.pi * t) ** (-grid.d / 2) * np.exp(-r2 / (4 * t)))


# --------------------------------------------------------------------------
# observation sets

@dataclass(frozen=True)
class ThickSetSpec:
    """A subset of R^d with thickness parameters.

    ``geometry`` is one of

    * ``{"kind": "full"}`` -- all of R^d,
    * ``{"kind": "periodic", "period": [p_1, ..], "filled": [[a_1, b_1], ..]}``
      -- points whose coordinate ``x_j mod p_j`` lies in ``[a_j, b_j)`` for
      every axis,
    * ``{"kind": "box", "lower": [..], "upper": [..]}`` -- a closed box,
    * ``{"kind": "explicit", "mask": array}`` -- a boolean grid mask.
    """

    windows: tuple
    density: float
    geometry: dict = field(default_factory=lambda: {"kind": "full"})

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(float(w) for w in self.windows))
        if not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")
        if any(w <= 0 for w in self.windows):
            raise ValueError("window lengths must be positive")
        if self.geometry.get("kind") not in ("full", "periodic", "box", "explicit"):
            raise ValueError(f"unknown geometry {self.geometry.get('kind')!r}")

    @classmethod
    def periodic_slab(cls, period: float, filled: Sequence[float], d: int = 1,
                      windows=None, density=None) -> "ThickSetSpec":
        """Same slab pattern on every axis; density defaults to the filled fraction."""
        a, b = filled
        frac = (b - a) / period
        if windows is None:
            windows = (period,) * d
        if density is None:
            density = frac ** d
        geom = {"kind": "periodic", "period": [period] * d, "filled": [[a, b]] * d}
        return cls(tuple(windows), density, geom)


@dataclass(frozen=True, eq=False)
class ObservationMask:
    grid: GridSpec
    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool).reshape(self.grid.shape).copy()
        if not ind.any():
            raise ValueError("empty observation set")
        ind.setflags(write=False)
        object.__setattr__(self, "indicator", ind)

    @property
    def fraction(self) -> float:
        return float(self.indicator.mean())


# coordinates are binary fractions on the usual grids; this only guards rounding
_PHASE_TOL = 1e-9


def make_mask(spec: ThickSetSpec, g: GridSpec) -> ObservationMask:
    geom = spec.geometry
    kind = geom["kind"]
    coords = g.coordinates()
    if kind == "full":
        ind = np.ones(g.shape, dtype=bool)
    elif kind == "periodic":
        period, filled = geom["period"], geom["filled"]
        if len(period) != g.d or len(filled) != g.d:
            raise ValueError("periodic geometry must describe every axis")
        ind = np.ones(g.shape, dtype=bool)
        for x, p, (a, b) in zip(coords, period, filled):
            phase = np.mod(x + _PHASE_TOL, p) - _PHASE_TOL
            ind &= (phase >= a - _PHASE_TOL) & (phase < b - _PHASE_TOL)
    elif kind == "box":
        lower, upper = geom["lower"], geom["upper"]
        ind = np.ones(g.shape, dtype=bool)
        for x, lo, hi in zip(coords, lower, upper):
            ind &= (x >= lo - _PHASE_TOL) & (x <= hi + _PHASE_TOL)
    else:
        ind = np.asarray(geom["mask"], dtype=bool)
        if ind.size != g.size:
            raise ValueError("explicit mask does not match the grid")
    if not ind.any():
        raise ValueError("observation set does not intersect the grid")
    return ObservationMask(g, ind)


def restrict(f: SampledField, m: ObservationMask) -> np.ndarray:
    """Values of ``f`` on the observation set (a flat array)."""
    _same_grid(f.grid, m.grid)
    return f.values[m.indicator]


def restricted_sup_norm(f: SampledField, m: ObservationMask) -> float:
    return float(np.max(np.abs(restrict(f, m))))


def _window_points(windows, g: GridSpec) -> list:
    pts = []
    for w in windows:
        k = int(round(w / g.spacing))
        if k < 1:
            raise ValueError("window shorter than the grid spacing")
        if k > g.n_per_axis:
            raise ValueError("window larger than the domain")
        pts.append(k)
    return pts


def check_thickness(m: ObservationMask, windows, rho: float) -> dict:
    """Minimum covered fraction over all grid-aligned, periodically wrapped windows.

    A window of length ``w`` covers ``round(w / h)`` grid cells.  The set is
    reported thick when the minimum density is at least ``rho`` minus one cell
    of resolution per axis.
    """
    g = m.grid
    windows = list(windows)
    if len(windows) == 1 and g.d == 2:
        windows = windows * 2
    if len(windows) != g.d:
        raise ValueError("need one window length per axis")
    k = _window_points(windows, g)
    counts = m.indicator.astype(np.int64)
    for axis, kk in enumerate(k):
        # periodic sliding sum via cumulative sums over a wrapped copy
        wrapped = np.concatenate([counts, np.take(counts, range(kk), axis=axis)], axis=axis)
        cs = np.cumsum(wrapped, axis=axis)
        zero = np.zeros_like(np.take(cs, [0], axis=axis))
        cs = np.concatenate([zero, cs], axis=axis)
        n = g.n_per_axis
        counts = np.take(cs, range(kk, kk + n), axis=axis) - np.take(cs, range(n), axis=axis)
    min_density = float(counts.min()) / float(np.prod(k))
    slack = sum(1.0 / kk for kk in k)
    return {"thick": min_density >= rho - slack, "min_density": min_density}


# --------------------------------------------------------------------------
# serialization

_HEADER = struct.Struct("<qqd")


def field_to_csv(f: SampledField) -> str:
    if np.iscomplexobj(f.values):
        raise ValueError("CSV export supports real fields only")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = ["x", "y"][: f.grid.d]
    writer.writerow(names + ["value"])
    coords = [c.ravel() for c in f.grid.coordinates()]
    for row in zip(*coords, f.values.ravel()):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def field_from_csv(text: str, grid: GridSpec) -> SampledField:
    rows = list(csv.reader(io.StringIO(text)))
    values = np.array([float(r[-1]) for r in rows[1:]])
    return SampledField(grid, values)


def field_to_bytes(f: SampledField) -> bytes:
    """Header (d, n as int64; L_box as float64, little-endian) then float64 payload."""
    if np.iscomplexobj(f.values):
        raise ValueError("binary export supports real fields only")
    g = f.grid
    header = _HEADER.pack(g.d, g.n_per_axis, g.half_width)
    return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def field_from_bytes(blob: bytes) -> SampledField:
    d, n, half_width = _HEADER.unpack_from(blob)
    g = GridSpec(int(d), float(half_width), int(n))
    payload = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    return SampledField(g, payload)


def require_boundary_decay(f: SampledField, tol: float = 1e-12, width: Optional[int] = 1):
    """Raise unless |f| < tol on the outermost ``width`` layers of grid points."""
    v = np.abs(f.values)
    n = f.grid.n_per_axis
    edge = np.zeros(f.grid.shape, dtype=bool)
    for axis in range(f.grid.d):
        idx = [slice(None)] * f.grid.d
        idx[axis] = np.r_[0:width, n - width:n]
        edge[tuple(idx)] = True
    if np.max(v[edge]) >= tol:
        raise NumericalGuardError("test function does not decay at the domain boundary")
