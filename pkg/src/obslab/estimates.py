"""Empirical uncertainty, dissipation and final-state observability constants.

Every measured constant is a maximum over a finite, seeded corpus of test
functions, hence a lower bound for the true supremum; enlarging the corpus
can only increase it.  Exponential laws are fitted by least squares in log
space.  One-sided bounds are certified by shifting the fitted line up to
the worst training cell and inflating the prefactor by 10%.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .errors import NumericalGuardError
from .grid import (GridSpec, ObservationMask, SampledField, ThickSetSpec,
                   check_thickness, require_boundary_decay, restricted_sup_norm, sup_norm)
from .parallel import parallel_map
from .semigroups import PropagatorConfig, SemigroupKind, orbit, step
from .spectral import (Projection, SpectrumField, abs_wavenumber, apply_complement,
                       apply_projection, chi, forward_transform, inverse_transform,
                       multiplier_l1, nyquist, wavenumbers)

RATIO_FLOOR = 1e-14
INFLATION = 0.10


@dataclass(frozen=True)
class ObsParams:
    gamma1: float
    gamma2: float
    gamma3: float
    T: float
    r: float = math.inf
    d0: float = 1.0
    d1: float = 1.0
    d2: float = 1.0
    d3: float = 1.0
    lambda_star: float = 0.0

    def __post_init__(self):
        if not self.gamma1 < self.gamma2:
            raise ValueError("need gamma1 < gamma2")
        if min(self.gamma1, self.gamma3, self.d0, self.d1, self.d3) <= 0:
            raise ValueError("gamma1, gamma3, d0, d1, d3 must be positive")
        if self.d2 < 1:
            raise ValueError("d2 must be at least 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.r < 1:
            raise ValueError("r must lie in [1, inf]")
        if self.lambda_star < 0:
            raise ValueError("lambda_star must be nonnegative")

    @property
    def blowup_exponent(self) -> float:
        """gamma1 * gamma3 / (gamma2 - gamma1), the power of 1/T in the exponent."""
        return self.gamma1 * self.gamma3 / (self.gamma2 - self.gamma1)

    @classmethod
    def heat(cls, T: float = 1.0, r: float = math.inf) -> "ObsParams":
        # (LS) is linear in lambda, DISS(GW) is exp(-d3 lambda^2 t)
        return cls(gamma1=1.0, gamma2=2.0, gamma3=1.0, T=T, r=r)


@dataclass(frozen=True)
class CobsShape:
    C1: float
    C2: float
    C3: float

    def __post_init__(self):
        for v in (self.C1, self.C2, self.C3):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("C_obs shape constants must be finite and nonnegative")


@dataclass
class FitReport:
    kind: str
    params: dict
    cells: list
    fitted: dict
    r2: float
    violations: int = 0
    flagged: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "cells": self.cells,
            "fitted": self.fitted,
            "r2": self.r2,
            "violations": self.violations,
            "flagged": self.flagged,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        rows = self.cells
        if not rows:
            return ""
        columns = list(rows[0])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(row.get(c)) for c in columns])
        return buf.getvalue()


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --------------------------------------------------------------------------
# fitting helpers

def r_squared(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - y_hat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # constant data up to rounding in the mean
    flat = y.size * (1e-12 * max(1.0, float(np.max(np.abs(y))))) ** 2
    if ss_tot <= flat:
        return 1.0 if ss_res <= flat else -math.inf
    return 1.0 - ss_res / ss_tot


def fit_affine(x, y) -> tuple:
    """Ordinary least squares y ~ a + b x; returns (a, b, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        raise ValueError("affine fit needs at least two distinct abscissae")
    X = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(a), float(b), r_squared(y, a + b * x)


def fit_decay(u, values, inflation: float = INFLATION) -> dict:
    """Fit values ~ d2 exp(-d3 u) and certify an upper envelope.

    The slope comes from OLS on log values.  The certified prefactor is the
    smallest one making the bound hold on every fitted cell, inflated by
    ``inflation`` and never below 1.
    """
    u = np.asarray(u, dtype=float)
    logv = np.log(np.asarray(values, dtype=float))
    a, b, r2 = fit_affine(u, logv)
    d3 = -b
    envelope = float(np.max(logv + d3 * u))
    d2_cert = max(1.0, (1.0 + inflation) * math.exp(envelope))
    return {"d2_ols": math.exp(a), "d3": d3, "d2": d2_cert, "r2": r2}


def decay_bound(d2: float, d3: float, u) -> np.ndarray:
    return d2 * np.exp(-d3 * np.asarray(u, dtype=float))


# --------------------------------------------------------------------------
# test corpora

def _normalized(grid: GridSpec, values: np.ndarray) -> SampledField:
    values = np.real_if_close(values)
    return SampledField(grid, values / np.max(np.abs(values)))


def _band_limited(rng, g: GridSpec, lam_max: float) -> SampledField:
    noise = SampledField(g, rng.standard_normal(g.shape))
    F = forward_transform(noise)
    mult = chi(lam_max, abs_wavenumber(g))
    out = inverse_transform(SpectrumField(g, mult * F.coefficients)).values.real
    return _normalized(g, out)


def _bump(rng, g: GridSpec, width_range, center_range: float) -> Optional[SampledField]:
    lo, hi = width_range
    coords = g.coordinates()
    total = np.zeros(g.shape)
    for _ in range(int(rng.integers(1, 4))):
        center = rng.uniform(-center_range, center_range, size=g.d)
        width = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
        r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, center))
        total += amp * np.exp(-r2 / (2 * width ** 2))
    if np.max(np.abs(total)) == 0:
        return None
    f = _normalized(g, total)
    try:
        require_boundary_decay(f)
    except NumericalGuardError:
        return None
    return f


def generate_test_functions(kind: str, count: int, seed: int, g: GridSpec,
                            lam_max: Optional[float] = None,
                            width_range: Optional[Sequence[float]] = None,
                            center_range: Optional[float] = None) -> list:
    """Seeded corpus of test functions, each normalized to sup-norm 1.

    kind is ``band_limited`` (needs ``lam_max``), ``gaussian_bumps`` or
    ``mixed`` (alternating between the two).  Bump centers are uniform in
    ``[-center_range, center_range]^d`` (default: the whole box); the OU
    quadrature needs them well inside the truncation radius.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if kind not in ("band_limited", "gaussian_bumps", "mixed"):
        raise ValueError(f"unknown corpus kind {kind!r}")
    if kind != "gaussian_bumps":
        if lam_max is None:
            raise ValueError("band-limited corpora need lam_max")
        if lam_max >= nyquist(g):
            raise NumericalGuardError("cutoff exceeds Nyquist")
    if width_range is None:
        width_range = (4 * g.spacing, g.half_width / 10)
    if center_range is None:
        center_range = g.half_width
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        use_band = kind == "band_limited" or (kind == "mixed" and i % 2 == 0)
        if use_band:
            out.append(_band_limited(rng, g, lam_max))
            continue
        for _ in range(100):
            f = _bump(rng, g, width_range, center_range)
            if f is not None:
                out.append(f)
                break
        else:
            raise NumericalGuardError("could not place a bump with boundary decay after 100 tries")
    return out


def concentrated_functions(mask: ObservationMask, lam: float, count: int = 2) -> list:
    """Functions with spectrum in B[0, lam/2] that are as small as possible on the mask.

    These are the eigenvectors of the Gram matrix of plane waves restricted
    to the mask with the smallest eigenvalues (a discrete Slepian problem).
    Because chi_lam = 1 on B[0, lam/2], P_lam leaves them unchanged.
    """
    g = mask.grid
    xi = abs_wavenumber(g)
    inside = xi <= lam / 2
    ks = [k[inside] for k in wavenumbers(g)]
    coords = [c[mask.indicator] for c in g.coordinates()]
    phase = sum(np.outer(c, k) for c, k in zip(coords, ks))
    basis_on_mask = np.exp(1j * phase)
    gram = basis_on_mask.conj().T @ basis_on_mask
    w, v = np.linalg.eigh(gram)
    all_coords = [c.ravel() for c in g.coordinates()]
    full_phase = sum(np.outer(c, k) for c, k in zip(all_coords, ks))
    out = []
    for j in range(min(count, len(w))):
        vals = np.exp(1j * full_phase) @ v[:, j]
        for part in (vals.real, vals.imag):
            if np.max(np.abs(part)) > 1e-8 * np.max(np.abs(vals)):
                out.append(_normalized(g, part.reshape(g.shape)))
    return out


def extremal_diss_functions(g: GridSpec, lambdas: Sequence[float], times: Sequence[float]) -> list:
    """Worst-case inputs for the heat dissipation ratio.

    For f = sign(K) with K = F^{-1}((1 - chi_lam) exp(-t |xi|^2)), the value
    of (I - P_lam) S_t f at the origin is ||K||_1, so the ratio attains its
    Young bound at (lam, t).  K is even, so no reflection is needed.
    """
    xi = abs_wavenumber(g)
    out = []
    for lam in lambdas:
        if lam >= nyquist(g):
            raise NumericalGuardError("cutoff exceeds Nyquist")
        for t in times:
            mult = (1.0 - chi(lam, xi)) * np.exp(-t * xi ** 2)
            K = inverse_transform(SpectrumField(g, mult)).values.real
            s = np.sign(K)
            if np.any(s):
                out.append(SampledField(g, s))
    return out


# --------------------------------------------------------------------------
# uncertainty principle

def _up_ratio(p: Projection, f: SampledField, mask: ObservationMask) -> Optional[float]:
    q = apply_projection(p, f)
    num = sup_norm(q)
    if num <= RATIO_FLOOR * sup_norm(f):
        return None
    den = restricted_sup_norm(q, mask)
    if den == 0.0:
        raise NumericalGuardError("observation annihilates test function")
    return num / den


def measure_up(mask: ObservationMask, lambdas: Sequence[float], fns: Sequence[SampledField],
               thick_set: Optional[ThickSetSpec] = None) -> FitReport:
    """Sup-ratios ||P f|| / ||P f on mask|| per lambda and the fit log ratio = log d0 + d1 lambda."""
    if thick_set is not None:
        th = check_thickness(mask, thick_set.windows, thick_set.density)
        if not th["thick"]:
            raise NumericalGuardError(
                f"observation set is not thick (min density {th['min_density']:.4g})")
    lambdas = sorted(float(l) for l in lambdas)

    def cell(lam):
        p = Projection(lam)
        ratios = [r for r in (_up_ratio(p, f, mask) for f in fns) if r is not None]
        if not ratios:
            raise NumericalGuardError(f"every test function is annihilated by P_{lam}")
        return max(ratios)

    ratios = parallel_map(cell, lambdas)
    cells = [{"lambda": lam, "ratio": r, "log_ratio": math.log(r)}
             for lam, r in zip(lambdas, ratios)]
    a, b, r2 = fit_affine(lambdas, [c["log_ratio"] for c in cells])
    for c in cells:
        c["fit"] = math.exp(a + b * c["lambda"])
    fitted = {"d0": math.exp(a), "d1": b}
    params = {"lambdas": lambdas, "corpus_size": len(fns), "mask_fraction": mask.fraction}
    return FitReport("up", params, cells, fitted, r2)


# --------------------------------------------------------------------------
# dissipation

def _diss_ratio(cfg: PropagatorConfig, lam: float, t: float, fns) -> float:
    p = Projection(lam)
    best = 0.0
    for f in fns:
        moved = step(cfg, f, t)
        best = max(best, sup_norm(apply_complement(p, moved)) / sup_norm(f))
    return best


def measure_diss(cfg: PropagatorConfig, lambdas: Sequence[float], times: Sequence[float],
                 fns: Sequence[SampledField], T: Optional[float] = None,
                 holdout_lambdas: Sequence[float] = (), holdout_times: Sequence[float] = (),
                 inflation: float = INFLATION) -> FitReport:
    """Dissipation ratios max_f ||(I - P_lam) S_t f|| / ||f|| and the fit against lam^2 t.

    Cells below the double-precision floor are excluded from the fit and
    flagged.  For the OU semigroup the factor 2 of its exponent is absorbed
    into the fitted d3.  Held-out cells are checked against the certified
    bound.
    """
    lambdas = sorted(float(l) for l in lambdas)
    times = sorted(float(t) for t in times)
    if any(t <= 0 for t in times) or (T is not None and any(t > T / 2 for t in times)):
        raise ValueError("dissipation times must lie in (0, T/2]")
    for lam in list(lambdas) + list(holdout_lambdas):
        if lam >= nyquist(cfg.grid):
            raise NumericalGuardError("cutoff exceeds Nyquist")

    grid_cells = [(lam, t) for lam in lambdas for t in times]
    ratios = parallel_map(lambda c: _diss_ratio(cfg, c[0], c[1], fns), grid_cells)
    cells, flagged = [], []
    for (lam, t), ratio in zip(grid_cells, ratios):
        row = {"lambda": lam, "t": t, "u": lam * lam * t, "ratio": ratio, "role": "fit"}
        if ratio < RATIO_FLOOR:
            flagged.append({"lambda": lam, "t": t, "reason": "below double-precision floor"})
            row["role"] = "excluded"
        cells.append(row)
    used = [c for c in cells if c["role"] == "fit"]
    if len(used) < 2:
        raise NumericalGuardError("fewer than two dissipation cells above the floor")
    fit = fit_decay([c["u"] for c in used], [c["ratio"] for c in used], inflation)

    hold = [(lam, t) for lam in sorted(holdout_lambdas) for t in sorted(holdout_times)]
    hold_ratios = parallel_map(lambda c: _diss_ratio(cfg, c[0], c[1], fns), hold)
    for (lam, t), ratio in zip(hold, hold_ratios):
        cells.append({"lambda": lam, "t": t, "u": lam * lam * t, "ratio": ratio, "role": "holdout"})

    violations = 0
    for c in cells:
        c["bound"] = float(decay_bound(fit["d2"], fit["d3"], c["u"]))
        c["violated"] = c["role"] != "excluded" and c["ratio"] > c["bound"]
        if c["role"] == "holdout" and c["violated"]:
            violations += 1
    fitted = {"d2": fit["d2"], "d2_ols": fit["d2_ols"], "d3": fit["d3"],
              "d3_positive": fit["d3"] > 0}
    params = {"kind": cfg.kind.value, "lambdas": lambdas, "times": times,
              "holdout_lambdas": sorted(holdout_lambdas), "holdout_times": sorted(holdout_times),
              "corpus_size": len(fns), "inflation": inflation}
    return FitReport("diss", params, cells, fitted, fit["r2"], violations, flagged)


# --------------------------------------------------------------------------
# the Gaussian tail lemma

def lemma_multiplier(lam: float, s: float, grid: GridSpec) -> np.ndarray:
    """(1 - chi_lam) h_s with h_s(xi) = exp(-(1 - s^2) |xi|^2 / 4)."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    if lam >= nyquist(grid):
        raise NumericalGuardError("cutoff exceeds Nyquist")
    xi = abs_wavenumber(grid)
    return (1.0 - chi(lam, xi)) * np.exp(-(1.0 - s * s) * xi ** 2 / 4.0)


def lemma_l1(lam: float, s: float, grid: GridSpec) -> float:
    return multiplier_l1(lemma_multiplier(lam, s, grid), grid)


def measure_lemma_l1(lambdas: Sequence[float], s_values: Sequence[float], grid: GridSpec,
                     holdout_lambdas: Sequence[float] = (), holdout_s: Sequence[float] = (),
                     inflation: float = INFLATION) -> FitReport:
    lambdas = sorted(float(l) for l in lambdas)
    s_values = sorted(float(s) for s in s_values)
    train = [(lam, s) for lam in lambdas for s in s_values]
    hold = [(lam, s) for lam in sorted(holdout_lambdas) for s in sorted(holdout_s)]
    values = parallel_map(lambda c: lemma_l1(c[0], c[1], grid), train + hold)

    cells, flagged = [], []
    for i, ((lam, s), v) in enumerate(zip(train + hold, values)):
        role = "fit" if i < len(train) else "holdout"
        if v < RATIO_FLOOR:
            flagged.append({"lambda": lam, "s": s, "reason": "below double-precision floor"})
            role = "excluded" if role == "fit" else role
        cells.append({"lambda": lam, "s": s, "u": lam * lam * (1 - s * s), "value": v, "role": role})
    used = [c for c in cells if c["role"] == "fit"]
    if len(used) < 2:
        raise NumericalGuardError("fewer than two lemma cells above the floor")
    fit = fit_decay([c["u"] for c in used], [c["value"] for c in used], inflation)
    violations = 0
    for c in cells:
        c["bound"] = float(decay_bound(fit["d2"], fit["d3"], c["u"]))
        c["violated"] = c["role"] != "excluded" and c["value"] > c["bound"]
        if c["role"] == "holdout" and c["violated"]:
            violations += 1
    fitted = {"d2": fit["d2"], "d2_ols": fit["d2_ols"], "d3": fit["d3"]}
    params = {"lambdas": lambdas, "s_values": s_values, "holdout_lambdas": sorted(holdout_lambdas),
              "holdout_s": sorted(holdout_s), "inflation": inflation,
              "grid": {"d": grid.d, "half_width": grid.half_width, "n_per_axis": grid.n_per_axis}}
    return FitReport("lemma_l1", params, cells, fitted, fit["r2"], violations, flagged)


# --------------------------------------------------------------------------
# final-state observability

def time_norm(observed: Sequence[float], dt: float, r: float) -> float:
    """(dt * sum_i a_i^r)^(1/r) over left endpoints, or max_i a_i for r = inf.

    ``observed`` holds the samples at t_0 .. t_N; the finite-r sum drops the
    last one.
    """
    a = np.asarray(observed, dtype=float)
    if math.isinf(r):
        return float(a.max())
    return float((dt * np.sum(a[:-1] ** r)) ** (1.0 / r))


def cobs_ratios(cfg: PropagatorConfig, mask: ObservationMask, T: float, r: float,
                fns: Sequence[SampledField], n_steps: int = 32) -> list:
    """Per test function: (||S_T f||, time norm of the observed orbit)."""
    if T <= 0:
        raise ValueError("T must be positive")
    if n_steps < 32:
        raise ValueError("the time grid needs at least 32 steps")
    dt = T / n_steps
    times = [i * dt for i in range(n_steps + 1)]

    def one(f):
        orb = orbit(f, times, cfg)
        observed = [restricted_sup_norm(s, mask) for s in orb]
        den = time_norm(observed, dt, r)
        if den == 0.0:
            raise NumericalGuardError("observation annihilates test function")
        return sup_norm(orb[-1]), den

    return parallel_map(one, fns)


def estimate_cobs(cfg: PropagatorConfig, mask: ObservationMask, T: float, r: float,
                  fns: Sequence[SampledField], n_steps: int = 32) -> float:
    """max_f ||S_T f|| / (time norm of t -> ||C S_t f||); a lower bound for C_obs."""
    pairs = cobs_ratios(cfg, mask, T, r, fns, n_steps)
    return max(num / den for num, den in pairs)


def cobs_form(T: float, shape: CobsShape, p: ObsParams) -> float:
    if T <= 0:
        raise ValueError("T must be positive")
    prefactor = shape.C1 if math.isinf(p.r) else shape.C1 / T ** (1.0 / p.r)
    return prefactor * math.exp(shape.C2 / T ** p.blowup_exponent + shape.C3 * T)


def fit_cobs_scaling(Ts: Sequence[float], measured: Sequence[float], p: ObsParams) -> tuple:
    """Bounded least squares for (log C1, C2 >= 0, C3 >= 0) in log space.

    Returns ``(CobsShape, R^2)`` with R^2 computed on log(measured).
    """
    order = np.argsort(np.asarray(Ts, dtype=float), kind="stable")
    T = np.asarray(Ts, dtype=float)[order]
    m = np.asarray(measured, dtype=float)[order]
    if len(np.unique(T)) < 4:
        raise ValueError("need at least 4 distinct T values")
    if np.any(T <= 0) or np.any(m <= 0):
        raise ValueError("times and measured constants must be positive")
    known = 0.0 if math.isinf(p.r) else -np.log(T) / p.r
    y = np.log(m) - known
    X = np.column_stack([np.ones_like(T), T ** (-p.blowup_exponent), T])
    if np.linalg.matrix_rank(X) < 3:
        raise ValueError("degenerate design matrix")
    res = lsq_linear(X, y, bounds=([-np.inf, 0.0, 0.0], [np.inf, np.inf, np.inf]),
                     method="bvls", tol=1e-14)
    logc1, c2, c3 = res.x
    shape = CobsShape(math.exp(logc1), max(float(c2), 0.0), max(float(c3), 0.0))
    pred = known + X @ res.x
    return shape, r_squared(np.log(m), pred)
