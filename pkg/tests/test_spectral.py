import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obslab.errors import NumericalGuardError
from obslab.grid import GridSpec, SampledField, gaussian_kernel, sup_norm
from obslab.spectral import (Projection, SpectrumField, abs_wavenumber, apply_complement,
                             apply_projection, chi, cutoff_kernel_l1, eta, forward_transform,
                             inverse_transform, multiplier_l1, nyquist, smooth_step)


def test_eta_examples():
    assert eta(0.25) == 1.0
    assert eta(1.5) == 0.0
    assert eta(0.75) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        eta(-0.1)


def test_eta_invariants_on_dense_sample():
    r = np.linspace(0, 2, 10_000)
    v = eta(r)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(v[r <= 0.5] == 1.0)
    assert np.all(v[r >= 1.0] == 0.0)
    mid = (r >= 0.5) & (r <= 1.0)
    assert np.all(np.diff(v[mid]) <= 0)


def test_eta_smoothness_finite_differences():
    h = 1e-4
    r = np.arange(0.4, 1.1, h)
    v = eta(r)
    d1 = (v[2:] - v[:-2]) / (2 * h)
    d2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / h ** 2
    assert np.max(np.abs(d1)) < 10
    assert np.max(np.abs(d2)) < 200
    # no jump between neighbouring samples anywhere
    assert np.max(np.abs(np.diff(v))) < 20 * h


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0))
def test_smooth_step_symmetry(x):
    assert smooth_step(x) + smooth_step(1 - x) == pytest.approx(1.0, abs=1e-14)


def test_chi_scaling():
    xi = np.linspace(0, 10, 101)
    assert np.array_equal(chi(2.0, xi), eta(xi / 2.0))


def test_impulse_has_flat_spectrum(g2):
    v = np.zeros(g2.shape)
    v[g2.origin_index()] = 1.0
    F = forward_transform(SampledField(g2, v))
    assert np.allclose(F.coefficients, g2.cell_volume, rtol=0, atol=1e-15)


def test_round_trip(g1, g2, rng):
    for g in (g1, g2):
        for _ in range(100 if g is g1 else 20):
            v = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
            back = inverse_transform(forward_transform(SampledField(g, v))).values
            assert np.max(np.abs(back - v)) <= 1e-12 * np.max(np.abs(v))


def test_gaussian_kernel_transform(g1):
    s = 0.6
    k = gaussian_kernel(g1, (1 - s * s) / 4)
    F = forward_transform(k)
    xi = abs_wavenumber(g1)
    low = xi <= np.pi / (2 * g1.spacing)
    expected = np.exp(-(1 - s * s) * xi ** 2 / 4)
    assert np.max(np.abs(F.coefficients[low] - expected[low])) <= 1e-8


def _spectrum_support_max(f, lam):
    F = forward_transform(f)
    return np.max(np.abs(F.coefficients[abs_wavenumber(f.grid) >= lam]), initial=0.0)


def test_projection_support(g1, g2, rng):
    for g in (g1, g2):
        for lam in (1.0, 2.0, 4.0, 8.0):
            f = SampledField(g, rng.standard_normal(g.shape))
            q = apply_projection(Projection(lam), f)
            assert _spectrum_support_max(q, lam) < 1e-14


def _band_limited(g, lam, rng):
    F = forward_transform(SampledField(g, rng.standard_normal(g.shape))).coefficients
    F = np.where(abs_wavenumber(g) <= lam, F, 0.0)
    return inverse_transform(SpectrumField(g, F), real=True)


def test_projection_identity_on_low_band(g1, g2, rng):
    for g in (g1, g2):
        for lam in (2.0, 4.0, 8.0):
            f = _band_limited(g, lam / 2, rng)
            assert np.max(np.abs(apply_projection(Projection(lam), f).values - f.values)) <= 1e-10
            assert sup_norm(apply_complement(Projection(lam), f)) <= 1e-10


def test_projection_not_idempotent_in_general(g1, rng):
    f = SampledField(g1, rng.standard_normal(512))
    p = Projection(4.0)
    once = apply_projection(p, f)
    twice = apply_projection(p, once)
    assert np.max(np.abs(twice.values - once.values)) > 1e-6


def test_projection_linearity(g1, rng):
    p = Projection(3.0)
    f = SampledField(g1, rng.standard_normal(512))
    h = SampledField(g1, rng.standard_normal(512))
    a, b = 2.5, -0.75
    lhs = apply_projection(p, a * f + b * h).values
    rhs = a * apply_projection(p, f).values + b * apply_projection(p, h).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_projection_young_bound(g1, rng):
    bound = cutoff_kernel_l1(1.0, GridSpec(1, 256.0, 2 ** 16))
    for lam in (2.0, 4.0, 8.0):
        for _ in range(100):
            f = SampledField(g1, rng.standard_normal(512))
            assert sup_norm(apply_projection(Projection(lam), f)) <= bound * sup_norm(f) * (1 + 1e-3)


def test_nyquist_guard(g1):
    with pytest.raises(NumericalGuardError, match="cutoff exceeds Nyquist"):
        Projection(nyquist(g1)).multiplier(g1)
    with pytest.raises(ValueError):
        Projection(0.0)


def test_multiplier_l1_examples(g1):
    assert abs(multiplier_l1(lambda xi: np.exp(-0.5 * xi ** 2), g1) - 1.0) <= 1e-6
    assert multiplier_l1(np.zeros(g1.shape), g1) == 0.0
    with pytest.raises(NumericalGuardError, match="aliasing risk"):
        multiplier_l1(np.ones(g1.shape), g1)


def test_cutoff_kernel_scale_invariance():
    g = GridSpec(1, 256.0, 2 ** 20)
    vals = [cutoff_kernel_l1(lam, g) for lam in (1.0, 2.0, 4.0, 8.0)]
    assert max(vals) - min(vals) <= 1e-6
