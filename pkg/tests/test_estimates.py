import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obslab.errors import NumericalGuardError
from obslab.grid import GridSpec, ObservationMask, SampledField, ThickSetSpec, make_mask, sup_norm
from obslab.estimates import (CobsShape, FitReport, ObsParams, cobs_form, concentrated_functions,
                              decay_bound, estimate_cobs, extremal_diss_functions, fit_affine,
                              fit_cobs_scaling, fit_decay, generate_test_functions, lemma_l1,
                              measure_diss, measure_lemma_l1, measure_up, r_squared, time_norm)
from obslab.semigroups import PropagatorConfig, gw_step
from obslab.spectral import (Projection, abs_wavenumber, apply_complement, apply_projection, chi, forward_transform,
                             multiplier_l1)


@pytest.fixture(scope="module")
def gu():
    return GridSpec(1, 16.0, 1024)


@pytest.fixture(scope="module")
def slab(gu):
    spec = ThickSetSpec.periodic_slab(2.0, (0.0, 1.0))
    return spec, make_mask(spec, gu)


# ----------------------------------------------------------------- parameters

def test_obs_params_validation():
    p = ObsParams.heat(T=2.0)
    assert p.blowup_exponent == 1.0
    with pytest.raises(ValueError):
        ObsParams(2.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ObsParams(1.0, 2.0, 1.0, 1.0, d2=0.5)
    with pytest.raises(ValueError):
        ObsParams(1.0, 2.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ObsParams(1.0, 2.0, 1.0, 1.0, r=0.5)
    with pytest.raises(ValueError):
        CobsShape(1.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        CobsShape(math.inf, 0.0, 0.0)


def test_cobs_form_examples():
    shape = CobsShape(2.0, 0.5, 0.1)
    p = ObsParams.heat()
    assert cobs_form(2.0, shape, p) == pytest.approx(2.0 * math.exp(0.5 / 2.0 + 0.2))
    p1 = ObsParams(1.0, 2.0, 1.0, 1.0, r=1.0)
    assert cobs_form(4.0, CobsShape(3.0, 0.0, 0.0), p1) == pytest.approx(3.0 / 4.0)
    with pytest.raises(ValueError):
        cobs_form(0.0, shape, p)


# ----------------------------------------------------------------- fitting

def test_r_squared_and_affine():
    x = np.arange(5.0)
    a, b, r2 = fit_affine(x, 1.0 + 2.0 * x)
    assert (a, b, r2) == pytest.approx((1.0, 2.0, 1.0))
    assert r_squared([1.0, 1.0], np.array([1.0, 1.0])) == 1.0
    assert r_squared([1.0, 1.0], np.array([0.0, 0.0])) == -math.inf
    with pytest.raises(ValueError):
        fit_affine([1.0, 1.0], [0.0, 1.0])


def test_fit_decay_envelope():
    u = np.linspace(0, 10, 11)
    noise = np.random.default_rng(0).uniform(-0.2, 0.2, 11)
    vals = 2.0 * np.exp(-0.5 * u + noise)
    fit = fit_decay(u, vals)
    assert fit["d3"] == pytest.approx(0.5, abs=0.05)
    assert np.all(vals <= decay_bound(fit["d2"], fit["d3"], u))
    assert fit["d2"] >= 1.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.0, 3.0), st.floats(0.0, 2.0))
def test_fit_cobs_recovers_synthetic(c1, c2, c3):
    p = ObsParams.heat()
    Ts = [0.25, 0.5, 1.0, 2.0, 3.0]
    shape = CobsShape(c1, c2, c3)
    vals = [cobs_form(T, shape, p) for T in Ts]
    fitted, r2 = fit_cobs_scaling(Ts, vals, p)
    for a, b in zip((fitted.C1, fitted.C2, fitted.C3), (c1, c2, c3)):
        assert a == pytest.approx(b, rel=1e-6, abs=1e-9)
    assert r2 == pytest.approx(1.0)


def test_fit_cobs_finite_r_and_permutation():
    p = ObsParams(1.0, 2.0, 1.0, 1.0, r=2.0)
    Ts = [0.3, 0.6, 1.2, 2.4]
    shape = CobsShape(1.5, 0.4, 0.2)
    vals = [cobs_form(T, shape, p) for T in Ts]
    a, _ = fit_cobs_scaling(Ts, vals, p)
    b, _ = fit_cobs_scaling(Ts[::-1], vals[::-1], p)
    assert a.C1 == pytest.approx(1.5, rel=1e-6)
    assert (a.C1, a.C2, a.C3) == pytest.approx((b.C1, b.C2, b.C3), rel=1e-12)


def test_fit_cobs_errors():
    p = ObsParams.heat()
    with pytest.raises(ValueError, match="4 distinct"):
        fit_cobs_scaling([1, 1, 2, 3], [1, 1, 1, 1], p)
    flat = ObsParams(1e-20, 1.0, 1.0, 1.0)           # T^-kappa is identically 1
    with pytest.raises(ValueError, match="degenerate"):
        fit_cobs_scaling([0.5, 1, 2, 3], [1, 2, 3, 4], flat)


def test_time_norm():
    a = [3.0, 1.0, 2.0, 5.0]
    assert time_norm(a, 0.5, math.inf) == 5.0
    assert time_norm(a, 0.5, 1.0) == pytest.approx(0.5 * 6.0)
    assert time_norm(a, 0.5, 2.0) == pytest.approx(math.sqrt(0.5 * 14.0))


# ----------------------------------------------------------------- corpora

def test_corpus_determinism_and_normalisation(g1):
    a = generate_test_functions("mixed", 6, 42, g1, lam_max=8.0)
    b = generate_test_functions("mixed", 6, 42, g1, lam_max=8.0)
    for f, h in zip(a, b):
        assert np.array_equal(f.values, h.values)
        assert abs(sup_norm(f) - 1.0) <= 1e-12
    c = generate_test_functions("mixed", 6, 43, g1, lam_max=8.0)
    assert not np.array_equal(a[0].values, c[0].values)


def test_band_limited_support(g1):
    for f in generate_test_functions("band_limited", 5, 1, g1, lam_max=5.0):
        F = forward_transform(f).coefficients
        assert np.max(np.abs(F[abs_wavenumber(g1) >= 5.0])) < 1e-14


def test_bumps_decay(g1):
    for f in generate_test_functions("gaussian_bumps", 10, 2, g1):
        edge = np.abs(f.values[[0, -1]])
        assert np.all(edge < 1e-12)


def test_corpus_errors(g1):
    with pytest.raises(ValueError):
        generate_test_functions("mixed", 0, 1, g1, lam_max=4.0)
    with pytest.raises(ValueError):
        generate_test_functions("noise", 1, 1, g1)
    with pytest.raises(ValueError):
        generate_test_functions("band_limited", 1, 1, g1)
    with pytest.raises(NumericalGuardError):
        generate_test_functions("band_limited", 1, 1, g1, lam_max=1e3)
    with pytest.raises(NumericalGuardError, match="100 tries"):
        generate_test_functions("gaussian_bumps", 1, 1, g1, width_range=(20.0, 30.0))


def test_concentrated_functions_are_low_band(gu, slab):
    _, mask = slab
    for f in concentrated_functions(mask, 6.0, count=2):
        p = apply_projection(Projection(6.0), f)
        assert np.max(np.abs(p.values - f.values)) <= 1e-10


# ----------------------------------------------------------------- UP

def test_up_full_mask(gu):
    full = make_mask(ThickSetSpec((2.0,), 1.0), gu)
    fns = generate_test_functions("mixed", 6, 5, gu, lam_max=16.0)
    rep = measure_up(full, [1, 2, 4, 8, 16], fns)
    assert all(c["ratio"] == 1.0 for c in rep.cells)
    assert abs(rep.fitted["d1"]) <= 1e-12


def test_up_slab_and_density_trend(gu):
    fns = generate_test_functions("mixed", 10, 3, gu, lam_max=16.0)
    lams = [2, 4, 8, 16]
    d1 = []
    for filled in ((0.0, 1.0), (0.0, 0.2)):
        spec = ThickSetSpec.periodic_slab(2.0, filled)
        mask = make_mask(spec, gu)
        corpus = list(fns)
        for lam in lams:
            corpus += concentrated_functions(mask, lam)
        rep = measure_up(mask, lams, corpus, thick_set=spec)
        assert math.isfinite(rep.r2)
        d1.append(rep.fitted["d1"])
    assert 0 < d1[0] < math.inf
    assert d1[1] >= d1[0]


def test_up_homogeneity_and_monotonicity(gu, slab):
    spec, mask = slab
    fns = generate_test_functions("mixed", 6, 9, gu, lam_max=16.0)
    base = measure_up(mask, [2, 4, 8], fns)
    scaled = measure_up(mask, [2, 4, 8], [-3.5 * f for f in fns])
    more = measure_up(mask, [2, 4, 8], fns + generate_test_functions("mixed", 6, 10, gu, lam_max=16.0))
    for a, b, c in zip(base.cells, scaled.cells, more.cells):
        assert b["ratio"] == pytest.approx(a["ratio"], rel=1e-12)
        assert c["ratio"] >= a["ratio"]


def test_up_rejects_thin_set(gu):
    box = ThickSetSpec((2.0,), 0.5, {"kind": "box", "lower": [-1.0], "upper": [1.0]})
    fns = generate_test_functions("band_limited", 2, 1, gu, lam_max=4.0)
    with pytest.raises(NumericalGuardError, match="not thick"):
        measure_up(make_mask(box, gu), [1, 2], fns, thick_set=box)


def test_up_annihilated(g1):
    # a single observed point where P f vanishes identically
    x = g1.axis()
    f = SampledField(g1, np.cos(np.pi * x / 12.0))  # exact DFT mode, zero at x = 6
    ind = np.zeros(512, dtype=bool)
    ind[np.argmin(np.abs(x - 6.0))] = True
    mask = ObservationMask(g1, ind)
    q = apply_projection(Projection(2.0), f)
    if q.values[ind][0] == 0.0:
        with pytest.raises(NumericalGuardError, match="annihilates"):
            measure_up(mask, [2.0, 3.0], [f])
    else:
        assert abs(q.values[ind][0]) < 1e-15


# ----------------------------------------------------------------- DISS

def test_extremal_functions_attain_young_bound(g1):
    cfg = PropagatorConfig("GW", g1)
    for lam, t in ((4.0, 0.1), (8.0, 0.05)):
        (f,) = extremal_diss_functions(g1, [lam], [t])
        rep = measure_diss(cfg, [lam, lam + 1], [t], [f])
        xi = abs_wavenumber(g1)
        sharp = multiplier_l1((1 - chi(lam, xi)) * np.exp(-t * xi ** 2), g1)
        assert rep.cells[0]["ratio"] == pytest.approx(sharp, rel=1e-10)


def test_diss_annihilates_low_band(g1):
    cfg = PropagatorConfig("GW", g1)
    fns = generate_test_functions("band_limited", 3, 4, g1, lam_max=2.0)
    for f in fns:
        assert sup_norm(apply_complement(Projection(4.0), gw_step(f, 0.1))) <= 1e-10
    # every cell drops below the floor, so nothing is left to fit
    with pytest.raises(NumericalGuardError, match="fewer than two"):
        measure_diss(cfg, [4.0, 8.0], [0.1, 0.2], fns)


def test_diss_small_time_bound(g1):
    cfg = PropagatorConfig("GW", g1)
    fns = generate_test_functions("mixed", 6, 8, g1, lam_max=30.0)
    young = multiplier_l1(Projection(4.0).multiplier(g1), g1)
    rep = measure_diss(cfg, [4.0, 8.0], [1e-4, 1e-3], fns)
    assert all(c["ratio"] <= 1 + young for c in rep.cells)


def test_diss_gw_fit(g1):
    cfg = PropagatorConfig("GW", g1)
    lams, times = [4, 8, 16], [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
    hl, ht = [6, 12], [0.075, 0.15, 0.25, 0.35, 0.45]
    fns = generate_test_functions("mixed", 10, 7, g1, lam_max=20.0)
    fns += extremal_diss_functions(g1, lams + hl, times + ht)
    rep = measure_diss(cfg, lams, times, fns, T=1.0, holdout_lambdas=hl, holdout_times=ht)
    assert rep.fitted["d3"] > 0
    assert rep.r2 >= 0.99
    assert rep.violations == 0
    assert rep.fitted["d2"] >= 1.0
    data = json.loads(rep.to_json())
    assert set(data) >= {"params", "cells", "fitted", "r2", "violations"}
    header = rep.to_csv().splitlines()[0].split(",")
    assert {"lambda", "t", "ratio", "bound", "violated"} <= set(header)


def test_diss_ou_runs(g1):
    cfg = PropagatorConfig("OU", g1)
    fns = generate_test_functions("gaussian_bumps", 6, 3, g1, width_range=(0.1, 0.5),
                                  center_range=4.0)
    rep = measure_diss(cfg, [2, 4, 6], [0.05, 0.1, 0.2], fns, T=1.0)
    assert rep.fitted["d3"] > 0


def test_diss_validation(g1):
    cfg = PropagatorConfig("GW", g1)
    f = generate_test_functions("gaussian_bumps", 1, 3, g1)
    with pytest.raises(ValueError):
        measure_diss(cfg, [4, 8], [0.1, 0.6], f, T=1.0)
    with pytest.raises(NumericalGuardError, match="Nyquist"):
        measure_diss(cfg, [4, 100], [0.1, 0.2], f)


def test_diss_homogeneity(g1):
    cfg = PropagatorConfig("GW", g1)
    fns = generate_test_functions("gaussian_bumps", 3, 6, g1, width_range=(0.1, 0.3))
    a = measure_diss(cfg, [4, 8], [0.01, 0.02], fns)
    b = measure_diss(cfg, [4, 8], [0.01, 0.02], [7.0 * f for f in fns])
    for x, y in zip(a.cells, b.cells):
        assert y["ratio"] == pytest.approx(x["ratio"], rel=1e-12)


# ----------------------------------------------------------------- lemma

def test_lemma_heldout(g1):
    rep = measure_lemma_l1([2, 4, 6, 8, 10], [0.1, 0.3, 0.5, 0.7, 0.9], g1,
                           [3, 4.5, 5.5, 7, 9], [0.2, 0.4, 0.6, 0.8, 0.85])
    assert rep.violations == 0
    assert rep.fitted["d3"] > 0
    v6 = lemma_l1(6.0, 0.5, g1)
    assert v6 <= float(decay_bound(rep.fitted["d2"], rep.fitted["d3"], 36 * 0.75))


def test_lemma_lambda_squared_scaling(g1):
    v2, v4, v8 = (lemma_l1(lam, 0.5, g1) for lam in (2.0, 4.0, 8.0))
    assert v2 > v4 > v8
    # decrement from 4 to 8 against the decrement from the unnormalised value 1 to v4
    assert 2.0 <= (math.log(v4) - math.log(v8)) / (-math.log(v4)) <= 4.0


def test_lemma_small_lambda_behaviour():
    g = GridSpec(1, 64.0, 8192)
    hs = lambda xi: np.exp(-0.75 * xi ** 2 / 4)
    assert multiplier_l1(hs, g) == pytest.approx(1.0, abs=1e-6)
    # removing a shrinking low band leaves a spread-out remainder of mass close to 1
    assert lemma_l1(0.1, 0.5, g) > 1.5


def test_lemma_guards(g1):
    with pytest.raises(ValueError):
        lemma_l1(2.0, 1.0, g1)
    with pytest.raises(NumericalGuardError):
        lemma_l1(100.0, 0.5, g1)


# ----------------------------------------------------------------- C_obs

def test_cobs_full_mask_contraction(gu):
    cfg = PropagatorConfig("GW", gu)
    full = make_mask(ThickSetSpec((2.0,), 1.0), gu)
    fns = generate_test_functions("mixed", 8, 1, gu, lam_max=10.0)
    assert estimate_cobs(cfg, full, 1.0, math.inf, fns) <= 1 + 1e-8


def test_cobs_thick_decreasing_and_homogeneous(gu, slab):
    _, mask = slab
    cfg = PropagatorConfig("GW", gu)
    fns = generate_test_functions("mixed", 10, 11, gu, lam_max=16.0, width_range=(0.05, 1.0))
    for lam in (4, 8, 16):
        fns += concentrated_functions(mask, lam)
    vals = [estimate_cobs(cfg, mask, T, math.inf, fns) for T in (0.5, 1.0, 2.0)]
    assert all(math.isfinite(v) for v in vals)
    assert vals[0] > vals[1] > vals[2]
    scaled = estimate_cobs(cfg, mask, 1.0, math.inf, [2.0 * f for f in fns])
    assert scaled == pytest.approx(vals[1], rel=1e-12)
    with pytest.raises(ValueError):
        estimate_cobs(cfg, mask, 1.0, math.inf, fns, n_steps=16)


def test_cobs_corpus_stability(gu, slab):
    _, mask = slab
    cfg = PropagatorConfig("GW", gu)
    small = generate_test_functions("mixed", 10, 21, gu, lam_max=16.0, width_range=(0.05, 1.0))
    large = generate_test_functions("mixed", 20, 21, gu, lam_max=16.0, width_range=(0.05, 1.0))
    a = estimate_cobs(cfg, mask, 1.0, 2.0, small)
    b = estimate_cobs(cfg, mask, 1.0, 2.0, large)
    assert b >= a * (1 - 1e-12)                  # the larger corpus contains the smaller
    assert abs(b - a) / a < 0.2


def test_fit_report_serialisation():
    rep = FitReport("x", {"a": [1, 2]}, [{"u": 1.0, "v": math.inf}], {"d": 1.0}, 0.5)
    data = json.loads(rep.to_json())
    assert data["cells"][0]["v"] == "inf"
    assert rep.to_csv() == "u,v\n1.0,inf\n"
