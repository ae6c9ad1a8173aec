import numpy as np
import pytest

from isoext.base_dynamics import CAT_MAP, RoofFunction, dyadic_to_float
from isoext.errors import ConfigMismatch, ValidationError
from isoext.extension import Cocycle, SkewProduct
from isoext.ergodic_lab.montecarlo import (SuspensionSystem, anosov_alternative_suite, birkhoff_average,
                                           correlation, product_circle_counterexample, sample_suspension)
from isoext.ergodic_lab.observables import Observable
from isoext.seeding import stream

ROOF = RoofFunction(1.0, ((1, 0, 0.3, 0.0),))
F = Observable(vertical=1)


def rotation_extension(alpha):
    return SkewProduct(CAT_MAP, Cocycle.constant("circle", alpha))


def test_zero_lag_is_squared_norm():
    u = Observable(char=(1, 2), vertical=1)
    c = correlation(rotation_extension(0.4), u, u, [0], 4000, 1)
    assert abs(c.values[0] - 1) <= 3 * c.stderr[0] + 1e-15
    assert np.all(c.stderr > 0)


def test_mode_orthogonality():
    sp = SkewProduct(CAT_MAP, Cocycle.circle(0.9, [(1, 0, 0.3, 0.0)]))
    for k, kk in [(1, 2), (1, -1), (0, 3)]:
        c = correlation(sp, Observable(vertical=k), Observable(vertical=kk), [0], 20000, 7)
        assert abs(c.values[0]) < 3 * c.stderr[0]


def test_cat_map_character_decays_exactly():
    # e_n o T = e_{M^T n}, so C_t(e_(1,0), e_(1,0)) = 0 for every t >= 1
    u = Observable.character(1, 0)
    c = correlation(CAT_MAP, u, u, [0, 1, 2, 3, 5, 8], 20000, 11)
    assert abs(c.values[0] - 1) < 1e-12
    assert np.all(np.abs(c.values[1:]) < 3 * c.stderr[1:])
    # the push-forward oracle is exact: estimates are sample means of characters with frequency
    # M^T^t n - n, whose sampling spread is 1/sqrt(n)
    assert np.all(np.abs(c.stderr[1:] - 1 / np.sqrt(20000)) < 1e-3)


def test_correlation_deterministic_and_worker_independent():
    u = Observable(char=(1, 0), vertical=1)
    sp = rotation_extension(0.3)
    a = correlation(sp, u, u, [0, 1, 4], 20000, 42, workers=1)
    b = correlation(sp, u, u, [0, 1, 4], 20000, 42, workers=1)
    c = correlation(sp, u, u, [0, 1, 4], 20000, 42, workers=3)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.stderr, b.stderr)
    assert np.array_equal(a.values, c.values) and np.array_equal(a.stderr, c.stderr)
    d = correlation(sp, u, u, [0, 1, 4], 20000, 43)
    assert not np.array_equal(a.values, d.values)


def test_correlation_preconditions():
    with pytest.raises(ValidationError):
        correlation(CAT_MAP, Observable(), Observable(), [0, 1], 100, 0, require_zero_mean=True)
    with pytest.raises(ValidationError):
        correlation(CAT_MAP, F, F, [0.5], 100, 0)
    with pytest.raises(ValidationError):
        correlation(CAT_MAP, F, F, [0], 1, 0)


def test_suspension_height_law():
    # under the suspension measure E[h] = int r^2 / 2 / int r = (1 + 0.3^2 / 2) / 2
    K, h, _ = sample_suspension(SuspensionSystem(CAT_MAP, ROOF), stream(5, "test", 0), 200000)
    r = ROOF.poly(dyadic_to_float(K))
    assert np.all((h >= 0) & (h < r))
    assert abs(h.mean() - (1 + 0.045) / 2) < 4 * h.std() / np.sqrt(len(h))


def test_birkhoff_constant_observable():
    est, spread = birkhoff_average(rotation_extension(0.7), Observable(), 1000, 8, 0)
    assert est == 1 and spread == 0


def test_birkhoff_ergodic_rotation_extension():
    r = birkhoff_average(rotation_extension(2 * np.pi * 0.6180339887), F, 100000, 32, 3)
    assert abs(r.estimate) < 3 * r.spread
    assert r.spread < 0.02


def test_birkhoff_frozen_fiber_does_not_average():
    # alpha = 0: the time average of e^{i theta} is e^{i theta_0}; its spread is 1/sqrt 2
    spreads = [birkhoff_average(rotation_extension(0.0), F, T, 32, 3).spread for T in (1000, 10000)]
    assert all(0.5 < s < 0.9 for s in spreads)
    assert abs(spreads[0] - spreads[1]) < 1e-12


def test_birkhoff_rejects_short_horizon():
    with pytest.raises(ValidationError):
        birkhoff_average(CAT_MAP, F, 0.5, 4, 0)


def test_flow_counterexample():
    times = [0, np.pi, 2.0, 7.5]
    r = product_circle_counterexample(SuspensionSystem(CAT_MAP, ROOF), times, 20000, 5, birkhoff_T=2e4,
                                      n_orbits=16)
    v = r.series.values
    assert abs(v[0] - 1) < 1e-12
    assert abs(v[1] + 1) < 1e-12                   # C_pi = -1
    assert np.allclose(np.abs(v), 1, atol=1e-12)
    assert r.passed and r.version == "flow" and r.rate == 1.0


def test_discrete_counterexample():
    r = product_circle_counterexample(CAT_MAP, [0, 1, 2, 5], 20000, 5, alpha=0.7, birkhoff_T=2e4, n_orbits=16)
    assert np.allclose(r.series.values, np.exp(0.7j * np.array([0, 1, 2, 5])), atol=1e-12)
    assert r.passed


def test_counterexample_needs_circle_product():
    sphere = SkewProduct(CAT_MAP, Cocycle.constant("rotation", (0.0, 0.0, 0.5)), fiber="sphere")
    with pytest.raises(ConfigMismatch):
        product_circle_counterexample(sphere, [0, 1], 100, 0)
    with pytest.raises(ConfigMismatch):
        product_circle_counterexample(SkewProduct(CAT_MAP, Cocycle.circle(0.5, [(1, 0, 0.3, 0.0)])), [0], 100, 0)
    with pytest.raises(ValidationError):
        product_circle_counterexample(SuspensionSystem(CAT_MAP, RoofFunction(1.0, ())), [0], 100, 0)


def test_anosov_alternative_small():
    rep = anosov_alternative_suite(CAT_MAP, (RoofFunction(1.3, ()), ROOF), np.linspace(0, 50, 11), 20000, 9)
    t, ch, c0 = rep.half_period
    assert abs(t - 0.65) < 1e-12 and abs(ch + c0) < 1e-9
    assert rep.non_mixing_witness and rep.decayed
    assert rep.verdicts == ("not mixing", "mixing")
    with pytest.raises(ValidationError):
        anosov_alternative_suite(CAT_MAP, (ROOF, ROOF), [1.0], 100, 0)
