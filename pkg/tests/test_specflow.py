import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ietlab.cocycles import FunctionCocycle, birkhoff_sum, constant_cocycle, phi_a
from ietlab.specflow import (
    SpecialFlow, coboundary, deviation_exponent, ensemble_running_max, flow_integrate, geometric_times,
    mean_zero_power_model,
)


def wavy_roof(T):
    return FunctionCocycle(T, lambda x: 1.5 + 0.5 * np.sin(2 * np.pi * np.asarray(x, dtype=float)))


def test_roof_below_minimum_rejected(golden):
    with pytest.raises(ValueError):
        SpecialFlow(golden, wavy_roof(golden), 1.2)
    with pytest.raises(ValueError):
        SpecialFlow(golden, wavy_roof(golden), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0, 50), st.floats(0, 50))
def test_flow_identity(golden, x, t1, t2):
    F = SpecialFlow(golden, wavy_roof(golden), 0.9)
    a = F.advance(*F.advance(x, 0.0, t1), t2)
    b = F.advance(x, 0.0, t1 + t2)
    assert a[0] == pytest.approx(b[0], abs=1e-9) and a[1] == pytest.approx(b[1], abs=1e-9)


def test_roof_observable_integrates_to_time(golden):
    roof = wavy_roof(golden)
    F = SpecialFlow(golden, roof, 0.9)
    times = geometric_times(1.0, 1e5, 10)
    res = flow_integrate(F, roof, 0.3, times, r0=0.4)
    assert res.status == "ok"
    assert np.max(np.abs(res.values - times) / times) < 1e-9


def test_unit_roof_gives_birkhoff_sums(d4):
    F = SpecialFlow(d4, constant_cocycle(d4, 1.0), 1.0)
    f = phi_a(d4)
    ns = [1, 7, 100, 5000]
    res = flow_integrate(F, f, 0.3137, [float(n) for n in ns])
    for n, v in zip(ns, res.values):
        assert v == pytest.approx(birkhoff_sum(f, 0.3137, n), abs=1e-8)


def test_integral_additivity(golden):
    roof = wavy_roof(golden)
    F = SpecialFlow(golden, roof, 0.9)
    f = phi_a(golden)
    t1, t2 = 123.4, 567.8
    whole = flow_integrate(F, f, 0.21, [t1, t1 + t2]).values
    x, r = F.advance(0.21, 0.0, t1)
    rest = flow_integrate(F, f, x, [t2], r0=r).values[0]
    assert whole[1] == pytest.approx(whole[0] + rest, abs=1e-8)


def test_zero_mean_average_decays(golden):
    F = SpecialFlow(golden, constant_cocycle(golden, 1.0), 1.0)
    f = FunctionCocycle(golden, lambda x: np.cos(2 * np.pi * np.asarray(x, dtype=float)))
    times = np.array([1e3, 1e4, 1e5, 1e6, 1e7])
    res = flow_integrate(F, f, 0.1, times)
    avg = np.abs(res.values) / times
    assert avg[-1] < 1e-5 and avg[-1] < avg[0]


def test_exact_line_has_unit_slope():
    t = geometric_times(1e2, 1e7, 10)
    fit = deviation_exponent(t, t)
    assert fit.slope == pytest.approx(1.0, abs=1e-12) and fit.status == "ok"
    assert fit.ci_low == pytest.approx(1.0, abs=1e-12) and fit.ci_high == pytest.approx(1.0, abs=1e-12)


def test_short_range_is_flagged():
    t = geometric_times(1e2, 1e4, 10)
    assert deviation_exponent(t, np.sqrt(t)).status == "too_short"


def test_coboundary_slope_is_small(golden):
    F = SpecialFlow(golden, constant_cocycle(golden, 1.0), 1.0)
    times = geometric_times(1e2, 1e7, 10)
    res = flow_integrate(F, coboundary(golden), 0.1, times)
    assert deviation_exponent(res.times, res.running_max).slope <= 0.05


@pytest.fixture(scope="module")
def golden_antisym_slopes(golden):
    F = SpecialFlow(golden, constant_cocycle(golden, 1.0), 1.0)
    starts = np.random.default_rng(5).uniform(0, 1, 8)
    out = []
    for lo, hi in ((1e2, 1e6), (1e3, 1e7)):
        times = geometric_times(lo, hi, 10)
        out.append(deviation_exponent(times, ensemble_running_max(F, phi_a(golden), starts, times)).slope)
    return out


def test_antisymmetric_growth_slope_decreases_with_scale(golden_antisym_slopes):
    early, late = golden_antisym_slopes
    assert late < early < 1 / 3


@pytest.mark.xfail(strict=True, reason="running maxima grow like a power of log t; "
                   "the local log-log slope stays above 0.1 until t ~ 1e8 or later")
def test_antisymmetric_growth_slope_below_tenth(golden_antisym_slopes):
    assert golden_antisym_slopes[1] <= 0.1


def test_power_model_has_mean_zero(golden):
    from ietlab.cocycles import mean_value
    f = mean_zero_power_model(golden, 3, 0, 0)
    cuts = [float(v) for v in f.T.lefts[1:]]
    assert abs(mean_value(f, (0.0, f.total), cuts)) < 1e-10
    with pytest.raises(ValueError):
        mean_zero_power_model(golden, 3, 1, 0)


def test_running_max_is_monotone(d4):
    F = SpecialFlow(d4, wavy_roof(d4), 0.9)
    res = flow_integrate(F, phi_a(d4), 0.4, geometric_times(1, 1e5, 20))
    assert np.all(np.diff(res.running_max) >= 0)
    assert np.all(res.running_max >= np.abs(res.values))
    assert math.isfinite(res.running_max[-1])
