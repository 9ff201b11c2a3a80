import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from predalloc.traffic import (N_ENHANCEMENT, QoSExponent, QoSInfeasibleArrival, QoSSpec, RTArrivalSpec, VideoTrace,
                               effective_bandwidth, read_video_trace, reduce_quality, sample_arrivals,
                               solve_qos_exponent, synthetic_video, write_video_trace)

SPEC = RTArrivalSpec(rate=500.0, size_rate=1 / 4000)


# -- effective bandwidth ------------------------------------------------------------

def test_effective_bandwidth_small_theta_is_mean_rate():
    assert effective_bandwidth(SPEC, 1e-12) == pytest.approx(2_000_000.0, rel=1e-7)


def test_effective_bandwidth_closed_form_value():
    assert effective_bandwidth(SPEC, 1.25e-4) == pytest.approx(4_000_000.0, rel=1e-12)


def test_effective_bandwidth_monte_carlo_mgf(rng):
    # E_B(theta) = ln E[exp(theta A(t))] / (theta t) for the bits A(t) arriving in t seconds
    theta, t = 2e-5, 0.2
    n = 200_000
    counts = rng.poisson(SPEC.rate * t, size=n)
    bits = np.array([rng.exponential(4000.0, c).sum() for c in counts[:n]])
    eb_mc = math.log(np.mean(np.exp(theta * bits - theta * bits.mean()))) / (theta * t) + bits.mean() / t
    assert eb_mc == pytest.approx(effective_bandwidth(SPEC, theta), rel=0.01)


@given(st.floats(1e-9, 2.49e-4), st.floats(1e-9, 2.49e-4))
def test_effective_bandwidth_increasing(a, b):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-12:
        return
    assert effective_bandwidth(SPEC, lo) < effective_bandwidth(SPEC, hi)


def test_effective_bandwidth_divergence():
    with pytest.raises(QoSInfeasibleArrival):
        effective_bandwidth(SPEC, 2.5e-4)


# -- QoS exponent ------------------------------------------------------------------

def test_qos_exponent_for_default_traffic():
    qos = QoSSpec(0.05, 0.02)
    out = solve_qos_exponent(SPEC, qos)
    target = math.log(50) / 0.05
    oracle = optimize.brentq(lambda th: 500 * th / (2.5e-4 - th) - target, 1e-15, 2.5e-4 * (1 - 1e-12),
                             xtol=1e-300, rtol=1e-15)
    assert out.theta == pytest.approx(oracle, rel=1e-12)
    assert abs(500 * out.theta / (2.5e-4 - out.theta) - target) <= 1e-10 * target
    assert out.beta == pytest.approx(out.theta * 5e-3 * 15e3 / math.log(2), rel=1e-14)
    # effective bandwidth at the solved exponent
    assert effective_bandwidth(SPEC, out.theta) == pytest.approx(math.log(50) / (0.05 * out.theta), rel=1e-10)


def test_qos_exponent_monotone_in_target():
    thetas = [solve_qos_exponent(SPEC, QoSSpec(0.05, e)).theta for e in (0.9, 0.5, 0.1, 0.02, 0.001)]
    assert np.all(np.diff(thetas) > 0)
    assert solve_qos_exponent(SPEC, QoSSpec(0.05, 1 - 1e-9)).theta < 1e-12


def test_qos_spec_validation():
    with pytest.raises(ValueError):
        QoSSpec(0.05, 1.5)
    with pytest.raises(ValueError):
        QoSSpec(0.0, 0.02)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert not QoSSpec(2.0, 0.02).check_timescales(5e-3, 1.0)
        assert w
    assert QoSSpec().check_timescales(5e-3, 1.0)


def test_qos_exponent_dataclass():
    assert QoSExponent(1.0, 2.0).beta == 2.0


# -- arrivals --------------------------------------------------------------------------

def test_arrival_moments(rng):
    n = 1_000_000
    arr = sample_arrivals(SPEC, 5e-3, rng, n)
    assert arr.counts.mean() == pytest.approx(2.5, rel=0.005)
    bits = arr.bits_per_slot
    assert bits.mean() == pytest.approx(500 * 5e-3 * 4000, rel=0.005)
    assert bits.var() == pytest.approx(500 * 5e-3 * 2 * 4000**2, rel=0.02)


def test_arrivals_are_ordered_within_slots(rng):
    arr = sample_arrivals(SPEC, 5e-3, rng, 1000)
    assert np.all(np.diff(arr.times) >= 0)
    slot_of = np.floor(arr.times / 5e-3).astype(int)
    np.testing.assert_array_equal(np.bincount(slot_of, minlength=1000), arr.counts)
    assert arr.sizes.size == arr.counts.sum()


# -- video ---------------------------------------------------------------------------------

def test_quality_levels(rng):
    v = synthetic_video(30, rng)
    assert np.array_equal(reduce_quality(v, N_ENHANCEMENT).sizes, v.sizes)
    np.testing.assert_array_equal(reduce_quality(v, 0).sizes, v.layers[:, 0])
    sizes = np.array([reduce_quality(v, lv).sizes for lv in range(N_ENHANCEMENT + 1)])
    assert np.all(np.diff(sizes, axis=0) > 0)
    with pytest.raises(ValueError):
        reduce_quality(v, 6)


def test_synthetic_video_rates(rng):
    v = synthetic_video(4000, rng)
    assert v.layers[:, 0].mean() == pytest.approx(800e3, rel=0.01)
    assert v.layers[:, 1:].mean() == pytest.approx(240e3, rel=0.01)
    assert np.all(v.layers[:, 0] >= 0.8 * 800e3) and np.all(v.layers[:, 0] <= 1.2 * 800e3)


def test_video_trace_validation():
    with pytest.raises(ValueError):
        VideoTrace(np.ones((3, 4)))
    with pytest.raises(ValueError):
        VideoTrace(-np.ones((3, 6)))


def test_video_roundtrip(tmp_path, rng):
    v = synthetic_video(12, rng)
    path = tmp_path / "video.csv"
    write_video_trace(path, v)
    np.testing.assert_array_equal(read_video_trace(path).layers, v.layers)
