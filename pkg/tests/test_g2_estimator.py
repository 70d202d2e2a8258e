# HeraldComb: runs in a standard CPython 3.9+ environment.
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heraldcomb_errors import AnalysisUndefinedError, ConfigError
from HeraldComb_Correlator.g2_estimator import (
    DEFAULT_EXTRAPOLATION_WINDOWS_PS, OCCUPANCY_FORM, extrapolate_n23, extrapolate_occupancy, extrapolation_windows,
    heralded_g2,
)
from HeraldComb_Correlator.tag_io import TagStream


def perfect_pairs(n_pairs=500, spacing_ps=100_000_000, delay_ps=3_000):
    """Each trigger is followed by exactly one photon, alternating between the arms."""
    triggers = np.arange(1, n_pairs + 1, dtype=np.uint64) * spacing_ps
    photons = triggers + np.uint64(delay_ps)
    arms = np.where(np.arange(n_pairs) % 2 == 0, 1, 2).astype(np.uint8)
    timestamps = np.concatenate((triggers, photons))
    channels = np.concatenate((np.zeros(n_pairs, np.uint8), arms))
    order = np.lexsort((channels, timestamps))
    return TagStream(timestamps[order], channels[order], 3)


def poisson_channels(rates_per_s, duration_s, seed):
    rng = np.random.default_rng(seed)
    duration_ps = int(duration_s * 1e12)
    timestamps, channels = [], []
    for channel, rate in enumerate(rates_per_s):
        ts = rng.integers(0, duration_ps, rng.poisson(rate * duration_s))
        timestamps.append(ts.astype(np.uint64))
        channels.append(np.full(ts.size, channel, np.uint8))
    timestamps, channels = np.concatenate(timestamps), np.concatenate(channels)
    order = np.lexsort((channels, timestamps))
    return TagStream(timestamps[order], channels[order], len(rates_per_s))


def test_default_window_ladder():
    assert DEFAULT_EXTRAPOLATION_WINDOWS_PS == tuple(range(200_000, 2_000_001, 200_000))
    assert extrapolation_windows(100_000, 200_000, 200_000) == ()
    with pytest.raises(ConfigError):
        extrapolation_windows(step_ps=0)


@pytest.mark.parametrize("windows", [(), DEFAULT_EXTRAPOLATION_WINDOWS_PS])
def test_perfect_pairs_give_zero(windows):
    report = heralded_g2(perfect_pairs(), 0, 1, 2, extrapolation_windows_ps=windows)
    assert report.n1 == 500 and report.n2 == 250 and report.n3 == 250
    assert report.n23_direct == 0
    assert report.g2_value == 0.0
    assert report.suppression_factor == math.inf


def test_poisson_light_gives_unity_in_direct_mode():
    stream = poisson_channels((1e4, 1e6, 1e6), 1.0, seed=3)
    report = heralded_g2(stream, 0, 1, 2, window_ps=1_000_000, extrapolation_windows_ps=(), bunching_factor=1.0)
    assert report.fit_form == "direct"
    assert report.n23 == report.n23_direct
    assert abs(report.g2_value - 1.0) < 3 * report.g2_stderr


def test_counts_follow_inclusive_windows(stream_factory):
    stream = stream_factory([(1000, 0), (1020, 1), (1021, 2), (9000, 0), (9020, 1)], channel_count=3)
    with pytest.raises(AnalysisUndefinedError):
        heralded_g2(stream, 0, 1, 2, window_ps=40, extrapolation_windows_ps=())
    report = heralded_g2(stream, 0, 1, 2, window_ps=42, extrapolation_windows_ps=(), bunching_factor=1.0)
    assert (report.n1, report.n2, report.n3, report.n23_direct) == (2, 2, 1, 1)
    assert report.g2_value == pytest.approx(1 * 2 / (2 * 1))


@given(slope=st.floats(0.0, 50.0), curvature=st.floats(0.0, 50.0))
def test_linear_quadratic_fit_is_exact_on_model_data(slope, curvature):
    windows = np.array(DEFAULT_EXTRAPOLATION_WINDOWS_PS)
    w_us = windows / 1e6
    counts = slope * w_us + curvature * w_us ** 2
    fit = extrapolate_n23(windows, counts, 40_000, "linear-quadratic")
    assert fit.estimate == pytest.approx(slope * 0.04 + curvature * 0.0016, rel=1e-7, abs=1e-9)
    assert fit.coefficients == pytest.approx((slope, curvature), rel=1e-7, abs=1e-7)


def test_quadratic_and_linear_forms():
    windows = np.array(DEFAULT_EXTRAPOLATION_WINDOWS_PS)
    w_us = windows / 1e6
    quadratic = extrapolate_n23(windows, 3.0 + 5.0 * w_us ** 2, 40_000, "quadratic")
    assert quadratic.estimate == pytest.approx(3.0 + 5.0 * 0.0016, rel=1e-9)
    linear = extrapolate_n23(windows, 7.0 * w_us, 40_000, "linear")
    assert linear.estimate == pytest.approx(0.28, rel=1e-9)
    assert linear.variance > 0


def test_fit_validation():
    with pytest.raises(ConfigError):
        extrapolate_n23((1, 2), (1, 2), 1, "cubic")
    with pytest.raises(ConfigError):
        extrapolate_n23((1,), (1,), 1, "linear-quadratic")
    with pytest.raises(ConfigError):
        extrapolate_n23((1, 1), (1, 2), 1, "linear")
    with pytest.raises(ConfigError):
        extrapolate_n23((1, 2), (1,), 1, "linear")


def test_extrapolated_report_uses_the_bunching_factor():
    stream = poisson_channels((1e4, 2e5, 2e5), 1.0, seed=8)
    raw = heralded_g2(stream, 0, 1, 2, bunching_factor=1.0)
    bunched = heralded_g2(stream, 0, 1, 2, bunching_factor=2.0)
    assert raw.n23_by_window == bunched.n23_by_window
    assert len(raw.n23_by_window) == len(DEFAULT_EXTRAPOLATION_WINDOWS_PS)
    assert list(raw.n23_by_window) == sorted(raw.n23_by_window)
    assert bunched.n23 == pytest.approx(min(2.0 * raw.n23, raw.n2, raw.n3))
    assert bunched.g2_stderr == pytest.approx(2.0 * raw.g2_stderr)


def test_report_record():
    report = heralded_g2(perfect_pairs(), 0, 1, 2, extrapolation_windows_ps=())
    record = report.as_dict()
    assert record["g2_value"] == 0.0
    assert record["sigmas_below_classical"] == pytest.approx(1.0 / report.g2_stderr)
    assert record["fit_form"] == "direct"


def test_undefined_and_invalid_inputs(stream_factory):
    stream = stream_factory([(1000, 0), (1010, 1)], channel_count=3)
    with pytest.raises(AnalysisUndefinedError):
        heralded_g2(stream, 0, 1, 2, extrapolation_windows_ps=())
    no_triggers = stream_factory([(1010, 1), (1020, 2)], channel_count=3)
    with pytest.raises(AnalysisUndefinedError):
        heralded_g2(no_triggers, 0, 1, 2)
    with pytest.raises(ConfigError):
        heralded_g2(stream, 0, 1, 1)
    with pytest.raises(ConfigError):
        heralded_g2(stream, 0, 1, 3)
    with pytest.raises(ConfigError):
        heralded_g2(stream, 0, 1, 2, window_ps=0)
    with pytest.raises(ConfigError):
        heralded_g2(stream, 0, 1, 2, bunching_factor=0.0)


def occupancy_ladder(n1, miss_a, rate_a, miss_b, rate_b, joint_rate, windows=DEFAULT_EXTRAPOLATION_WINDOWS_PS):
    w_us = np.asarray(windows) / 1e6
    counts_a = n1 * (1.0 - miss_a * np.exp(-rate_a * w_us))
    counts_b = n1 * (1.0 - miss_b * np.exp(-rate_b * w_us))
    joint = n1 * (1.0 - miss_a * np.exp(-rate_a * w_us) - miss_b * np.exp(-rate_b * w_us)
                  + (miss_a + miss_b - 1.0) * np.exp(-joint_rate * w_us))
    return joint, counts_a, counts_b


@pytest.mark.parametrize("miss_a, miss_b, joint_rate", [(1.0, 1.0, 0.55), (0.9, 0.85, 0.55), (0.9, 0.85, 0.8)])
def test_occupancy_fit_is_exact_on_model_data(miss_a, miss_b, joint_rate):
    n1 = 1e6
    joint, counts_a, counts_b = occupancy_ladder(n1, miss_a, 0.3, miss_b, 0.25, joint_rate)
    fit = extrapolate_occupancy(DEFAULT_EXTRAPOLATION_WINDOWS_PS, joint, 40_000, n1, counts_a, counts_b)
    expected, *_ = occupancy_ladder(n1, miss_a, 0.3, miss_b, 0.25, joint_rate, windows=(40_000,))
    assert fit.fit_form == OCCUPANCY_FORM
    assert fit.coefficients == pytest.approx((miss_a, 0.3, miss_b, 0.25, joint_rate), rel=1e-6)
    assert fit.estimate == pytest.approx(float(expected[0]), rel=1e-6)
    assert 0 < fit.variance < math.inf


def test_polynomial_forms_overshoot_saturated_windows():
    n1 = 1e6
    joint, counts_a, counts_b = occupancy_ladder(n1, 1.0, 0.3, 1.0, 0.25, 0.55)
    exact = n1 * (1.0 - math.exp(-0.3 * 0.04)) * (1.0 - math.exp(-0.25 * 0.04))
    occupancy = extrapolate_n23(DEFAULT_EXTRAPOLATION_WINDOWS_PS, joint, 40_000, OCCUPANCY_FORM, n1=n1,
                                arm_counts=(counts_a, counts_b))
    polynomial = extrapolate_n23(DEFAULT_EXTRAPOLATION_WINDOWS_PS, joint, 40_000, "linear-quadratic")
    assert occupancy.estimate == pytest.approx(exact, rel=1e-6)
    assert polynomial.estimate > 1.5 * exact


def test_occupancy_fit_validation():
    joint, counts_a, counts_b = occupancy_ladder(1e4, 1.0, 0.3, 1.0, 0.25, 0.55)
    with pytest.raises(ConfigError):
        extrapolate_n23(DEFAULT_EXTRAPOLATION_WINDOWS_PS, joint, 40_000, OCCUPANCY_FORM)
    with pytest.raises(ConfigError):
        extrapolate_occupancy((200_000,), joint[:1], 40_000, 1e4, counts_a[:1], counts_b[:1])
    with pytest.raises(ConfigError):
        extrapolate_occupancy(DEFAULT_EXTRAPOLATION_WINDOWS_PS, joint, 40_000, 0, counts_a, counts_b)
    with pytest.raises(AnalysisUndefinedError):
        extrapolate_occupancy(DEFAULT_EXTRAPOLATION_WINDOWS_PS, joint, 40_000, 1e4, np.full(10, 1e4), counts_b)


def test_poisson_light_gives_unity_through_the_occupancy_extrapolation():
    stream = poisson_channels((2e4, 2e5, 2e5), 10.0, seed=21)
    report = heralded_g2(stream, 0, 1, 2, fit_form=OCCUPANCY_FORM, bunching_factor=1.0)
    assert report.fit_form == OCCUPANCY_FORM
    assert len(report.fit_coefficients) == 5
    assert report.fit_coefficients[4] == pytest.approx(report.fit_coefficients[1] + report.fit_coefficients[3],
                                                       rel=0.05)
    assert abs(report.g2_value - 1.0) < 3 * report.g2_stderr
    assert report.g2_stderr < 1.0
