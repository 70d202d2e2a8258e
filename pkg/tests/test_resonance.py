# HeraldComb: runs in a standard CPython 3.9+ environment.
import math

import pytest
from hypothesis import given, strategies as st

from heraldcomb_errors import AnalysisUndefinedError, ConfigError
from HeraldComb_Correlator.resonance import resonance_from_streams, resonant_fraction, transmission_from_od

T_LOW = math.exp(-0.3)
T_HIGH = math.exp(-6.0)


def test_transmission_of_the_two_cells():
    assert transmission_from_od(0.3) == pytest.approx(0.7408, abs=1e-4)
    assert transmission_from_od(6.0) == pytest.approx(0.002479, abs=1e-6)
    with pytest.raises(ConfigError):
        transmission_from_od(-0.1)


def test_measured_ratio_of_eleven_point_six():
    report = resonant_fraction(1160, 100, T_LOW, T_HIGH)
    assert report.ratio == pytest.approx(11.6)
    assert report.fraction == pytest.approx(0.937, abs=1e-3)
    assert not report.clamped
    assert 0 < report.fraction_stderr < 0.01


@given(fraction=st.floats(0.01, 0.99), pairs=st.floats(1e3, 1e9))
def test_fraction_is_recovered_from_noiseless_counts(fraction, pairs):
    c_low = pairs * (fraction * T_LOW + 1 - fraction)
    c_high = pairs * (fraction * T_HIGH + 1 - fraction)
    assert resonant_fraction(c_low, c_high, T_LOW, T_HIGH).raw_fraction == pytest.approx(fraction, rel=1e-9)


def test_unphysical_ratio_is_clamped():
    below = resonant_fraction(90, 100, T_LOW, T_HIGH)
    assert below.fraction == 0.0 and below.clamped and below.raw_fraction < 0
    above = resonant_fraction(100_000, 100, T_LOW, T_HIGH)
    assert above.fraction == 1.0 and above.clamped


def test_undefined_and_invalid_inputs():
    with pytest.raises(AnalysisUndefinedError):
        resonant_fraction(10, 0, T_LOW, T_HIGH)
    with pytest.raises(ConfigError):
        resonant_fraction(-1, 10, T_LOW, T_HIGH)
    with pytest.raises(ConfigError):
        resonant_fraction(10, 10, T_HIGH, T_LOW)


def test_counts_from_streams(stream_factory):
    low = stream_factory([(1000, 0), (1010, 1), (5000, 0), (5015, 1), (9000, 0), (9005, 1)])
    high = stream_factory([(1000, 0), (1010, 1), (5000, 0), (9000, 0)])
    report = resonance_from_streams(low, high, 0, 1, 40, 0.3, 6.0)
    assert (report.c_low, report.c_high) == (3, 1)
    assert report.ratio == 3.0
    assert report.as_dict()["t_high"] == pytest.approx(T_HIGH)
