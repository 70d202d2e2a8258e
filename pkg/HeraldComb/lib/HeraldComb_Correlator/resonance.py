# HeraldComb: runs in a standard CPython 3.9+ environment.
"""Fraction of signal photons resonant with the absorption line, from two optical densities."""

import logging
import math
from dataclasses import asdict, dataclass

from heraldcomb_errors import AnalysisUndefinedError, ConfigError
from HeraldComb_Correlator.histogram import window_coincidences

logger = logging.getLogger('HeraldComb.Correlator')


@dataclass(frozen=True)
class ResonanceReport:
    c_low: int
    c_high: int
    ratio: float
    t_low: float
    t_high: float
    fraction: float
    raw_fraction: float
    clamped: bool
    fraction_stderr: float

    def as_dict(self):
        return asdict(self)


def transmission_from_od(od):
    """Resonant transmission e^-od of a cell with optical density ``od``."""
    if not od >= 0:
        raise ConfigError("optical density must be >= 0, got {!r}".format(od))
    return math.exp(-od)


def resonant_fraction(c_low, c_high, t_low, t_high, tolerance=1e-12):
    """Resonant fraction f from raw in-window coincidences at two ODs.

    The coincidences scale as f*T + (1 - f) at resonant transmission T, so the
    ratio R = c_low/c_high gives f = (R - 1) / (R (1 - t_high) - (1 - t_low)).
    The value is clamped to [0, 1]; ``clamped`` records when that happened.
    """
    if c_high <= 0:
        raise AnalysisUndefinedError("resonant fraction undefined: no coincidences at high OD")
    if c_low < 0:
        raise ConfigError("coincidence counts must be >= 0")
    if not 0.0 <= t_high < t_low <= 1.0:
        raise ConfigError("transmissions must satisfy 0 <= t_high < t_low <= 1, got {!r}, {!r}".format(t_high, t_low))

    ratio = c_low / c_high
    denominator = ratio * (1.0 - t_high) - (1.0 - t_low)
    if abs(denominator) <= tolerance * max(1.0, ratio):
        raise AnalysisUndefinedError("resonant fraction undefined: degenerate transmissions for ratio {:.6g}".format(ratio))
    raw = (ratio - 1.0) / denominator
    fraction = min(max(raw, 0.0), 1.0)

    relative = math.sqrt((1.0 / c_low if c_low > 0 else 0.0) + 1.0 / c_high)
    stderr = abs((t_low - t_high) / denominator ** 2) * ratio * relative
    report = ResonanceReport(int(c_low), int(c_high), ratio, t_low, t_high, fraction, raw, fraction != raw, stderr)
    if report.clamped:
        logger.warning("Resonant fraction %.4g clamped to %.4g.", raw, fraction)
    return report


def resonance_from_streams(low_tags, high_tags, ch_ref, ch_sig, window_ps, od_low, od_high):
    """Count in-window coincidences of two runs and estimate the resonant fraction."""
    c_low = window_coincidences(low_tags, ch_ref, ch_sig, window_ps)
    c_high = window_coincidences(high_tags, ch_ref, ch_sig, window_ps)
    logger.info("In-window coincidences: %d at OD %.3g, %d at OD %.3g.", c_low, od_low, c_high, od_high)
    return resonant_fraction(c_low, c_high, transmission_from_od(od_low), transmission_from_od(od_high))
