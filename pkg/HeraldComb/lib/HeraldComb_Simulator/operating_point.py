# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Closed-form expectations for a SimConfig: rates, resonant fraction, g2 and histograms.

These are the same quantities the Monte Carlo chain produces, computed from
the configuration alone. Detected delays within a coincidence window are
approximated by the bare correlation (jitter of a few hundred ps is small next
to the tens-of-ns windows); ``expected_histogram`` includes jitter and
quantization explicitly.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
from scipy import optimize, stats

from heraldcomb_errors import AnalysisUndefinedError, ConfigError
from HeraldComb_Correlator.g2_estimator import (
    DEFAULT_BUNCHING_FACTOR, DEFAULT_EXTRAPOLATION_WINDOWS_PS, DEFAULT_FIT_FORM, DEFAULT_WINDOW_PS, extrapolate_n23,
)
from HeraldComb_Simulator.configs import Scenario
from HeraldComb_Simulator.generator import _polarization_options, delay_distribution, filter_admission, mode_probabilities

logger = logging.getLogger('HeraldComb.Simulator')

DEFAULT_TARGET_G2 = 0.040
DEFAULT_RATE_BOUNDS = (1e3, 1e10)


@dataclass(frozen=True)
class ExpectedRates:
    """Expected detection rates (1/s) of a configuration.

    ``singles`` has one entry per channel. ``coincidence_rates`` and
    ``heralding`` have one entry per signal channel: the rate of true
    idler/signal detection pairs, and the probability that a trigger's
    partner is detected on that channel.
    """

    singles: Tuple[float, ...]
    coincidence_rates: Tuple[float, ...]
    heralding: Tuple[float, ...]
    signal_channels: Tuple[int, ...]

    def as_dict(self):
        return asdict(self)


def _mode_table(config):
    """Per (polarization, mode) weights and transmissions of the configured run."""
    modes, p = mode_probabilities(config.cavity, config.m_max)
    vertical, pol_weights = _polarization_options(config.signal_polarization)
    t_signal, t_idler = filter_admission(config.filter, config.cavity, modes[None, :], vertical[:, None])
    weight = pol_weights[:, None] * p[None, :]
    cell = np.ones_like(t_signal)
    if config.scenario is Scenario.ABSORPTION_CELL:
        cell = np.broadcast_to(config.cell.survival(modes == 0)[None, :], t_signal.shape)
    return modes, weight, t_signal, t_idler, cell


def expected_resonant_fraction(filter_config, cavity, signal_polarization="H", m_max=None, coincident=False):
    """Fraction of filtered signal photons that are in the degenerate mode.

    Args:
        filter_config (FilterConfig): Filter acting on both photons.
        cavity (CavityParams): Mode spacing and envelope.
        signal_polarization (str): "H", "V" or "random".
        m_max (int, optional): Mode truncation.
        coincident (bool): Weight each mode by the probability that both
            photons pass, as seen in idler/signal coincidences.
    """
    modes, p = mode_probabilities(cavity, m_max)
    vertical, pol_weights = _polarization_options(signal_polarization)
    t_signal, t_idler = filter_admission(filter_config, cavity, modes[None, :], vertical[:, None])
    passing = pol_weights[:, None] * p[None, :] * t_signal
    if coincident:
        passing = passing * t_idler
    by_mode = passing.sum(axis=0)
    return float(by_mode[modes == 0].sum() / by_mode.sum())


def expected_rates(config):
    """Singles, true coincidence rates and heralding probabilities of ``config``."""
    _, weight, t_signal, t_idler, cell = _mode_table(config)
    sigma_s = float(np.sum(weight * t_signal * cell))
    sigma_i = float(np.sum(weight * t_idler))
    sigma_si = float(np.sum(weight * t_signal * t_idler * cell))

    scenario = config.scenario
    split = 1.0 / len(scenario.signal_channels)
    idler = config.detectors[0]
    trigger_rate = config.pair_rate * sigma_i * idler.efficiency + idler.dark_rate
    singles = [trigger_rate]
    coincidences, heralding = [], []
    for channel in scenario.signal_channels:
        detector = config.detectors[channel]
        singles.append(config.pair_rate * sigma_s * split * detector.efficiency + detector.dark_rate)
        rate = config.pair_rate * sigma_si * idler.efficiency * split * detector.efficiency
        coincidences.append(rate)
        heralding.append(rate / trigger_rate if trigger_rate > 0 else 0.0)
    return ExpectedRates(tuple(singles), tuple(coincidences), tuple(heralding), tuple(scenario.signal_channels))


def _window_geometry(window_ps, bin_ps):
    """Quantized window: (effective width in s, half width in s) of |d| <= window // 2."""
    half_bins = (int(window_ps) // 2) // int(bin_ps)
    width = (2 * half_bins + 1) * bin_ps * 1e-12
    return width, 0.5 * width


def _capture(curve, half_width):
    return float(curve.mass_between(-half_width, half_width))


def _window_probabilities(rates, curve, window_ps, bin_ps):
    """Per-trigger probabilities of a hit in arm a, arm b, and both, for one window."""
    width, half = _window_geometry(window_ps, bin_ps)
    capture = _capture(curve, half)
    (h_a, h_b), (s_a, s_b) = rates.heralding, rates.singles[1:]
    miss_a = (1.0 - h_a * capture) * math.exp(-s_a * width)
    miss_b = (1.0 - h_b * capture) * math.exp(-s_b * width)
    miss_both = (1.0 - (h_a + h_b) * capture) * math.exp(-(s_a + s_b) * width)
    return 1.0 - miss_a, 1.0 - miss_b, 1.0 - miss_a - miss_b + miss_both


@dataclass(frozen=True)
class G2Prediction:
    pair_rate: float
    n1: float
    n2: float
    n3: float
    n23_by_window: Tuple[float, ...]
    n23: float
    g2_value: float

    def as_dict(self):
        return asdict(self)


def predict_g2(config, window_ps=DEFAULT_WINDOW_PS, extrapolation_windows_ps=DEFAULT_EXTRAPOLATION_WINDOWS_PS,
               fit_form=DEFAULT_FIT_FORM, bunching_factor=DEFAULT_BUNCHING_FACTOR):
    """Expected outcome of ``heralded_g2`` on a split-signal run of ``config``.

    The expected N23 at each extrapolation window goes through the same fit as
    the measured counts, so the prediction carries the same extrapolation bias.
    """
    if config.scenario is not Scenario.SPLIT_SIGNAL:
        raise ConfigError("g2 prediction needs the split-signal scenario, got {}".format(config.scenario.value))
    rates = expected_rates(config)
    curve = delay_distribution(config)
    bin_ps = config.resolution_ps
    n1 = rates.singles[0] * config.duration
    p_a, p_b, p_ab = _window_probabilities(rates, curve, window_ps, bin_ps)
    n2, n3 = n1 * p_a, n1 * p_b
    windows = tuple(sorted(int(w) for w in extrapolation_windows_ps))
    if windows:
        ladder = np.array([_window_probabilities(rates, curve, w, bin_ps) for w in windows]) * n1
        by_window = tuple(float(v) for v in ladder[:, 2])
        fit = extrapolate_n23(windows, by_window, window_ps, fit_form, n1=n1, arm_counts=(ladder[:, 0], ladder[:, 1]))
        n23 = max(fit.estimate, 0.0)
    else:
        by_window = ()
        n23 = n1 * p_ab
    n23 = min(bunching_factor * n23, n2, n3)
    g2 = n23 * n1 / (n2 * n3) if n2 > 0 and n3 > 0 else math.inf
    return G2Prediction(config.pair_rate, n1, n2, n3, by_window, n23, g2)


@dataclass(frozen=True)
class TunedRate:
    pair_rate: float
    predicted_g2: float
    minimum_g2: float
    minimum_rate: float


def tune_pair_rate(config, target_g2=DEFAULT_TARGET_G2, rate_bounds=DEFAULT_RATE_BOUNDS, **g2_options):
    """Pair rate at which the predicted g2 equals ``target_g2``.

    Predicted g2 falls with the rate while dark counts dominate the triggers
    and rises once accidental multi-pair events do. The root on the rising
    branch is returned.

    Raises:
        AnalysisUndefinedError: target below the achievable minimum, or above
            the prediction at the upper rate bound.
    """
    if not target_g2 > 0:
        raise ConfigError("target g2 must be positive, got {!r}".format(target_g2))
    lo, hi = (math.log10(b) for b in rate_bounds)

    def g2_at(log_rate):
        return predict_g2(config.with_pair_rate(10.0 ** log_rate), **g2_options).g2_value

    best = optimize.minimize_scalar(g2_at, bounds=(lo, hi), method="bounded")
    minimum_g2 = float(best.fun)
    if minimum_g2 > target_g2:
        raise AnalysisUndefinedError("target g2 {:.4g} is below the achievable minimum {:.4g}".format(target_g2, minimum_g2))
    if g2_at(hi) < target_g2:
        raise AnalysisUndefinedError("predicted g2 stays below {:.4g} up to {:.3g} pairs/s".format(target_g2, 10.0 ** hi))
    log_rate = optimize.brentq(lambda x: g2_at(x) - target_g2, float(best.x), hi, xtol=1e-9)
    tuned = TunedRate(10.0 ** log_rate, g2_at(log_rate), minimum_g2, 10.0 ** float(best.x))
    logger.info("Tuned pair rate %.4g /s for g2 %.4g (minimum %.4g at %.3g /s).",
                tuned.pair_rate, tuned.predicted_g2, minimum_g2, tuned.minimum_rate)
    return tuned


def expected_window_coincidences(config, window_ps, signal_channel=1):
    """Expected all-pairs idler/signal coincidences with |d| <= window // 2.

    Returns:
        tuple: (true, accidental) expected counts over the run.
    """
    rates = expected_rates(config)
    index = rates.signal_channels.index(signal_channel)
    width, half = _window_geometry(window_ps, config.resolution_ps)
    true = rates.coincidence_rates[index] * config.duration * _capture(delay_distribution(config), half)
    accidental = rates.singles[0] * rates.singles[1 + index] * config.duration * width
    return true, accidental


def _positive_part_mean(mu, sigma):
    """E[max(X, 0)] for X ~ N(mu, sigma); max(mu, 0) when sigma is 0."""
    if sigma == 0:
        return np.maximum(mu, 0.0)
    z = mu / sigma
    return mu * stats.norm.cdf(z) + sigma * stats.norm.pdf(z)


def binned_delay_shape(curve, bin_width_s, half_bins, jitter_sigma=0.0):
    """Probability that a true pair lands in each histogram bin.

    Both photons are floor-quantized to the same bin width, so a delay x
    lands in bin k with the hat weight max(0, 1 - |x/b - k|); with Gaussian
    jitter the hat is averaged over the jitter analytically.
    """
    b = float(bin_width_s)
    reach = (half_bins + 1) * b + 8.0 * jitter_sigma
    lower, upper = curve.tau_grid[:-1], curve.tau_grid[1:]
    keep = (upper >= -reach) & (lower <= reach)
    centres = 0.5 * (lower[keep] + upper[keep])
    masses = np.diff(curve.cdf)[keep]

    shape = np.empty(2 * half_bins + 1)
    for i, k in enumerate(range(-half_bins, half_bins + 1)):
        x = centres - k * b
        hat = (_positive_part_mean(x + b, jitter_sigma) - 2.0 * _positive_part_mean(x, jitter_sigma)
               + _positive_part_mean(x - b, jitter_sigma)) / b
        shape[i] = float(masses @ hat)
    return shape


def expected_histogram(config, bin_width_ps, half_bins, signal_channel=1, observed=None, curve=None):
    """Expected idler/signal coincidence histogram of ``config``.

    Args:
        config (SimConfig): Run description.
        bin_width_ps (int): Histogram bin width.
        half_bins (int): Bins on each side of zero.
        signal_channel (int): Signal channel of the histogram.
        observed (array-like, optional): Measured counts. When given, the
            height of the true-coincidence shape is fitted by matching the
            total counts above the accidental level.
        curve (CorrelationCurve, optional): Delay distribution; defaults to
            the one the generator samples from.

    Returns:
        numpy.ndarray: Expected counts per bin, accidentals included.
    """
    curve = curve or delay_distribution(config)
    rates = expected_rates(config)
    index = rates.signal_channels.index(signal_channel)
    jitter = math.hypot(config.detectors[0].jitter_sigma, config.detectors[signal_channel].jitter_sigma)
    shape = binned_delay_shape(curve, bin_width_ps * 1e-12, half_bins, jitter)
    accidental = rates.singles[0] * rates.singles[1 + index] * config.duration * bin_width_ps * 1e-12
    if observed is not None:
        observed = np.asarray(observed, dtype=float)
        if observed.shape != shape.shape:
            raise ConfigError("observed histogram has {} bins, expected {}".format(observed.size, shape.size))
        height = max(observed.sum() - accidental * shape.size, 0.0) / shape.sum()
    else:
        height = rates.coincidence_rates[index] * config.duration
    return height * shape + accidental
