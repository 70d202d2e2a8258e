# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Heralded (conditional) auto-correlation of the signal photon.

Every trigger (idler) detection opens its own window of width W, centred on the
trigger. With N1 triggers, N2/N3 windows holding at least one tag in arm a/b and
N23 windows holding tags in both arms,

    g2 = N23 * N1 / (N2 * N3)

N23 is rarely non-zero at the nominal window, so it is measured at a ladder of
wider windows, fitted against the window size and evaluated at W. The fitted
value is multiplied by a bunching factor (2 for thermal pair statistics).

The polynomial forms ignore the saturation of wide windows. The occupancy form
models it and stays unbiased on uncorrelated (Poisson) arms.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
from scipy import optimize

from heraldcomb_errors import AnalysisUndefinedError, ConfigError
from HeraldComb_Correlator.histogram import as_int64_timestamps, check_channels

logger = logging.getLogger('HeraldComb.Correlator')

DEFAULT_WINDOW_PS = 40_000
DEFAULT_MIN_FIT_WINDOW_PS = 200_000
DEFAULT_MAX_WINDOW_PS = 2_000_000
DEFAULT_WINDOW_STEP_PS = 200_000
DEFAULT_BUNCHING_FACTOR = 2.0

OCCUPANCY_FORM = "occupancy"

# powers of W in each polynomial fit model
FIT_FORMS = {
    "quadratic": (0, 2),
    "linear-quadratic": (1, 2),
    "linear": (1,),
    OCCUPANCY_FORM: None,
}
DEFAULT_FIT_FORM = "linear-quadratic"
_FIT_UNIT_PS = 1e6


def extrapolation_windows(max_window_ps=DEFAULT_MAX_WINDOW_PS, step_ps=DEFAULT_WINDOW_STEP_PS,
                          min_window_ps=DEFAULT_MIN_FIT_WINDOW_PS):
    """Window ladder min, min+step, ..., <= max (ps). Empty when max < min."""
    if step_ps <= 0:
        raise ConfigError("window step must be positive, got {!r}".format(step_ps))
    return tuple(range(int(min_window_ps), int(max_window_ps) + 1, int(step_ps)))


DEFAULT_EXTRAPOLATION_WINDOWS_PS = extrapolation_windows()


@dataclass(frozen=True)
class N23Fit:
    fit_form: str
    coefficients: Tuple[float, ...]
    estimate: float
    variance: float


def _sorted_ladder(windows_ps, *series):
    windows = np.asarray(windows_ps, dtype=float)
    arrays = [np.asarray(s, dtype=float) for s in series]
    if windows.ndim != 1 or any(a.shape != windows.shape for a in arrays):
        raise ConfigError("windows and counts must be matching 1-D sequences")
    order = np.argsort(windows)
    windows = windows[order]
    if np.unique(windows).size != windows.size:
        raise ConfigError("extrapolation windows must be distinct")
    return (windows,) + tuple(a[order] for a in arrays)


def _increment_weights(values):
    steps = np.diff(values, prepend=0.0)
    return steps, 1.0 / np.sqrt(np.maximum(steps, 1.0))


def extrapolate_n23(windows_ps, counts, target_ps, fit_form=DEFAULT_FIT_FORM, n1=None, arm_counts=None):
    """Fit N23(W) and evaluate it at ``target_ps``.

    Counts at nested windows are cumulative, so the fit is a weighted least
    squares on the increments between consecutive windows, each weighted by
    its Poisson variance (floored at one count).

    ``n1`` and ``arm_counts`` (N2 and N3 at each window) are only read by the
    occupancy form.

    Returns:
        N23Fit: polynomial coefficients are in units of counts per
        microsecond**power.
    """
    if fit_form not in FIT_FORMS:
        raise ConfigError("unknown fit form {!r}; expected one of {}".format(fit_form, sorted(FIT_FORMS)))
    if fit_form == OCCUPANCY_FORM:
        if n1 is None or arm_counts is None:
            raise ConfigError("occupancy fit needs the trigger count and the per-arm window counts")
        return extrapolate_occupancy(windows_ps, counts, target_ps, n1, *arm_counts)
    powers = np.array(FIT_FORMS[fit_form])
    windows, values = _sorted_ladder(windows_ps, counts)
    if windows.size < powers.size:
        raise ConfigError("{} fit needs at least {} windows, got {}".format(fit_form, powers.size, windows.size))

    design = (windows[:, None] / _FIT_UNIT_PS) ** powers
    step_design = np.diff(design, axis=0, prepend=np.zeros((1, powers.size)))
    step_values, weights = _increment_weights(values)
    weighted = step_design * weights[:, None]
    coefficients, *_ = np.linalg.lstsq(weighted, step_values * weights, rcond=None)
    covariance = np.linalg.pinv(weighted.T @ weighted)

    basis = (float(target_ps) / _FIT_UNIT_PS) ** powers
    estimate = float(basis @ coefficients)
    variance = float(basis @ covariance @ basis)
    return N23Fit(fit_form, tuple(float(c) for c in coefficients), estimate, variance)


def _miss_line(w_us, counts, n1, arm):
    """(A, s) with P(no tag in W) = A exp(-s W), from a straight line through -ln(1 - N/N1)."""
    occupancy = counts / n1
    if np.any(occupancy >= 1.0):
        raise AnalysisUndefinedError("arm {} holds a tag in every window; occupancy fit undefined".format(arm))
    slope, intercept = np.polyfit(w_us, -np.log1p(-occupancy), 1)
    return math.exp(-intercept), float(slope)


def extrapolate_occupancy(windows_ps, counts, target_ps, n1, counts_a, counts_b):
    """Fit N23(W) as the joint occupancy of two arms over a Poisson background.

    Each arm misses a window with probability A exp(-s_a W), from straight-line
    fits to its own window counts. Both arms miss with probability
    (A + B - 1) exp(-s W), so that N23(0) = 0:

        N23(W) = N1 (1 - A exp(-s_a W) - B exp(-s_b W) + (A + B - 1) exp(-s W))

    Only the joint rate s is fitted to the N23 increments; independent arms
    give s = s_a + s_b and the estimate tracks the saturation of wide windows.
    The arm lines are treated as exact in the variance.

    Returns:
        N23Fit: coefficients (A, s_a, B, s_b, s), rates per microsecond.
    """
    n1 = float(n1)
    if not n1 > 0:
        raise ConfigError("occupancy fit needs a positive trigger count, got {!r}".format(n1))
    windows, values, arm_a, arm_b = _sorted_ladder(windows_ps, counts, counts_a, counts_b)
    if windows.size < 2:
        raise ConfigError("{} fit needs at least 2 windows, got {}".format(OCCUPANCY_FORM, windows.size))

    w_us = windows / _FIT_UNIT_PS
    a, s_a = _miss_line(w_us, arm_a, n1, "a")
    b, s_b = _miss_line(w_us, arm_b, n1, "b")
    joint = a + b - 1.0

    def model(rate, w):
        return n1 * (1.0 - a * np.exp(-s_a * w) - b * np.exp(-s_b * w) + joint * np.exp(-rate * w))

    step_values, weights = _increment_weights(values)

    def residuals(params):
        return (np.diff(model(params[0], w_us), prepend=0.0) - step_values) * weights

    result = optimize.least_squares(residuals, x0=[s_a + s_b], xtol=1e-12, ftol=1e-12, gtol=1e-12)
    rate = float(result.x[0])
    information = float(result.jac[:, 0] @ result.jac[:, 0])

    target_us = float(target_ps) / _FIT_UNIT_PS
    estimate = float(model(rate, target_us))
    slope = n1 * joint * target_us * math.exp(-rate * target_us)
    variance = slope ** 2 / information if information > 0 else math.inf
    return N23Fit(OCCUPANCY_FORM, (a, s_a, b, s_b, rate), estimate, variance)


@dataclass(frozen=True)
class G2Report:
    """Counts and result of one heralded g2 measurement."""

    n1: int
    n2: int
    n3: int
    n23: float
    n23_direct: int
    window_ps: int
    extrapolation_windows_ps: Tuple[int, ...]
    n23_by_window: Tuple[int, ...]
    fit_form: str
    fit_coefficients: Tuple[float, ...]
    bunching_factor: float
    g2_value: float
    g2_stderr: float

    @property
    def suppression_factor(self):
        """Reduction of two-photon events relative to a coherent state (1/g2)."""
        return math.inf if self.g2_value == 0 else 1.0 / self.g2_value

    @property
    def sigmas_below_classical(self):
        return (1.0 - self.g2_value) / self.g2_stderr

    def as_dict(self):
        record = asdict(self)
        record["suppression_factor"] = self.suppression_factor
        record["sigmas_below_classical"] = self.sigmas_below_classical
        return record


def _window_hits(triggers, arm, half_window):
    lo = np.searchsorted(arm, triggers - half_window, side="left")
    hi = np.searchsorted(arm, triggers + half_window, side="right")
    return hi > lo


def heralded_g2(tags, ch_trigger, ch_a, ch_b, window_ps=DEFAULT_WINDOW_PS,
                extrapolation_windows_ps=DEFAULT_EXTRAPOLATION_WINDOWS_PS,
                fit_form=DEFAULT_FIT_FORM, bunching_factor=DEFAULT_BUNCHING_FACTOR):
    """Estimate the heralded auto-correlation g2(0) of a three-channel stream.

    Args:
        tags (TagStream): Sorted detections.
        ch_trigger (int): Idler (herald) channel.
        ch_a (int): First signal arm.
        ch_b (int): Second signal arm.
        window_ps (int): Coincidence window, centred on each trigger; a tag
            counts when |t - t_trigger| <= window_ps // 2.
        extrapolation_windows_ps (Sequence[int]): Windows at which N23 is
            counted and fitted. Empty: use N23 at ``window_ps`` directly.
        fit_form (str): Key of FIT_FORMS.
        bunching_factor (float): Multiplier applied to N23.

    Returns:
        G2Report

    Raises:
        ConfigError: channels not distinct or unknown, bad window or factor.
        AnalysisUndefinedError: no triggers, or no window hit in one arm.
    """
    if len({int(ch_trigger), int(ch_a), int(ch_b)}) != 3:
        raise ConfigError("trigger and arm channels must be distinct, got {}, {}, {}".format(ch_trigger, ch_a, ch_b))
    check_channels(tags, ch_trigger, ch_a, ch_b)
    if window_ps <= 0:
        raise ConfigError("window must be positive, got {!r}".format(window_ps))
    if not bunching_factor > 0:
        raise ConfigError("bunching factor must be positive, got {!r}".format(bunching_factor))

    triggers = as_int64_timestamps(tags.channel(ch_trigger))
    arm_a = as_int64_timestamps(tags.channel(ch_a))
    arm_b = as_int64_timestamps(tags.channel(ch_b))
    n1 = int(triggers.size)
    if n1 == 0:
        raise AnalysisUndefinedError("g2 undefined: no trigger events on channel {}".format(ch_trigger))

    half = int(window_ps) // 2
    hits_a = _window_hits(triggers, arm_a, half)
    hits_b = _window_hits(triggers, arm_b, half)
    n2 = int(np.count_nonzero(hits_a))
    n3 = int(np.count_nonzero(hits_b))
    if n2 == 0 or n3 == 0:
        raise AnalysisUndefinedError("g2 undefined: N2={} N3={} (an arm has no heralded window)".format(n2, n3))
    n23_direct = int(np.count_nonzero(hits_a & hits_b))

    windows = tuple(sorted(int(w) for w in extrapolation_windows_ps))
    if windows:
        n2_by_window, n3_by_window, n23_by_window = [], [], []
        for w in windows:
            wide_a = _window_hits(triggers, arm_a, w // 2)
            wide_b = _window_hits(triggers, arm_b, w // 2)
            n2_by_window.append(int(np.count_nonzero(wide_a)))
            n3_by_window.append(int(np.count_nonzero(wide_b)))
            n23_by_window.append(int(np.count_nonzero(wide_a & wide_b)))
        n23_by_window = tuple(n23_by_window)
        fit = extrapolate_n23(windows, n23_by_window, window_ps, fit_form, n1=n1,
                              arm_counts=(n2_by_window, n3_by_window))
        raw_n23 = max(fit.estimate, 0.0)
        raw_variance = fit.variance
        coefficients = fit.coefficients
    else:
        n23_by_window = ()
        raw_n23 = float(n23_direct)
        raw_variance = float(max(n23_direct, 1))
        coefficients = ()

    n23 = min(bunching_factor * raw_n23, float(n2), float(n3))
    scale = n1 / (n2 * n3)
    report = G2Report(
        n1=n1, n2=n2, n3=n3, n23=n23, n23_direct=n23_direct, window_ps=int(window_ps),
        extrapolation_windows_ps=windows, n23_by_window=n23_by_window, fit_form=fit_form if windows else "direct",
        fit_coefficients=coefficients, bunching_factor=float(bunching_factor),
        g2_value=n23 * scale, g2_stderr=bunching_factor * math.sqrt(raw_variance) * scale,
    )
    logger.info("Heralded g2 = %.4g +- %.2g (N1=%d N2=%d N3=%d N23=%.4g, %s).",
                report.g2_value, report.g2_stderr, n1, n2, n3, n23, report.fit_form)
    return report
