# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Analytic signal-idler cross-correlation of a doubly-resonant down-conversion cavity.

The correlation is the modulus squared of a sum over signal and idler comb
modes. For a delay tau at or after the transit-time split (tau0/2) it is

    |sum_{mS,mI} w(mS) w(mI) C/(G_S + G_I) exp(-2 pi G_S (tau - tau0/2)) sinc(i pi tau0 G_S)|^2

with G = gamma/2 + i m fsr, and the mirror expression in G_I before the split.
The inner sum over the partner mode only depends on mS + mI, so the double
sum collapses exactly to a single sum with convolved coefficients.
"""

import csv
import functools
import io
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sp_fft
from scipy.integrate import cumulative_trapezoid, trapezoid

from heraldcomb_errors import AnalysisUndefinedError, ConfigError, TagFormatError

logger = logging.getLogger('HeraldComb.Spectral')

RB_D1_FREQUENCY = 377.107e12
DEFAULT_BANDWIDTH = 7e6
DEFAULT_FSR = 490e6
DEFAULT_TAU0 = 6.7e-12
DEFAULT_ENVELOPE_FWHM = 148e9
ENVELOPE_SHAPES = ("gaussian", "sinc2")
BANDWIDTH_CONVENTIONS = ("biphoton", "lorentzian")
ENVELOPE_FLOOR = 1e-3

DEFAULT_T_RANGE = 400e-9
DEFAULT_N_POINTS = 32768
MIN_N_POINTS = 4096
MIN_DECAY_TIMES = 10.0

# np.sinc(x)**2 == 0.5
_SINC2_HALF_MAX = 0.44294647
_EVAL_CHUNK = 2048
_MIN_PERIOD_SAMPLES = 8192


def gamma_from_bandwidth(fwhm, convention="biphoton"):
    """Cavity damping rate giving a photon spectrum of the requested FWHM.

    Args:
        fwhm (float): Spectral full width at half maximum, Hz.
        convention (str): ``"biphoton"`` treats ``fwhm`` as the width of the
            Lorentzian-squared single-mode photon spectrum,
            ``"lorentzian"`` as the width of a single Lorentzian.

    Returns:
        float: gamma in Hz.
    """
    if not (math.isfinite(fwhm) and fwhm > 0):
        raise ConfigError("bandwidth must be a positive finite frequency, got {!r}".format(fwhm))
    if convention == "biphoton":
        return fwhm / math.sqrt(math.sqrt(2.0) - 1.0)
    if convention == "lorentzian":
        return float(fwhm)
    raise ConfigError("unknown bandwidth convention {!r}; expected one of {}".format(convention, BANDWIDTH_CONVENTIONS))


DEFAULT_GAMMA = gamma_from_bandwidth(DEFAULT_BANDWIDTH)


@dataclass(frozen=True)
class CavityParams:
    """Spectral description of the doubly-resonant cavity. All rates in Hz."""

    gamma_s: float = DEFAULT_GAMMA
    gamma_i: float = DEFAULT_GAMMA
    fsr: float = DEFAULT_FSR
    tau0: float = DEFAULT_TAU0
    envelope_fwhm: float = DEFAULT_ENVELOPE_FWHM
    center_freq_s: float = RB_D1_FREQUENCY
    center_freq_i: float = RB_D1_FREQUENCY
    envelope_shape: str = "gaussian"

    def __post_init__(self):
        problems = []
        for name in ("gamma_s", "gamma_i", "fsr", "envelope_fwhm", "center_freq_s", "center_freq_i"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                problems.append("{} must be positive and finite, got {!r}".format(name, value))
        if not (math.isfinite(self.tau0) and self.tau0 >= 0):
            problems.append("tau0 must be >= 0, got {!r}".format(self.tau0))
        elif self.fsr > 0 and self.tau0 >= 1.0 / self.fsr:
            problems.append("tau0 ({!r} s) must be shorter than one round trip ({!r} s)".format(self.tau0, 1.0 / self.fsr))
        if self.envelope_shape not in ENVELOPE_SHAPES:
            problems.append("envelope_shape must be one of {}, got {!r}".format(ENVELOPE_SHAPES, self.envelope_shape))
        if problems:
            raise ConfigError("invalid cavity parameters", problems)

    @classmethod
    def from_bandwidth(cls, bandwidth=DEFAULT_BANDWIDTH, convention="biphoton", **overrides):
        gamma = gamma_from_bandwidth(bandwidth, convention)
        return cls(gamma_s=gamma, gamma_i=gamma, **overrides)

    @property
    def min_gamma(self):
        return min(self.gamma_s, self.gamma_i)

    @property
    def correlation_time(self):
        """1/(pi gamma_min): decay time of the slower exponential tail."""
        return 1.0 / (math.pi * self.min_gamma)


@dataclass(frozen=True, eq=False)
class CorrelationCurve:
    """A correlation curve on a uniform delay grid, optionally normalized for sampling."""

    tau_grid: np.ndarray
    values: np.ndarray
    normalized_pdf: Optional[np.ndarray] = None
    cdf: Optional[np.ndarray] = None
    m_max: Optional[int] = None

    def __post_init__(self):
        if self.tau_grid.shape != self.values.shape or self.tau_grid.ndim != 1:
            raise ConfigError("tau_grid and values must be 1-D arrays of equal length")
        if np.any(self.values < 0):
            raise ConfigError("correlation values must be non-negative")
        for name in ("normalized_pdf", "cdf"):
            extra = getattr(self, name)
            if extra is not None and extra.shape != self.tau_grid.shape:
                raise ConfigError("{} must match tau_grid".format(name))

    @property
    def step(self):
        return float(self.tau_grid[1] - self.tau_grid[0])

    def _require_cdf(self):
        if self.cdf is None:
            raise AnalysisUndefinedError("curve has no cumulative table; build it with tabulate_pdf")
        return self.cdf

    def cdf_at(self, tau):
        return np.interp(tau, self.tau_grid, self._require_cdf())

    def inverse_cdf(self, u):
        return np.interp(u, self._require_cdf(), self.tau_grid)

    def mass_between(self, lo, hi):
        """Probability of a delay in [lo, hi] (vectorized over lo/hi)."""
        return self.cdf_at(hi) - self.cdf_at(lo)

    def sample(self, rng, size):
        """Draw ``size`` delays by inverse-CDF sampling with ``rng`` (numpy Generator)."""
        return self.inverse_cdf(rng.random(size))


def comb_period(params):
    """Cavity round-trip time, 1/fsr (s)."""
    return 1.0 / params.fsr


def envelope_weight(params, m):
    """Phase-matching amplitude weight of comb mode ``m``; w(0) = 1."""
    x = np.asarray(m, dtype=float) * (params.fsr / params.envelope_fwhm)
    if params.envelope_shape == "gaussian":
        return np.exp(-4.0 * math.log(2.0) * x * x)
    return np.sinc(2.0 * _SINC2_HALF_MAX * x) ** 2


def default_m_max(params, floor=ENVELOPE_FLOOR):
    """Smallest truncation with every envelope weight beyond it below ``floor``."""
    if not 0 < floor < 1:
        raise ConfigError("envelope floor must lie in (0, 1), got {!r}".format(floor))
    if params.envelope_shape == "gaussian":
        x_edge = math.sqrt(math.log(1.0 / floor) / (4.0 * math.log(2.0)))
    else:
        # sidelobes of sinc^2 stay under 1/(pi u)^2
        x_edge = 1.0 / (math.pi * math.sqrt(floor)) / (2.0 * _SINC2_HALF_MAX)
    return int(math.ceil(x_edge * params.envelope_fwhm / params.fsr))


def _resolve_m_max(params, m_max):
    if m_max is None:
        return default_m_max(params)
    if isinstance(m_max, bool) or int(m_max) != m_max:
        raise ConfigError("m_max must be an integer, got {!r}".format(m_max))
    if m_max < 0:
        raise ConfigError("m_max must be >= 0, got {!r}".format(m_max))
    return int(m_max)


def _sinc(z):
    """sin(z)/z for complex z, sinc(0) = 1."""
    return np.sinc(z / np.pi)


def _readonly(array):
    array.setflags(write=False)
    return array


@functools.lru_cache(maxsize=32)
def _comb_coefficients(params, m_max):
    """Single-sum coefficients of the signal and idler branches.

    Returns:
        tuple: (modes, signal_coeffs, idler_coeffs)
    """
    modes = np.arange(-m_max, m_max + 1)
    weights = envelope_weight(params, modes)
    prefactor = math.sqrt(params.gamma_s * params.gamma_i * params.center_freq_s * params.center_freq_i)

    # 1/(G_S + G_I) depends on mS + mI only
    mode_sums = np.arange(-2 * m_max, 2 * m_max + 1)
    pair_kernel = 1.0 / (0.5 * (params.gamma_s + params.gamma_i) + 1j * mode_sums * params.fsr)
    partner_sum = np.convolve(weights[::-1].astype(complex), pair_kernel)[2 * m_max:4 * m_max + 1]

    rate_s = 0.5 * params.gamma_s + 1j * modes * params.fsr
    rate_i = 0.5 * params.gamma_i + 1j * modes * params.fsr
    signal = prefactor * weights * _sinc(1j * np.pi * params.tau0 * rate_s) * partner_sum
    idler = prefactor * weights * _sinc(1j * np.pi * params.tau0 * rate_i) * partner_sum
    logger.debug("Built comb coefficients for %d modes (m_max=%d).", modes.size, m_max)
    return _readonly(modes), _readonly(signal), _readonly(idler)


def _branch_intensity(coeffs, modes, gamma, fsr, s, chunk):
    """|sum_m c_m exp(-2 pi (gamma/2 + i m fsr) s)|^2 for s >= 0."""
    rates = 2.0 * np.pi * (0.5 * gamma + 1j * modes * fsr)
    out = np.empty(s.shape, dtype=float)
    for start in range(0, s.size, chunk):
        block = s[start:start + chunk]
        amplitude = np.exp(-np.outer(block, rates)) @ coeffs
        out[start:start + chunk] = amplitude.real ** 2 + amplitude.imag ** 2
    return out


def eval_cross_correlation(params, tau, m_max=None, chunk=_EVAL_CHUNK):
    """Evaluate the multimode signal-idler cross-correlation.

    Args:
        params (CavityParams): Cavity description.
        tau (float | array-like): Signal minus idler delay(s), seconds.
        m_max (int, optional): Symmetric mode truncation; 0 keeps only the
            degenerate mode. Defaults to ``default_m_max(params)``.
        chunk (int): Delays evaluated per vectorized block.

    Returns:
        float | numpy.ndarray: Non-negative correlation values (arbitrary units).
    """
    m_max = _resolve_m_max(params, m_max)
    tau_arr = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau_arr)):
        raise ConfigError("tau must be finite")
    modes, signal, idler = _comb_coefficients(params, m_max)

    shifted = tau_arr.ravel() - 0.5 * params.tau0
    out = np.empty(shifted.shape, dtype=float)
    after = shifted >= 0
    out[after] = _branch_intensity(signal, modes, params.gamma_s, params.fsr, shifted[after], chunk)
    out[~after] = _branch_intensity(idler, modes, params.gamma_i, params.fsr, -shifted[~after], chunk)
    if tau_arr.ndim == 0:
        return float(out[0])
    return out.reshape(tau_arr.shape)


def eval_single_mode_correlation(params, tau):
    """Closed form of the degenerate-mode (m_S = m_I = 0) correlation."""
    tau_arr = np.asarray(tau, dtype=float)
    prefactor = math.sqrt(params.gamma_s * params.gamma_i * params.center_freq_s * params.center_freq_i)
    pair = prefactor / (0.5 * (params.gamma_s + params.gamma_i))
    peak_s = abs(pair * _sinc(1j * np.pi * params.tau0 * 0.5 * params.gamma_s)) ** 2
    peak_i = abs(pair * _sinc(1j * np.pi * params.tau0 * 0.5 * params.gamma_i)) ** 2

    shifted = tau_arr - 0.5 * params.tau0
    after = shifted >= 0
    out = np.empty(shifted.shape, dtype=float)
    out[after] = peak_s * np.exp(-2.0 * np.pi * params.gamma_s * shifted[after])
    out[~after] = peak_i * np.exp(2.0 * np.pi * params.gamma_i * shifted[~after])
    if tau_arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class _BranchCumulative:
    """Exact integral of exp(-decay s) |P(s)|^2 from 0 to s, P periodic in ``period``."""

    period: float
    decay: float
    table_s: np.ndarray
    table_integral: np.ndarray

    @property
    def period_mass(self):
        return float(self.table_integral[-1])

    @property
    def total(self):
        return self.period_mass / -math.expm1(-self.decay * self.period)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        n_periods = np.floor(s / self.period)
        remainder = np.clip(s - n_periods * self.period, 0.0, self.period)
        survival = np.exp(-self.decay * self.period * n_periods)
        completed = self.total * -np.expm1(-self.decay * self.period * n_periods)
        return completed + survival * np.interp(remainder, self.table_s, self.table_integral)


def _branch_cumulative(coeffs, modes, gamma, fsr):
    period = 1.0 / fsr
    n_samples = max(_MIN_PERIOD_SAMPLES, 1 << int(math.ceil(math.log2(2 * modes.size))))
    spectrum = np.zeros(n_samples, dtype=complex)
    spectrum[modes % n_samples] = coeffs
    periodic = sp_fft.fft(spectrum)
    periodic = np.append(periodic, periodic[0])
    s = np.linspace(0.0, period, n_samples + 1)
    intensity = np.exp(-2.0 * np.pi * gamma * s) * (periodic.real ** 2 + periodic.imag ** 2)
    integral = cumulative_trapezoid(intensity, s, initial=0.0)
    return _BranchCumulative(period, 2.0 * np.pi * gamma, s, integral)


def _curve_cumulative(params, m_max):
    """Integral of the full curve from -inf to each tau, as a callable."""
    modes, signal, idler = _comb_coefficients(params, m_max)
    after = _branch_cumulative(signal, modes, params.gamma_s, params.fsr)
    before = _branch_cumulative(idler, modes, params.gamma_i, params.fsr)

    def cumulative(tau):
        shifted = np.asarray(tau, dtype=float) - 0.5 * params.tau0
        out = np.empty(shifted.shape, dtype=float)
        mask = shifted >= 0
        out[mask] = before.total + after(shifted[mask])
        out[~mask] = before.total - before(-shifted[~mask])
        return out

    return cumulative


def pdf_grid_problems(params, t_range, n_points):
    """Reasons the delay grid cannot hold the curve; empty when it can."""
    problems = []
    minimum_range = MIN_DECAY_TIMES * params.correlation_time
    if not t_range >= minimum_range:
        problems.append("t_range {!r} s covers fewer than {:g} decay times (needs >= {:.4g} s)".format(
            t_range, MIN_DECAY_TIMES, minimum_range))
    if int(n_points) != n_points or n_points < MIN_N_POINTS:
        problems.append("n_points must be an integer >= {}, got {!r}".format(MIN_N_POINTS, n_points))
    return problems


@functools.lru_cache(maxsize=16)
def _tabulate(params, m_max, t_range, n_points, cell_average):
    grid = np.linspace(-t_range, t_range, n_points)
    step = grid[1] - grid[0]
    if cell_average:
        edges = np.linspace(-t_range - 0.5 * step, t_range + 0.5 * step, n_points + 1)
        values = np.clip(np.diff(_curve_cumulative(params, m_max)(edges)), 0.0, None) / step
    else:
        values = eval_cross_correlation(params, grid, m_max)

    total = trapezoid(values, grid)
    if not (np.isfinite(total) and total > 0):
        raise AnalysisUndefinedError("correlation integral underflows on the requested grid")
    pdf = values / total
    cdf = cumulative_trapezoid(pdf, grid, initial=0.0)
    cdf /= cdf[-1]
    logger.info("Tabulated correlation PDF: m_max=%d, range=+-%.3g s, %d points.", m_max, t_range, n_points)
    return CorrelationCurve(_readonly(grid), _readonly(values), _readonly(pdf), _readonly(cdf), m_max)


def tabulate_pdf(params, m_max=None, t_range=DEFAULT_T_RANGE, n_points=DEFAULT_N_POINTS, cell_average=True):
    """Tabulate the correlation as a normalized sampling distribution.

    Args:
        params (CavityParams): Cavity description.
        m_max (int, optional): Mode truncation (0 = single mode).
        t_range (float): Half width of the delay grid, seconds.
        n_points (int): Grid points.
        cell_average (bool): Store the exact average of the curve over each
            grid cell instead of the point value, so comb teeth narrower than
            the grid step keep their weight.

    Returns:
        CorrelationCurve: with ``normalized_pdf`` and ``cdf`` set. The arrays
        are shared between callers and read-only.
    """
    m_max = _resolve_m_max(params, m_max)
    problems = pdf_grid_problems(params, t_range, n_points)
    if problems:
        raise ConfigError("invalid PDF grid", problems)
    return _tabulate(params, m_max, float(t_range), int(n_points), bool(cell_average))


def write_curve_csv(curve, sink):
    """Write ``tau_s,value[,pdf]`` rows with 17 significant digits.

    Args:
        curve (CorrelationCurve): Curve to export.
        sink (str | os.PathLike | file): Path or text file object.
    """
    if hasattr(sink, "write"):
        _write_curve_rows(curve, sink)
        return
    with open(sink, "w", newline="", encoding="utf-8") as handle:
        _write_curve_rows(curve, handle)


def _write_curve_rows(curve, handle):
    writer = csv.writer(handle, lineterminator="\n")
    with_pdf = curve.normalized_pdf is not None
    writer.writerow(["tau_s", "value", "pdf"] if with_pdf else ["tau_s", "value"])
    columns = [curve.tau_grid, curve.values] + ([curve.normalized_pdf] if with_pdf else [])
    for row in zip(*columns):
        writer.writerow(["{:.17g}".format(v) for v in row])


def read_curve_csv(source):
    """Read a curve written by ``write_curve_csv`` (no cumulative table)."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="", encoding="utf-8") as handle:
            text = handle.read()
    else:
        text = source.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] not in (["tau_s", "value"], ["tau_s", "value", "pdf"]):
        raise TagFormatError("curve CSV must start with 'tau_s,value[,pdf]'")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    pdf = data[:, 2].copy() if data.shape[1] == 3 else None
    return CorrelationCurve(data[:, 0].copy(), data[:, 1].copy(), pdf)
