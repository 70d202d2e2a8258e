# HeraldComb: runs in a standard CPython 3.9+ environment.
"""Configuration types of the Monte Carlo chain: filter, absorption cell, detectors, run."""

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from heraldcomb_errors import ConfigError
from HeraldComb_Spectral.spectral_model import DEFAULT_N_POINTS, DEFAULT_T_RANGE, CavityParams

DEFAULT_PAIR_GUARD = 1e9
POLARIZATIONS = ("H", "V", "random")


class Scenario(str, enum.Enum):
    """Signal detection layouts. Channel 0 is always the idler (trigger)."""

    DIRECT = "direct"
    ABSORPTION_CELL = "absorption-cell"
    SPLIT_SIGNAL = "split-signal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"a": cls.DIRECT, "b": cls.ABSORPTION_CELL, "c": cls.SPLIT_SIGNAL}
        text = str(value).strip().lower()
        if text in aliases:
            return aliases[text]
        try:
            return cls(text)
        except ValueError:
            raise ConfigError("unknown scenario {!r}; expected one of {} or a/b/c".format(
                value, [s.value for s in cls]))

    @property
    def channel_count(self):
        return 3 if self is Scenario.SPLIT_SIGNAL else 2

    @property
    def signal_channels(self):
        return (1, 2) if self is Scenario.SPLIT_SIGNAL else (1,)


def _check_fraction(problems, name, value, allow_zero=False):
    low_ok = value >= 0 if allow_zero else value > 0
    if not (math.isfinite(value) and low_ok and value <= 1):
        problems.append("{} must lie in {}0, 1], got {!r}".format(name, "[" if allow_zero else "(", value))


@dataclass(frozen=True)
class FilterConfig:
    """Atomic narrow-band filter as a mode-indexed transmission function."""

    mode: str = "active"
    peak_transmission_h: float = 0.100
    peak_transmission_v: float = 0.095
    linewidth_fwhm: float = 80e6
    out_of_band_extinction_db: float = 35.0
    inactive_transmission: float = 0.5

    def __post_init__(self):
        problems = []
        if self.mode not in ("active", "inactive"):
            problems.append("filter mode must be 'active' or 'inactive', got {!r}".format(self.mode))
        _check_fraction(problems, "peak_transmission_h", self.peak_transmission_h)
        _check_fraction(problems, "peak_transmission_v", self.peak_transmission_v)
        _check_fraction(problems, "inactive_transmission", self.inactive_transmission)
        if not (self.linewidth_fwhm > 0 and math.isfinite(self.linewidth_fwhm)):
            problems.append("linewidth_fwhm must be positive, got {!r}".format(self.linewidth_fwhm))
        if not self.out_of_band_extinction_db >= 0:
            problems.append("out_of_band_extinction_db must be >= 0, got {!r}".format(self.out_of_band_extinction_db))
        if problems:
            raise ConfigError("invalid filter configuration", problems)

    @property
    def active(self):
        return self.mode == "active"

    @property
    def extinction_floor(self):
        """Leakage floor 10^(-dB/10); 0 for infinite extinction."""
        return 10.0 ** (-self.out_of_band_extinction_db / 10.0)

    def line_shape(self, detuning):
        """Lorentzian intensity transmission of unit height at ``detuning`` (Hz)."""
        half = 0.5 * self.linewidth_fwhm
        detuning = np.asarray(detuning, dtype=float)
        return half * half / (half * half + detuning * detuning)

    def transmission(self, mode_index, fsr, vertical):
        """Transmission of photons in comb mode(s) ``mode_index``.

        Args:
            mode_index (int | array): Signed comb mode index.
            fsr (float): Mode spacing, Hz.
            vertical (bool | array): True for V polarization.
        """
        mode_index = np.asarray(mode_index)
        vertical = np.asarray(vertical, dtype=bool)
        if not self.active:
            return np.full(np.broadcast(mode_index, vertical).shape, self.inactive_transmission)
        peak = np.where(vertical, self.peak_transmission_v, self.peak_transmission_h)
        return peak * np.maximum(self.extinction_floor, self.line_shape(mode_index * fsr))


@dataclass(frozen=True)
class CellConfig:
    od: float = 0.3
    affects_resonant_only: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.od) and self.od >= 0):
            raise ConfigError("invalid absorption cell", ["od must be >= 0, got {!r}".format(self.od)])

    @property
    def resonant_transmission(self):
        return math.exp(-self.od)

    def survival(self, resonant):
        """Signal survival probability for photons with the given resonance flag(s)."""
        resonant = np.asarray(resonant, dtype=bool)
        if self.affects_resonant_only:
            return np.where(resonant, self.resonant_transmission, 1.0)
        return np.full(resonant.shape, self.resonant_transmission)


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 0.5
    dark_rate: float = 250.0
    jitter_sigma: float = 150e-12
    bin_resolution: float = 1e-9
    dead_time: float = 0.0

    def __post_init__(self):
        problems = []
        _check_fraction(problems, "efficiency", self.efficiency, allow_zero=True)
        if not (math.isfinite(self.dark_rate) and self.dark_rate >= 0):
            problems.append("dark_rate must be >= 0, got {!r}".format(self.dark_rate))
        if not (math.isfinite(self.jitter_sigma) and self.jitter_sigma >= 0):
            problems.append("jitter_sigma must be >= 0, got {!r}".format(self.jitter_sigma))
        if not (self.bin_resolution > 0 and round(self.bin_resolution * 1e12) >= 1):
            problems.append("bin_resolution must be at least 1 ps, got {!r}".format(self.bin_resolution))
        if not (math.isfinite(self.dead_time) and self.dead_time >= 0):
            problems.append("dead_time must be >= 0, got {!r}".format(self.dead_time))
        if problems:
            raise ConfigError("invalid detector configuration", problems)

    @property
    def bin_ps(self):
        return int(round(self.bin_resolution * 1e12))


@dataclass(frozen=True)
class SimConfig:
    """One simulated run. ``detectors`` holds one entry per channel."""

    pair_rate: float
    duration: float
    rng_seed: int = 0
    scenario: Scenario = Scenario.DIRECT
    cavity: CavityParams = field(default_factory=CavityParams)
    filter: FilterConfig = field(default_factory=FilterConfig)
    cell: CellConfig = field(default_factory=CellConfig)
    detectors: Tuple[DetectorConfig, ...] = (DetectorConfig(), DetectorConfig())
    signal_polarization: str = "H"
    prethin: bool = False
    allow_large: bool = False
    m_max: Optional[int] = None
    pdf_range: float = DEFAULT_T_RANGE
    pdf_points: int = DEFAULT_N_POINTS

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        problems = []
        if not (math.isfinite(self.pair_rate) and self.pair_rate > 0):
            problems.append("pair_rate must be positive, got {!r}".format(self.pair_rate))
        if not (math.isfinite(self.duration) and self.duration > 0):
            problems.append("duration must be positive, got {!r}".format(self.duration))
        if isinstance(self.rng_seed, bool) or int(self.rng_seed) != self.rng_seed or not 0 <= self.rng_seed < 2 ** 64:
            problems.append("rng_seed must be a 64-bit unsigned integer, got {!r}".format(self.rng_seed))
        if len(self.detectors) != self.scenario.channel_count:
            problems.append("scenario {} needs {} detectors, got {}".format(
                self.scenario.value, self.scenario.channel_count, len(self.detectors)))
        if self.signal_polarization not in POLARIZATIONS:
            problems.append("signal_polarization must be one of {}, got {!r}".format(POLARIZATIONS, self.signal_polarization))
        if problems:
            raise ConfigError("invalid simulation configuration", problems)

    @classmethod
    def with_uniform_detectors(cls, detector=None, scenario=Scenario.DIRECT, **kwargs):
        scenario = Scenario.parse(scenario)
        detector = detector or DetectorConfig()
        return cls(scenario=scenario, detectors=(detector,) * scenario.channel_count, **kwargs)

    def with_pair_rate(self, pair_rate):
        return dataclasses.replace(self, pair_rate=float(pair_rate))

    @property
    def expected_pairs(self):
        return self.pair_rate * self.duration

    @property
    def resolution_ps(self):
        return min(d.bin_ps for d in self.detectors)
