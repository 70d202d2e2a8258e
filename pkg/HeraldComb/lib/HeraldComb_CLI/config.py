# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Run configuration: a JSON document with one object per section.

    run        output directory, seed, scenario, pair rate, duration
    cavity     photon bandwidth or explicit decay rates, comb geometry
    spectral   mode truncation and PDF grid
    filter     atomic filter (FilterConfig fields)
    cell       absorption cell; ``od`` for simulate, ``od_low``/``od_high`` for fig4
    detectors  one detector model used on every channel (DetectorConfig fields)
    analysis   channels, bins and windows of the analyses

Physical quantities are SI (Hz, s); analysis windows and bins are in ns.
Missing keys take their defaults, unknown sections or keys are errors, and
every problem in a document is reported at once.
"""

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

from heraldcomb_errors import ConfigError
from HeraldComb_Correlator.g2_estimator import DEFAULT_FIT_FORM, FIT_FORMS
from HeraldComb_Simulator.configs import POLARIZATIONS, CellConfig, DetectorConfig, FilterConfig, Scenario, SimConfig
from HeraldComb_Spectral.spectral_model import (
    BANDWIDTH_CONVENTIONS, DEFAULT_BANDWIDTH, DEFAULT_ENVELOPE_FWHM, DEFAULT_FSR, DEFAULT_N_POINTS, DEFAULT_T_RANGE,
    DEFAULT_TAU0, ENVELOPE_SHAPES, RB_D1_FREQUENCY, CavityParams, gamma_from_bandwidth,
    pdf_grid_problems,
)

logger = logging.getLogger('HeraldComb.CLI')

OUTPUT_DIR_ENV = 'HERALDCOMB_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'heraldcomb_output'
DEFAULT_PAIR_RATE = 1e6
DEFAULT_DURATION = 1.0


@dataclass(frozen=True)
class RunSection:
    output_dir: Optional[str] = None
    seed: int = 0
    scenario: str = "direct"
    pair_rate: Optional[float] = None
    duration: Optional[float] = None
    signal_polarization: str = "H"
    prethin: bool = False
    allow_large: bool = False

    def __post_init__(self):
        problems = []
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            problems.append("seed must be an integer in [0, 2**64), got {!r}".format(self.seed))
        try:
            Scenario.parse(self.scenario)
        except ConfigError as e:
            problems.append(str(e))
        for name in ("pair_rate", "duration"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                problems.append("{} must be positive, got {!r}".format(name, value))
        if self.signal_polarization not in POLARIZATIONS:
            problems.append("signal_polarization must be one of {}".format(POLARIZATIONS))
        if problems:
            raise ConfigError("invalid run section", problems)


@dataclass(frozen=True)
class CavitySection:
    """Cavity description. ``gamma_s``/``gamma_i`` override the bandwidth when set."""

    bandwidth: float = DEFAULT_BANDWIDTH
    bandwidth_convention: str = "biphoton"
    gamma_s: Optional[float] = None
    gamma_i: Optional[float] = None
    fsr: float = DEFAULT_FSR
    tau0: float = DEFAULT_TAU0
    envelope_fwhm: float = DEFAULT_ENVELOPE_FWHM
    envelope_shape: str = "gaussian"
    center_freq_s: float = RB_D1_FREQUENCY
    center_freq_i: float = RB_D1_FREQUENCY

    def __post_init__(self):
        problems = []
        if self.bandwidth_convention not in BANDWIDTH_CONVENTIONS:
            problems.append("bandwidth_convention must be one of {}".format(BANDWIDTH_CONVENTIONS))
        if self.envelope_shape not in ENVELOPE_SHAPES:
            problems.append("envelope_shape must be one of {}".format(ENVELOPE_SHAPES))
        if problems:
            raise ConfigError("invalid cavity section", problems)
        self.params()

    def params(self):
        shared = dict(fsr=self.fsr, tau0=self.tau0, envelope_fwhm=self.envelope_fwhm,
                      center_freq_s=self.center_freq_s, center_freq_i=self.center_freq_i,
                      envelope_shape=self.envelope_shape)
        if self.gamma_s is None and self.gamma_i is None:
            return CavityParams.from_bandwidth(self.bandwidth, self.bandwidth_convention, **shared)
        default_gamma = gamma_from_bandwidth(self.bandwidth, self.bandwidth_convention)
        return CavityParams(
            gamma_s=default_gamma if self.gamma_s is None else self.gamma_s,
            gamma_i=default_gamma if self.gamma_i is None else self.gamma_i,
            **shared,
        )


@dataclass(frozen=True)
class SpectralSection:
    m_max: Optional[int] = None
    range_ns: float = DEFAULT_T_RANGE * 1e9
    points: int = DEFAULT_N_POINTS

    def __post_init__(self):
        problems = []
        if self.m_max is not None and (isinstance(self.m_max, bool) or not isinstance(self.m_max, int) or self.m_max < 0):
            problems.append("m_max must be null or an integer >= 0, got {!r}".format(self.m_max))
        if not self.range_ns > 0:
            problems.append("range_ns must be positive, got {!r}".format(self.range_ns))
        if isinstance(self.points, bool) or not isinstance(self.points, int):
            problems.append("points must be an integer, got {!r}".format(self.points))
        if problems:
            raise ConfigError("invalid spectral section", problems)


@dataclass(frozen=True)
class CellSection:
    od: float = 0.3
    od_low: float = 0.3
    od_high: float = 6.0
    affects_resonant_only: bool = True

    def __post_init__(self):
        problems = []
        for name in ("od", "od_low", "od_high"):
            if not getattr(self, name) >= 0:
                problems.append("{} must be >= 0, got {!r}".format(name, getattr(self, name)))
        if not problems and not self.od_low < self.od_high:
            problems.append("od_low must be below od_high")
        if problems:
            raise ConfigError("invalid cell section", problems)

    def cell(self, od=None):
        return CellConfig(self.od if od is None else od, self.affects_resonant_only)


@dataclass(frozen=True)
class AnalysisSection:
    ref: int = 0
    sig: int = 1
    trigger: int = 0
    arm_a: int = 1
    arm_b: int = 2
    bin_ns: float = 1.0
    range_ns: float = 100.0
    window_ns: float = 40.0
    min_window_ns: float = 200.0
    max_window_ns: float = 2000.0
    window_step_ns: float = 200.0
    fit_form: str = DEFAULT_FIT_FORM
    bunching: float = 2.0
    target_g2: float = 0.040
    workers: int = 1

    def __post_init__(self):
        problems = []
        for name in ("ref", "sig", "trigger", "arm_a", "arm_b", "workers"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                problems.append("{} must be a non-negative integer, got {!r}".format(name, value))
        if self.workers == 0:
            problems.append("workers must be >= 1")
        for name in ("bin_ns", "range_ns", "window_ns", "window_step_ns", "bunching", "target_g2"):
            if not getattr(self, name) > 0:
                problems.append("{} must be positive, got {!r}".format(name, getattr(self, name)))
        if self.fit_form not in FIT_FORMS:
            problems.append("fit_form must be one of {}".format(sorted(FIT_FORMS)))
        if problems:
            raise ConfigError("invalid analysis section", problems)

    @staticmethod
    def to_ps(value_ns):
        return int(round(value_ns * 1000))


SECTIONS = {
    "run": RunSection,
    "cavity": CavitySection,
    "spectral": SpectralSection,
    "filter": FilterConfig,
    "cell": CellSection,
    "detectors": DetectorConfig,
    "analysis": AnalysisSection,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    cavity: CavitySection = field(default_factory=CavitySection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    filter: FilterConfig = field(default_factory=FilterConfig)
    cell: CellSection = field(default_factory=CellSection)
    detectors: DetectorConfig = field(default_factory=DetectorConfig)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    @classmethod
    def from_document(cls, document):
        """Validate a parsed JSON document; raises ConfigError listing every problem."""
        if not isinstance(document, dict):
            raise ConfigError("configuration must be a JSON object")
        problems = ["unknown section '{}'".format(name) for name in sorted(document) if name not in SECTIONS]
        sections = {}
        for name, section_cls in SECTIONS.items():
            values = document.get(name, {})
            if not isinstance(values, dict):
                problems.append("section '{}' must be an object".format(name))
                continue
            known = {f.name for f in dataclasses.fields(section_cls)}
            unknown = sorted(set(values) - known)
            problems.extend("unknown key '{}.{}'".format(name, key) for key in unknown)
            try:
                sections[name] = section_cls(**{k: v for k, v in values.items() if k in known})
            except ConfigError as e:
                problems.extend("{}: {}".format(name, p) for p in (e.problems or [str(e)]))
            except TypeError as e:
                problems.append("{}: {}".format(name, e))
        if "cavity" in sections and "spectral" in sections:
            spectral = sections["spectral"]
            grid = pdf_grid_problems(sections["cavity"].params(), spectral.range_ns * 1e-9, spectral.points)
            problems.extend("spectral: {}".format(p) for p in grid)
        if problems:
            raise ConfigError("invalid configuration", problems)
        return cls(**sections)

    def to_document(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def config_hash(self):
        """SHA-256 of the canonical JSON form of the resolved document."""
        canonical = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_section(self, name, **values):
        """Copy with ``values`` replaced in section ``name``; None values are ignored."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        document = self.to_document()
        document[name].update(values)
        return RunConfig.from_document(document)

    def output_dir(self):
        return self.run.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR

    def cavity_params(self):
        return self.cavity.params()

    def sim_config(self, scenario=None, od=None, pair_rate=None, duration=None, **overrides):
        """SimConfig for one run; explicit arguments win over the document."""
        scenario = Scenario.parse(scenario or self.run.scenario)
        settings = dict(
            pair_rate=pair_rate or self.run.pair_rate or DEFAULT_PAIR_RATE,
            duration=duration or self.run.duration or DEFAULT_DURATION,
            rng_seed=self.run.seed,
            scenario=scenario,
            cavity=self.cavity_params(),
            filter=self.filter,
            cell=self.cell.cell(od),
            detectors=(self.detectors,) * scenario.channel_count,
            signal_polarization=self.run.signal_polarization,
            prethin=self.run.prethin,
            allow_large=self.run.allow_large,
            m_max=self.spectral.m_max,
            pdf_range=self.spectral.range_ns * 1e-9,
            pdf_points=self.spectral.points,
        )
        settings.update(overrides)
        return SimConfig(**settings)


def default_config_document():
    return RunConfig().to_document()


def load_config(path=None):
    """Load and validate a configuration file; defaults when ``path`` is None."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise ConfigError("cannot read configuration {}: {}".format(path, e))
    except ValueError as e:
        raise ConfigError("configuration {} is not valid JSON: {}".format(path, e))
    config = RunConfig.from_document(document)
    logger.info("Loaded configuration %s (sha256 %s).", path, config.config_hash()[:12])
    return config


def save_config(config, path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_document(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("Configuration saved to %s.", path)
    return path
