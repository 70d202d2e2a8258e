# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Seeded Monte Carlo chain: pair creation -> filter -> absorption cell -> detectors.

Each stage draws from its own generator derived from the run seed, so the
random numbers a stage sees do not depend on the parameters of another stage.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple

import numpy as np
from numba import njit

from heraldcomb_errors import ConfigError
from HeraldComb_Correlator.tag_io import TagStream
from HeraldComb_Simulator.configs import DEFAULT_PAIR_GUARD, Scenario
from HeraldComb_Simulator.events import PairBatch
from HeraldComb_Spectral.spectral_model import default_m_max, envelope_weight, tabulate_pdf

logger = logging.getLogger('HeraldComb.Simulator')

STAGES = ("pairs", "modes", "delays", "filter", "cell", "detect")
SLAB_PAIRS = 4_000_000


class RunStreams:
    """Independent numpy Generators per chain stage, derived from one seed."""

    def __init__(self, seed):
        self.seed = int(seed)

    def stream(self, stage, *sub_keys):
        if stage not in STAGES:
            raise ConfigError("unknown random stage {!r}".format(stage))
        sequence = np.random.SeedSequence(self.seed, spawn_key=(STAGES.index(stage),) + tuple(int(k) for k in sub_keys))
        return np.random.default_rng(sequence)


def mode_probabilities(cavity, m_max=None):
    """Modes -m_max..m_max and their pair probabilities, p(m) proportional to w(m)^2.

    The signal photon is in mode m and its idler partner in mode -m.
    """
    m_max = default_m_max(cavity) if m_max is None else int(m_max)
    modes = np.arange(-m_max, m_max + 1)
    weights = envelope_weight(cavity, modes) ** 2
    return modes, weights / weights.sum()


def delay_distribution(config):
    """Signal-idler delay PDF: single mode behind an active filter, else the full comb."""
    m_max = 0 if config.filter.active else config.m_max
    return tabulate_pdf(config.cavity, m_max, config.pdf_range, config.pdf_points)


def _polarization_options(signal_polarization):
    if signal_polarization == "H":
        return np.array([False]), np.array([1.0])
    if signal_polarization == "V":
        return np.array([True]), np.array([1.0])
    return np.array([False, True]), np.array([0.5, 0.5])


def filter_admission(filter_config, cavity, mode, signal_v):
    """Filter transmission of the signal (mode m) and idler (mode -m, orthogonal polarization)."""
    signal_v = np.asarray(signal_v, dtype=bool)
    mode = np.asarray(mode)
    return (filter_config.transmission(mode, cavity.fsr, signal_v),
            filter_config.transmission(-mode, cavity.fsr, ~signal_v))


def _joint_weights(config):
    """(vertical flags, modes, weight table [pol, mode]) of instantiated pairs."""
    modes, p = mode_probabilities(config.cavity, config.m_max)
    vertical, pol_weights = _polarization_options(config.signal_polarization)
    table = pol_weights[:, None] * p[None, :]
    if config.prethin:
        u_s, u_i = filter_admission(config.filter, config.cavity, modes[None, :], vertical[:, None])
        table = table * (1.0 - (1.0 - u_s) * (1.0 - u_i))
    return vertical, modes, table


def expected_instantiated_pairs(config):
    _, _, table = _joint_weights(config)
    return config.expected_pairs * float(table.sum())


class PairSlab(NamedTuple):
    index: int
    t_start: float
    t_stop: float
    batch: PairBatch


def _slab_bounds(config, expected):
    n_slabs = max(1, int(math.ceil(expected / SLAB_PAIRS)))
    edges = np.linspace(0.0, config.duration, n_slabs + 1)
    return list(zip(edges[:-1].tolist(), edges[1:].tolist()))


def iter_pair_slabs(config, streams=None):
    """Draw the pairs of one run as consecutive time slabs.

    Creation times are a homogeneous Poisson process on [0, duration), drawn
    slab by slab so memory stays bounded; each slab has its own sub-streams.
    With ``config.prethin`` only pairs with at least one photon passing the
    filter are drawn, and which photons pass is decided here exactly;
    ``apply_filter`` then keeps them with probability one.

    Raises:
        ConfigError: when more than 1e9 pairs would be instantiated and
            ``config.allow_large`` is not set.
    """
    streams = streams or RunStreams(config.rng_seed)
    vertical, modes, table = _joint_weights(config)
    visible = float(table.sum())
    expected = config.expected_pairs * visible
    if expected > DEFAULT_PAIR_GUARD and not config.allow_large:
        raise ConfigError("run would instantiate {:.3g} pairs (limit {:.0e}); set allow_large to override".format(
            expected, DEFAULT_PAIR_GUARD))
    choice_p = (table / visible).ravel()
    curve = delay_distribution(config)

    for index, (t_start, t_stop) in enumerate(_slab_bounds(config, expected)):
        pair_rng = streams.stream("pairs", index)
        n_pairs = int(pair_rng.poisson(expected * (t_stop - t_start) / config.duration))
        t_create = np.sort(pair_rng.uniform(t_start, t_stop, n_pairs))

        mode_rng = streams.stream("modes", index)
        pol_index, mode_index = np.divmod(mode_rng.choice(table.size, size=n_pairs, p=choice_p), modes.size)
        mode = modes[mode_index]
        signal_v = vertical[pol_index]

        delta_t = curve.sample(streams.stream("delays", index), n_pairs)
        batch = PairBatch.from_arrays(t_create, delta_t, mode, signal_v)
        if config.prethin and n_pairs:
            u_s, u_i = filter_admission(config.filter, config.cavity, mode, signal_v)
            visible_each = 1.0 - (1.0 - u_s) * (1.0 - u_i)
            r = mode_rng.random(n_pairs)
            signal_alive = r < u_s / visible_each
            idler_alive = (r < u_s * u_i / visible_each) | ~signal_alive
            batch = batch.replace(signal_alive=signal_alive, idler_alive=idler_alive, signal_admit=u_s, idler_admit=u_i)
        logger.debug("Slab %d [%.6g, %.6g) s: %d pairs.", index, t_start, t_stop, n_pairs)
        yield PairSlab(index, t_start, t_stop, batch)

    logger.info("Generated pairs for %.4g expected (visible fraction %.4g, prethin=%s).",
                expected, visible, config.prethin)


def generate_pairs(config, streams=None):
    """All pairs of one run in a single batch (see ``iter_pair_slabs``)."""
    return PairBatch.concatenate(slab.batch for slab in iter_pair_slabs(config, streams))


def apply_filter(batch, filter_config, cavity, rng):
    """Pass each photon through the filter; returns pairs with a surviving photon.

    A photon in mode m survives with T(m)/admitted, where ``admitted`` is the
    probability already applied by pre-thinning.
    """
    if not len(batch):
        return batch
    t_signal, t_idler = filter_admission(filter_config, cavity, batch.mode, batch.signal_v)
    if np.any(t_signal > batch.signal_admit * (1 + 1e-12)) or np.any(t_idler > batch.idler_admit * (1 + 1e-12)):
        raise ConfigError("filter transmits more than the pre-thinning admitted; generate with the same filter")
    keep_signal = rng.random(len(batch)) < t_signal / batch.signal_admit
    keep_idler = rng.random(len(batch)) < t_idler / batch.idler_admit
    ones = np.ones(len(batch))
    filtered = batch.replace(
        signal_alive=batch.signal_alive & keep_signal,
        idler_alive=batch.idler_alive & keep_idler,
        signal_admit=ones, idler_admit=ones.copy(),
    ).survivors()
    logger.debug("Filter (%s): %d of %d pairs keep a photon.", filter_config.mode, len(filtered), len(batch))
    return filtered


def apply_absorption(batch, cell, rng):
    """Absorb signal photons in the cell; resonant ones survive with e^-od.

    Pairs keep their slots, so later stages draw the same random numbers at any od.
    """
    if not len(batch):
        return batch
    survive = rng.random(len(batch)) < cell.survival(batch.resonant)
    return batch.replace(signal_alive=batch.signal_alive & survive)


@njit(cache=True, nogil=True)
def _dead_time_mask(timestamps, dead_ps):
    keep = np.ones(timestamps.size, dtype=np.bool_)
    last = np.int64(0)
    have_last = False
    for i in range(timestamps.size):
        if have_last and timestamps[i] - last < dead_ps:
            keep[i] = False
        else:
            last = timestamps[i]
            have_last = True
    return keep


def _register(arrival, alive, detector, rng, duration):
    """Efficiency, jitter and quantization of one channel's photons (ps timestamps)."""
    n = arrival.size
    detected = rng.random(n) < detector.efficiency
    t = arrival + rng.normal(0.0, 1.0, n) * detector.jitter_sigma
    keep = alive & detected & (t >= 0.0) & (t < duration)
    return np.floor(t[keep] / detector.bin_resolution).astype(np.int64) * detector.bin_ps


def _dark_counts(detector, t_start, t_stop, rng):
    t = rng.uniform(t_start, t_stop, int(rng.poisson(detector.dark_rate * (t_stop - t_start))))
    return np.floor(t / detector.bin_resolution).astype(np.int64) * detector.bin_ps


def _check_detectors(detectors, scenario):
    detectors = tuple(detectors)
    if len(detectors) != scenario.channel_count:
        raise ConfigError("scenario {} needs {} detectors, got {}".format(
            scenario.value, scenario.channel_count, len(detectors)))
    return detectors


def _detect_arrays(batch, detectors, scenario, duration, rng, dark_window):
    """Unsorted (timestamps_ps, channels) of one batch plus dark counts in ``dark_window``."""
    n = len(batch)
    idler_ps = _register(batch.t_create, batch.idler_alive, detectors[0], rng, duration)

    route_to_second = rng.random(n) < 0.5
    if scenario is not Scenario.SPLIT_SIGNAL:
        route_to_second[:] = False
    signal_arrival = batch.t_create + batch.delta_t
    per_channel = [idler_ps]
    for channel, routed in zip(scenario.signal_channels, (~route_to_second, route_to_second)):
        per_channel.append(_register(signal_arrival, batch.signal_alive & routed, detectors[channel], rng, duration))

    timestamps, channels = [], []
    for channel, detector in enumerate(detectors):
        ts = np.concatenate((per_channel[channel], _dark_counts(detector, dark_window[0], dark_window[1], rng)))
        timestamps.append(ts)
        channels.append(np.full(ts.size, channel, dtype=np.uint8))
    return np.concatenate(timestamps), np.concatenate(channels)


def _assemble_stream(timestamps, channels, detectors, scenario):
    """Sort by (timestamp, channel), apply dead time and wrap as a TagStream."""
    order = np.lexsort((channels, timestamps))
    timestamps, channels = timestamps[order], channels[order]
    keep = np.ones(timestamps.size, dtype=bool)
    for channel, detector in enumerate(detectors):
        if detector.dead_time > 0:
            index = np.flatnonzero(channels == channel)
            dead_ps = np.int64(round(detector.dead_time * 1e12))
            keep[index] = _dead_time_mask(timestamps[index], dead_ps)
    resolution_ps = min(d.bin_ps for d in detectors)
    return TagStream(timestamps[keep].astype(np.uint64), channels[keep], scenario.channel_count, resolution_ps)


def detect(batch, detectors, scenario, duration, rng, dark_window=None):
    """Turn surviving photons into a sorted tag stream.

    The idler goes to channel 0 and the signal to channel 1, or to channel 1 or 2
    with equal probability in the split-signal scenario. Timestamps are
    floor-quantized to each detector's bin and kept inside [0, duration);
    dark counts are an independent Poisson process per channel over
    ``dark_window`` (default the whole run). Ties are ordered by channel.
    """
    scenario = Scenario.parse(scenario)
    detectors = _check_detectors(detectors, scenario)
    timestamps, channels = _detect_arrays(batch, detectors, scenario, duration, rng, dark_window or (0.0, duration))
    return _assemble_stream(timestamps, channels, detectors, scenario)


@dataclass
class SimulationResult:
    tags: TagStream
    counts: Dict[str, int] = field(default_factory=dict)


def simulate(config):
    """Run the whole chain for one SimConfig.

    Every stage of every slab draws from its own seeded stream, so the pairs,
    their modes and delays do not depend on the filter, cell or detector
    settings (except through pre-thinning, which depends on the filter).
    """
    streams = RunStreams(config.rng_seed)
    detectors = _check_detectors(config.detectors, config.scenario)
    counts = {"pairs_instantiated": 0, "pairs_after_filter": 0, "signal_photons": 0, "idler_photons": 0}
    timestamps, channels = [], []
    for slab in iter_pair_slabs(config, streams):
        batch = slab.batch
        counts["pairs_instantiated"] += len(batch)
        batch = apply_filter(batch, config.filter, config.cavity, streams.stream("filter", slab.index))
        counts["pairs_after_filter"] += len(batch)
        if config.scenario is Scenario.ABSORPTION_CELL:
            batch = apply_absorption(batch, config.cell, streams.stream("cell", slab.index))
        counts["signal_photons"] += int(np.count_nonzero(batch.signal_alive))
        counts["idler_photons"] += int(np.count_nonzero(batch.idler_alive))
        ts, ch = _detect_arrays(batch, detectors, config.scenario, config.duration,
                                streams.stream("detect", slab.index), (slab.t_start, slab.t_stop))
        timestamps.append(ts)
        channels.append(ch)

    tags = _assemble_stream(np.concatenate(timestamps), np.concatenate(channels), detectors, config.scenario)
    for channel, n_tags in enumerate(tags.counts_per_channel().tolist()):
        counts["tags_ch{}".format(channel)] = int(n_tags)
    logger.info("Simulated %s run: %s.", config.scenario.value, counts)
    return SimulationResult(tags, counts)
