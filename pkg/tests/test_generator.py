# HeraldComb: runs in a standard CPython 3.9+ environment.
import dataclasses
import math

import numpy as np
import pytest

from heraldcomb_errors import ConfigError
from HeraldComb_Simulator.configs import (
    CellConfig, DetectorConfig, FilterConfig, Scenario, SimConfig,
)
from HeraldComb_Simulator.events import PairBatch, PairEvent
from HeraldComb_Simulator.generator import (
    RunStreams, _dead_time_mask, apply_absorption, apply_filter, delay_distribution, detect,
    expected_instantiated_pairs, filter_admission, generate_pairs, iter_pair_slabs, mode_probabilities, simulate,
)
from HeraldComb_Spectral.spectral_model import CavityParams

CAVITY = CavityParams()
IDEAL = DetectorConfig(efficiency=1.0, dark_rate=0.0, jitter_sigma=0.0, bin_resolution=1e-12)


def within_sigmas(observed, expected, sigmas=5.0):
    return abs(observed - expected) <= sigmas * math.sqrt(max(expected, 1.0))


def resonant_batch(n, mode=0):
    return PairBatch.from_arrays(np.linspace(0.0, 1.0, n, endpoint=False), np.zeros(n), np.full(n, mode))


def test_stage_streams_are_reproducible_and_independent():
    streams = RunStreams(42)
    assert streams.stream("pairs", 0).random() == RunStreams(42).stream("pairs", 0).random()
    assert streams.stream("pairs", 0).random() != streams.stream("modes", 0).random()
    assert streams.stream("pairs", 0).random() != streams.stream("pairs", 1).random()
    with pytest.raises(ConfigError):
        streams.stream("lasers")


def test_mode_probabilities_follow_squared_envelope():
    modes, p = mode_probabilities(CAVITY)
    assert modes[0] == -477 and modes[-1] == 477
    assert p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(p, p[::-1])
    assert np.argmax(p) == 477
    modes, p = mode_probabilities(CAVITY, m_max=0)
    assert modes.tolist() == [0] and p.tolist() == [1.0]


def test_pair_count_is_poisson_around_rate_times_duration():
    config = SimConfig(pair_rate=1e4, duration=10.0, rng_seed=1)
    batch = generate_pairs(config)
    assert abs(len(batch) - 1e5) < 5 * math.sqrt(1e5)
    assert np.all(np.diff(batch.t_create) >= 0)
    assert batch.t_create.min() >= 0.0 and batch.t_create.max() < 10.0
    assert np.all(batch.signal_alive) and np.all(batch.idler_alive)


def delay_l1(delays, curve, bin_width=8e-9):
    """Normalized L1 distance between drawn delays and the tabulated curve, over coarse bins."""
    edges = np.arange(curve.tau_grid[0], curve.tau_grid[-1] + bin_width, bin_width)
    observed = np.histogram(delays, edges)[0] / delays.size
    return float(np.abs(observed - np.diff(curve.cdf_at(edges))).sum())


@pytest.mark.parametrize("mode, multimode", [("inactive", True), ("active", False)])
def test_delays_follow_the_curve_the_filter_selects(mode, multimode):
    config = SimConfig(pair_rate=1e5, duration=10.0, rng_seed=12, filter=FilterConfig(mode=mode))
    curve = delay_distribution(config)
    assert (curve.m_max != 0) is multimode
    delays = generate_pairs(config).delta_t
    assert abs(delays.size - 1e6) < 5 * math.sqrt(1e6)
    assert delay_l1(delays, curve) < 0.02

    # the comb puts a sharp peak at zero delay; a single mode does not
    near_zero = np.count_nonzero(np.abs(delays) <= 50e-12)
    expected = delays.size * float(curve.mass_between(-50e-12, 50e-12))
    assert within_sigmas(near_zero, expected)
    switched = FilterConfig(mode="active" if multimode else "inactive")
    other = delay_distribution(dataclasses.replace(config, filter=switched))
    assert not within_sigmas(near_zero, delays.size * float(other.mass_between(-50e-12, 50e-12)))


def test_generation_is_deterministic_per_seed():
    config = SimConfig(pair_rate=1e4, duration=1.0, rng_seed=9, filter=FilterConfig(mode="inactive"))
    first, second = generate_pairs(config), generate_pairs(config)
    np.testing.assert_array_equal(first.t_create, second.t_create)
    np.testing.assert_array_equal(first.delta_t, second.delta_t)
    np.testing.assert_array_equal(first.mode, second.mode)
    other = generate_pairs(SimConfig(pair_rate=1e4, duration=1.0, rng_seed=10, filter=FilterConfig(mode="inactive")))
    assert not np.array_equal(first.t_create[:10], other.t_create[:10])


def test_random_polarization_draws_both():
    config = SimConfig(pair_rate=1e4, duration=1.0, signal_polarization="random")
    batch = generate_pairs(config)
    assert abs(batch.signal_v.mean() - 0.5) < 5 * 0.5 / math.sqrt(len(batch))


def test_resource_guard():
    config = SimConfig(pair_rate=1e9, duration=10.0)
    with pytest.raises(ConfigError, match="allow_large"):
        next(iter_pair_slabs(config))


def test_filter_transmission_model():
    active = FilterConfig()
    assert float(active.transmission(0, CAVITY.fsr, False)) == pytest.approx(0.100)
    assert float(active.transmission(0, CAVITY.fsr, True)) == pytest.approx(0.095)
    assert float(active.transmission(300, CAVITY.fsr, False)) == pytest.approx(0.100 * 10 ** -3.5)
    assert float(FilterConfig(mode="inactive").transmission(12, CAVITY.fsr, False)) == 0.5
    no_leak = FilterConfig(out_of_band_extinction_db=math.inf)
    assert no_leak.extinction_floor == 0.0
    with pytest.raises(ConfigError) as excinfo:
        FilterConfig(mode="open", peak_transmission_h=1.5)
    assert len(excinfo.value.problems) == 2


def test_idler_sees_the_orthogonal_polarization_and_mirrored_mode():
    t_signal, t_idler = filter_admission(FilterConfig(), CAVITY, np.array([0]), np.array([False]))
    assert t_signal[0] == pytest.approx(0.100) and t_idler[0] == pytest.approx(0.095)


def test_filter_survival_of_resonant_photons():
    n = 200_000
    filtered = apply_filter(resonant_batch(n), FilterConfig(), CAVITY, np.random.default_rng(4))
    assert within_sigmas(np.count_nonzero(filtered.signal_alive), 0.100 * n)
    assert within_sigmas(np.count_nonzero(filtered.idler_alive), 0.095 * n)
    assert np.all(filtered.signal_alive | filtered.idler_alive)
    assert np.all(filtered.resonant)


def test_filter_of_empty_batch_is_empty():
    assert len(apply_filter(PairBatch.empty(), FilterConfig(), CAVITY, np.random.default_rng(0))) == 0


def test_prethinned_batch_cannot_meet_a_wider_filter():
    config = SimConfig(pair_rate=1e5, duration=1.0, prethin=True)
    batch = generate_pairs(config)
    with pytest.raises(ConfigError):
        apply_filter(batch, FilterConfig(mode="inactive", inactive_transmission=1.0), CAVITY, np.random.default_rng(0))


def test_prethinning_draws_only_visible_pairs():
    config = SimConfig(pair_rate=1e7, duration=1.0, prethin=True, rng_seed=2)
    batch = generate_pairs(config)
    assert within_sigmas(len(batch), expected_instantiated_pairs(config))
    assert np.all(batch.signal_alive | batch.idler_alive)
    kept = apply_filter(batch, config.filter, config.cavity, np.random.default_rng(0))
    assert len(kept) == len(batch)


def test_prethinning_matches_the_full_chain_in_distribution():
    full = simulate(SimConfig(pair_rate=1e6, duration=1.0, rng_seed=5)).counts
    thin = simulate(SimConfig(pair_rate=1e6, duration=1.0, rng_seed=5, prethin=True)).counts
    for key in ("signal_photons", "idler_photons"):
        assert abs(full[key] - thin[key]) <= 5 * math.sqrt(full[key] + thin[key] + 1)
    assert thin["pairs_instantiated"] < full["pairs_instantiated"] / 100


def test_absorption_cell_survival():
    n = 200_000
    for od, expected in ((0.3, 0.7408), (6.0, 0.002479)):
        cell = CellConfig(od=od)
        assert cell.resonant_transmission == pytest.approx(expected, rel=1e-3)
        absorbed = apply_absorption(resonant_batch(n), cell, np.random.default_rng(6))
        assert within_sigmas(np.count_nonzero(absorbed.signal_alive), expected * n)
        assert np.all(absorbed.idler_alive)
    off_resonance = apply_absorption(resonant_batch(1000, mode=3), CellConfig(od=6.0), np.random.default_rng(6))
    assert np.all(off_resonance.signal_alive)
    broadband = apply_absorption(resonant_batch(n, mode=3), CellConfig(od=0.3, affects_resonant_only=False),
                                 np.random.default_rng(6))
    assert within_sigmas(np.count_nonzero(broadband.signal_alive), 0.7408 * n)


def test_higher_density_absorbs_a_superset_with_the_same_stream():
    batch = resonant_batch(10_000)
    low = apply_absorption(batch, CellConfig(od=0.3), np.random.default_rng(12))
    high = apply_absorption(batch, CellConfig(od=6.0), np.random.default_rng(12))
    assert np.all(low.signal_alive[high.signal_alive])


def test_ideal_detection_of_known_pairs():
    batch = PairBatch.from_events([PairEvent(1e-6, 1e-9, True, "H"), PairEvent(2e-6, -1e-9, True, "H")])
    stream = detect(batch, (IDEAL, IDEAL), Scenario.DIRECT, 1.0, np.random.default_rng(0))
    assert stream.channel_count == 2 and stream.resolution_ps == 1
    idler = stream.channel(0).astype(np.int64)
    signal = stream.channel(1).astype(np.int64)
    assert np.all(np.abs(idler - [1_000_000, 2_000_000]) <= 1)
    assert np.all(np.abs(signal - [1_001_000, 1_999_000]) <= 1)
    stream.check_sorted()


def test_detection_drops_photons_outside_the_run():
    batch = PairBatch.from_arrays([0.5e-9, 0.999999], [-1e-9, 1e-3])
    stream = detect(batch, (IDEAL, IDEAL), Scenario.DIRECT, 1.0, np.random.default_rng(0))
    assert stream.counts_per_channel().tolist() == [2, 0]


def test_split_signal_routes_half_to_each_arm():
    n = 20_000
    batch = PairBatch.from_arrays(np.sort(np.random.default_rng(1).random(n)), np.zeros(n))
    stream = detect(batch, (IDEAL,) * 3, "c", 1.0, np.random.default_rng(3))
    counts = stream.counts_per_channel()
    assert counts[0] == n and counts[1] + counts[2] == n
    assert within_sigmas(counts[1], n / 2)


def test_dark_counts_and_quantization():
    noisy = DetectorConfig(efficiency=1.0, dark_rate=1e4, jitter_sigma=0.0)
    stream = detect(PairBatch.empty(), (noisy, noisy), Scenario.DIRECT, 10.0, np.random.default_rng(8))
    counts = stream.counts_per_channel()
    assert within_sigmas(counts[0], 1e5) and within_sigmas(counts[1], 1e5)
    assert np.all(stream.timestamps % np.uint64(1000) == 0)
    assert stream.resolution_ps == 1000


def test_detector_count_must_match_scenario():
    with pytest.raises(ConfigError):
        detect(PairBatch.empty(), (IDEAL,), Scenario.DIRECT, 1.0, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        SimConfig(pair_rate=1.0, duration=1.0, scenario="c")


def test_dead_time_is_non_paralyzable():
    keep = _dead_time_mask(np.array([0, 5, 10, 20, 25], dtype=np.int64), np.int64(10))
    assert keep.tolist() == [True, False, True, True, False]


def test_simulation_is_deterministic_and_sorted():
    config = SimConfig.with_uniform_detectors(pair_rate=2e5, duration=0.2, rng_seed=17,
                                              filter=FilterConfig(mode="inactive"))
    first, second = simulate(config), simulate(config)
    assert first.tags == second.tags
    assert first.counts == second.counts
    first.tags.check_sorted()
    assert first.counts["tags_ch0"] + first.counts["tags_ch1"] == len(first.tags)


def test_cell_density_only_changes_the_cell_stage():
    base = dict(pair_rate=1e6, duration=1.0, rng_seed=21, scenario="b", prethin=True)
    low = simulate(SimConfig(cell=CellConfig(od=0.3), **base)).counts
    high = simulate(SimConfig(cell=CellConfig(od=6.0), **base)).counts
    assert low["pairs_instantiated"] == high["pairs_instantiated"]
    assert low["idler_photons"] == high["idler_photons"]
    assert low["tags_ch0"] == high["tags_ch0"]
    assert high["signal_photons"] < low["signal_photons"]
