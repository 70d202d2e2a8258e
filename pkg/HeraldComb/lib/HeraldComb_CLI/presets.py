# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Named pipelines, one per experimental result.

    fig2      unfiltered comb: scenario a, filter inactive, histogram vs theory
    fig3      filtered single mode: scenario a, filter active, histogram vs theory
    fig4      resonance: scenario b at two optical densities, same seed
    g2-table  heralded g2: scenario c, filter active, rate tuned analytically

Run rates and durations below apply unless the configuration sets
``run.pair_rate`` or ``run.duration``. Every preset pre-thins the pairs.
"""

import dataclasses
import logging
import math
import os

import numpy as np

from heraldcomb_errors import ConfigError
from HeraldComb_CLI.manifest import write_manifest
from HeraldComb_Correlator.g2_estimator import extrapolation_windows, heralded_g2
from HeraldComb_Correlator.histogram import coincidence_histogram, histogram_export, window_coincidences
from HeraldComb_Correlator.resonance import resonant_fraction, transmission_from_od
from HeraldComb_Correlator.tag_io import read_tags, write_tags
from HeraldComb_Simulator.configs import Scenario
from HeraldComb_Simulator.generator import simulate
from HeraldComb_Simulator.operating_point import (
    expected_histogram, expected_resonant_fraction, expected_window_coincidences, predict_g2, tune_pair_rate,
)

logger = logging.getLogger('HeraldComb.CLI')

TAG_FILE_NAME = "tags.ttg"

PRESET_RUNS = {
    "fig2": {"scenario": Scenario.DIRECT, "filter_mode": "inactive", "pair_rate": 1e6, "duration": 1.0},
    "fig3": {"scenario": Scenario.DIRECT, "filter_mode": "active", "pair_rate": 1e7, "duration": 100.0},
    "fig4": {"scenario": Scenario.ABSORPTION_CELL, "filter_mode": "active", "pair_rate": 2e6, "duration": 200.0},
    "g2-table": {"scenario": Scenario.SPLIT_SIGNAL, "filter_mode": "active", "pair_rate": None, "duration": 200.0},
}


def chi_square_per_dof(observed, expected, fitted_parameters=1):
    """Pearson chi-square per degree of freedom over bins with a positive expectation."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    used = expected > 0
    dof = int(np.count_nonzero(used)) - fitted_parameters
    if dof <= 0:
        raise ConfigError("too few bins for a chi-square test")
    return float(np.sum((observed[used] - expected[used]) ** 2 / expected[used]) / dof)


def comb_power_ratio(delays_ps, counts, frequency):
    """|Fourier component of the histogram at ``frequency``| relative to its total."""
    counts = np.asarray(counts, dtype=float)
    phases = np.exp(-2j * np.pi * frequency * np.asarray(delays_ps, dtype=float) * 1e-12)
    return float(abs(np.sum(counts * phases)) / counts.sum())


def comb_spacing(delays_ps, counts, bin_width_ps, n_frequencies=4001):
    """Peak spacing (s) from the strongest Fourier component below the Nyquist frequency."""
    nyquist = 0.5 / (bin_width_ps * 1e-12)
    frequencies = np.linspace(0.2 * nyquist, nyquist, n_frequencies)
    centred = np.asarray(counts, dtype=float) - np.mean(counts)
    phases = np.exp(-2j * np.pi * np.outer(frequencies, np.asarray(delays_ps, dtype=float) * 1e-12))
    spectrum = np.abs(phases @ centred)
    return 1.0 / frequencies[int(np.argmax(spectrum))]


def write_n23_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("window_ps,n23\n")
        for window, n23 in zip(report.extrapolation_windows_ps, report.n23_by_window):
            f.write("{},{}\n".format(window, n23))


def run_g2(config, tags):
    """heralded_g2 of a tag stream (or tag file path) with the analysis settings of ``config``."""
    analysis = config.analysis
    windows = extrapolation_windows(analysis.to_ps(analysis.max_window_ns), analysis.to_ps(analysis.window_step_ns),
                                    analysis.to_ps(analysis.min_window_ns))
    if isinstance(tags, (str, os.PathLike)):
        tags = read_tags(tags)
    return heralded_g2(tags, analysis.trigger, analysis.arm_a, analysis.arm_b, analysis.to_ps(analysis.window_ns),
                       windows, analysis.fit_form, analysis.bunching)


def g2_options(config):
    analysis = config.analysis
    return {
        "window_ps": analysis.to_ps(analysis.window_ns),
        "extrapolation_windows_ps": extrapolation_windows(analysis.to_ps(analysis.max_window_ns),
                                                          analysis.to_ps(analysis.window_step_ns),
                                                          analysis.to_ps(analysis.min_window_ns)),
        "fit_form": analysis.fit_form,
        "bunching_factor": analysis.bunching,
    }


def preset_sim_config(name, config, **overrides):
    """SimConfig of a preset: its scenario and filter, its rate unless configured."""
    run = PRESET_RUNS[name]
    settings = dict(
        scenario=run["scenario"],
        pair_rate=config.run.pair_rate or run["pair_rate"],
        duration=config.run.duration or run["duration"],
        filter=dataclasses.replace(config.filter, mode=run["filter_mode"]),
        prethin=True,
    )
    settings.update(overrides)
    return config.sim_config(**settings)


def _simulate_to(output_dir, sim_config, file_name=TAG_FILE_NAME):
    result = simulate(sim_config)
    path = os.path.join(output_dir, file_name)
    write_tags(result.tags, path)
    return result, path


def _histogram_with_theory(config, sim_config, tags, output_dir, suffix=""):
    analysis = config.analysis
    bin_ps = analysis.to_ps(analysis.bin_ns)
    histogram = coincidence_histogram(tags, analysis.ref, analysis.sig, bin_ps, analysis.to_ps(analysis.range_ns))
    theory = expected_histogram(sim_config, bin_ps, histogram.half_bins, signal_channel=analysis.sig,
                                observed=histogram.counts)
    histogram_path = os.path.join(output_dir, "histogram{}.csv".format(suffix))
    theory_path = os.path.join(output_dir, "theory{}.csv".format(suffix))
    histogram_export(histogram, histogram_path)
    with open(theory_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("delay_ps,expected\n")
        for delay, value in zip(histogram.delays_ps.tolist(), theory.tolist()):
            f.write("{},{:.17g}\n".format(delay, value))
    return histogram, theory, [histogram_path, theory_path]


def _comb_preset(name, config, output_dir):
    sim_config = preset_sim_config(name, config)
    result, tag_path = _simulate_to(output_dir, sim_config)
    histogram, theory, paths = _histogram_with_theory(config, sim_config, result.tags, output_dir)
    fsr = sim_config.cavity.fsr
    summary = {
        "chi2_per_dof": chi_square_per_dof(histogram.counts, theory),
        "comb_power_ratio": comb_power_ratio(histogram.delays_ps, histogram.counts, fsr),
        "comb_spacing_ns": comb_spacing(histogram.delays_ps, histogram.counts, histogram.bin_width_ps) * 1e9,
        "round_trip_ns": 1e9 / fsr,
        "coincidences": histogram.total,
        "pair_rate": sim_config.pair_rate,
        "duration": sim_config.duration,
    }
    counts = dict(result.counts, coincidences=histogram.total)
    hashes = write_manifest(output_dir, name, config, counts, [tag_path] + paths)
    message = "chi2/dof {:.3g}, comb power ratio {:.3g}".format(summary["chi2_per_dof"], summary["comb_power_ratio"])
    return dict(summary, status="success", message=message, counts=result.counts, artifacts=hashes)


def preset_fig2(config, output_dir):
    return _comb_preset("fig2", config, output_dir)


def preset_fig3(config, output_dir):
    return _comb_preset("fig3", config, output_dir)


def preset_fig4(config, output_dir):
    """Same seed at both optical densities, so only the cell draws differ."""
    analysis = config.analysis
    window_ps = analysis.to_ps(analysis.window_ns)
    runs, paths, counts = {}, [], {}
    for label, od in (("low", config.cell.od_low), ("high", config.cell.od_high)):
        sim_config = preset_sim_config("fig4", config, cell=config.cell.cell(od))
        result, tag_path = _simulate_to(output_dir, sim_config, "tags_{}.ttg".format(label))
        _, _, histogram_paths = _histogram_with_theory(config, sim_config, result.tags, output_dir, "_" + label)
        true, accidental = expected_window_coincidences(sim_config, window_ps, analysis.sig)
        runs[label] = {
            "coincidences": window_coincidences(result.tags, analysis.ref, analysis.sig, window_ps),
            "expected": true + accidental,
        }
        paths.extend([tag_path] + histogram_paths)
        counts.update({"{}_{}".format(k, label): v for k, v in result.counts.items()})

    report = resonant_fraction(runs["low"]["coincidences"], runs["high"]["coincidences"],
                               transmission_from_od(config.cell.od_low), transmission_from_od(config.cell.od_high))
    expected_ratio = runs["low"]["expected"] / runs["high"]["expected"]
    # Poisson error of a ratio of two counts
    ratio_stderr = report.ratio * math.sqrt(1.0 / max(report.c_low, 1) + 1.0 / max(report.c_high, 1))
    counts.update(c_low=report.c_low, c_high=report.c_high)
    hashes = write_manifest(output_dir, "fig4", config, counts, paths)
    sim_config = preset_sim_config("fig4", config)
    return dict(
        report.as_dict(),
        status="success",
        message="ratio {:.4g} (expected {:.4g}), resonant fraction {:.4g}".format(
            report.ratio, expected_ratio, report.fraction),
        expected_ratio=expected_ratio,
        ratio_stderr=ratio_stderr,
        expected_resonant_fraction=expected_resonant_fraction(
            sim_config.filter, sim_config.cavity, sim_config.signal_polarization, sim_config.m_max, coincident=True),
        artifacts=hashes,
    )


def preset_g2_table(config, output_dir):
    options = g2_options(config)
    sim_config = preset_sim_config("g2-table", config, pair_rate=config.run.pair_rate or 1.0)
    if config.run.pair_rate is None:
        tuned = tune_pair_rate(sim_config, config.analysis.target_g2, **options)
        sim_config = sim_config.with_pair_rate(tuned.pair_rate)
    prediction = predict_g2(sim_config, **options)
    result, tag_path = _simulate_to(output_dir, sim_config)
    report = run_g2(config, result.tags)
    n23_path = os.path.join(output_dir, "n23.csv")
    write_n23_csv(report, n23_path)
    counts = dict(result.counts, n1=report.n1, n2=report.n2, n3=report.n3)
    hashes = write_manifest(output_dir, "g2-table", config, counts, [tag_path, n23_path])
    return dict(
        report.as_dict(),
        status="success",
        message="g2 = {:.4g} +- {:.2g} at {:.4g} pairs/s (predicted {:.4g})".format(
            report.g2_value, report.g2_stderr, sim_config.pair_rate, prediction.g2_value),
        pair_rate=sim_config.pair_rate,
        duration=sim_config.duration,
        predicted_g2=prediction.g2_value,
        artifacts=hashes,
    )


PRESETS = {
    "fig2": preset_fig2,
    "fig3": preset_fig3,
    "fig4": preset_fig4,
    "g2-table": preset_g2_table,
}


def run_preset(name, config, output_dir):
    if name not in PRESETS:
        raise ConfigError("unknown preset {!r}; expected one of {}".format(name, sorted(PRESETS)))
    os.makedirs(output_dir, exist_ok=True)
    logger.info("Running preset %s into %s.", name, output_dir)
    return PRESETS[name](config, output_dir)
