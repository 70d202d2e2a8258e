# HeraldComb: runs in a standard CPython 3.9+ environment.
"""
Command implementations of the HeraldComb command line.

Each ``cmd_*`` function returns ``(response_dict, exit_code)``; the response
has ``status`` ("success" or "error") and ``message`` plus the command's
results. Library errors are caught here and turned into error responses
carrying the exit code of the exception.
"""

import functools
import logging
import os

from heraldcomb_errors import HeraldCombError
from HeraldComb_CLI.config import default_config_document, save_config, RunConfig
from HeraldComb_CLI.manifest import write_manifest
from HeraldComb_CLI.presets import TAG_FILE_NAME, run_g2, run_preset, write_n23_csv
from HeraldComb_Correlator.histogram import coincidence_histogram, histogram_export
from HeraldComb_Correlator.resonance import resonance_from_streams
from HeraldComb_Correlator.tag_io import iter_tag_chunks, read_tags, write_tags
from HeraldComb_Simulator.generator import simulate
from HeraldComb_Spectral.spectral_model import tabulate_pdf, write_curve_csv

logger = logging.getLogger('HeraldComb.CLI')


def command(name):
    """Wrap a command: log it and map HeraldCombError or OSError to an error response.

    Unreadable inputs surface as TagFormatError (exit 3); any other OSError,
    such as an output directory that cannot be written, exits with 1.
    """

    def decorate(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            logger.info("Command '%s' started.", name)
            try:
                response, code = func(*args, **kwargs)
            except HeraldCombError as e:
                logger.error("Command '%s' failed: %s", name, e, exc_info=True)
                response = {"status": "error", "message": str(e)}
                problems = getattr(e, "problems", None)
                if problems and len(problems) > 1:
                    response["problems"] = list(problems)
                return response, e.exit_code
            except OSError as e:
                logger.error("Command '%s' failed on the file system: %s", name, e, exc_info=True)
                return {"status": "error", "message": "file system error: {}".format(e)}, HeraldCombError.exit_code
            logger.info("Command '%s' finished with exit code %d.", name, code)
            return response, code

        return wrapper

    return decorate


def _prepare_output(output_dir):
    os.makedirs(output_dir, exist_ok=True)
    return output_dir


def format_report(response, prefix=""):
    """Flatten a response into sorted ``key=value`` lines."""
    lines = []
    for key in sorted(response):
        value = response[key]
        name = "{}{}".format(prefix, key)
        if isinstance(value, dict):
            lines.extend(format_report(value, name + "."))
        elif isinstance(value, (list, tuple)):
            lines.append("{}={}".format(name, ",".join(str(v) for v in value)))
        else:
            lines.append("{}={}".format(name, value))
    return lines


@command("analytic")
def cmd_analytic(config, output_dir, m_max=None, range_ns=None, points=None):
    """Tabulate the multimode and single-mode correlation curves to CSV."""
    config = config.with_section("spectral", m_max=m_max, range_ns=range_ns, points=points)
    output_dir = _prepare_output(output_dir)
    params = config.cavity_params()
    t_range = config.spectral.range_ns * 1e-9

    multimode = tabulate_pdf(params, config.spectral.m_max, t_range, config.spectral.points)
    single = tabulate_pdf(params, 0, t_range, config.spectral.points)
    paths = [os.path.join(output_dir, "multimode.csv"), os.path.join(output_dir, "singlemode.csv")]
    write_curve_csv(multimode, paths[0])
    write_curve_csv(single, paths[1])
    hashes = write_manifest(output_dir, "analytic", config, {"points": config.spectral.points}, paths)
    return {
        "status": "success",
        "message": "Tabulated multimode (m_max={}) and single-mode curves.".format(multimode.m_max),
        "m_max": multimode.m_max,
        "points": config.spectral.points,
        "artifacts": hashes,
    }, 0


@command("simulate")
def cmd_simulate(config, output_dir, scenario=None, od=None, pair_rate=None, duration=None):
    """Run one scenario and write the tag file."""
    output_dir = _prepare_output(output_dir)
    sim_config = config.sim_config(scenario=scenario, od=od, pair_rate=pair_rate, duration=duration)
    result = simulate(sim_config)
    path = os.path.join(output_dir, TAG_FILE_NAME)
    write_tags(result.tags, path)
    hashes = write_manifest(output_dir, "simulate", config, result.counts, [path])
    return {
        "status": "success",
        "message": "Simulated scenario {} with {} tags.".format(sim_config.scenario.value, len(result.tags)),
        "scenario": sim_config.scenario.value,
        "channels": sim_config.scenario.channel_count,
        "counts": result.counts,
        "artifacts": hashes,
    }, 0


@command("correlate")
def cmd_correlate(config, tagfile, output_dir, ref=None, sig=None, bin_ns=None, range_ns=None, workers=None):
    """Coincidence histogram of a tag file, streamed chunk by chunk."""
    config = config.with_section("analysis", ref=ref, sig=sig, bin_ns=bin_ns, range_ns=range_ns, workers=workers)
    analysis = config.analysis
    output_dir = _prepare_output(output_dir)
    if analysis.workers > 1:
        tags = read_tags(tagfile)
    else:
        tags = iter_tag_chunks(tagfile)
    result = coincidence_histogram(tags, analysis.ref, analysis.sig, analysis.to_ps(analysis.bin_ns),
                                   analysis.to_ps(analysis.range_ns), workers=analysis.workers)
    path = os.path.join(output_dir, "histogram.csv")
    histogram_export(result, path)
    counts = {"coincidences": result.total, "ref_events": result.n_ref_events, "sig_events": result.n_sig_events}
    hashes = write_manifest(output_dir, "correlate", config, counts, [path])
    return {
        "status": "success",
        "message": "Histogram of {} bins with {} coincidences.".format(result.n_bins, result.total),
        "bins": result.n_bins,
        "counts": counts,
        "artifacts": hashes,
    }, 0


@command("g2")
def cmd_g2(config, tagfile, output_dir, trigger=None, arm_a=None, arm_b=None, window_ns=None, max_window_ns=None,
           window_step_ns=None, fit_form=None, bunching=None, n23_csv=None):
    """Heralded g2 of a three-channel tag file."""
    config = config.with_section("analysis", trigger=trigger, arm_a=arm_a, arm_b=arm_b, window_ns=window_ns,
                                 max_window_ns=max_window_ns, window_step_ns=window_step_ns, fit_form=fit_form,
                                 bunching=bunching)
    output_dir = _prepare_output(output_dir)
    report = run_g2(config, tagfile)
    artifacts = []
    if n23_csv:
        n23_path = n23_csv if os.path.isabs(n23_csv) else os.path.join(output_dir, n23_csv)
        write_n23_csv(report, n23_path)
        artifacts.append(n23_path)
    record = report.as_dict()
    counts = {"n1": report.n1, "n2": report.n2, "n3": report.n3, "n23_direct": report.n23_direct}
    hashes = write_manifest(output_dir, "g2", config, counts, artifacts)
    record.update({
        "status": "success",
        "message": "g2 = {:.4g} +- {:.2g}".format(report.g2_value, report.g2_stderr),
        "artifacts": hashes,
    })
    return record, 0


@command("resonance")
def cmd_resonance(config, tagfile_low, tagfile_high, output_dir, ref=None, sig=None, od_low=None, od_high=None,
                  window_ns=None):
    """Resonant fraction from runs at a low and a high optical density."""
    config = config.with_section("analysis", ref=ref, sig=sig, window_ns=window_ns)
    config = config.with_section("cell", od_low=od_low, od_high=od_high)
    output_dir = _prepare_output(output_dir)
    analysis = config.analysis
    report = resonance_from_streams(read_tags(tagfile_low), read_tags(tagfile_high), analysis.ref, analysis.sig,
                                    analysis.to_ps(analysis.window_ns), config.cell.od_low, config.cell.od_high)
    hashes = write_manifest(output_dir, "resonance", config, {"c_low": report.c_low, "c_high": report.c_high})
    record = report.as_dict()
    record.update({
        "status": "success",
        "message": "Resonant fraction {:.4g} +- {:.2g}.".format(report.fraction, report.fraction_stderr),
        "artifacts": hashes,
    })
    return record, 0


@command("preset")
def cmd_preset(config, name, output_dir):
    """Run one named pipeline into ``output_dir/<name>``."""
    return run_preset(name, config, _prepare_output(os.path.join(output_dir, name))), 0


@command("init-config")
def cmd_init_config(path):
    """Write the default configuration document to ``path``."""
    save_config(RunConfig.from_document(default_config_document()), path)
    return {"status": "success", "message": "Default configuration written to {}.".format(path), "path": path}, 0
