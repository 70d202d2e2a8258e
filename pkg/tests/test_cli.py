# HeraldComb: runs in a standard CPython 3.9+ environment.
import json
import os

import pytest

from heraldcomb_errors import AnalysisUndefinedError, ConfigError
from HeraldComb_CLI.commands import command, format_report
from HeraldComb_CLI.config import RunConfig, load_config
from HeraldComb_CLI.main import build_parser, main
from HeraldComb_CLI.manifest import MANIFEST_NAME, file_sha256, read_manifest
from HeraldComb_CLI.presets import run_preset
from HeraldComb_Correlator.histogram import read_histogram_csv
from HeraldComb_Correlator.tag_io import read_tags, write_tags

SUBCOMMAND_FLAGS = {
    "analytic": ["--m-max", "--range-ns", "--points"],
    "simulate": ["--scenario", "--od", "--pair-rate", "--duration"],
    "correlate": ["--ref", "--sig", "--bin-ns", "--range-ns", "--workers"],
    "g2": ["--trigger", "--arm-a", "--arm-b", "--window-ns", "--max-window-ns", "--window-step-ns", "--fit-form",
           "--bunching", "--n23-csv"],
    "resonance": ["--ref", "--sig", "--od-low", "--od-high", "--window-ns"],
    "preset": ["fig2", "fig3", "fig4", "g2-table"],
    "init-config": ["path"],
}

IDEAL_UNFILTERED = {"filter": {"mode": "inactive"}, "detectors": {"efficiency": 1.0, "dark_rate": 0.0}}
GOLDEN_HELP = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden", "heraldcomb_help.txt")


def report_lines(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def config_file(tmp_path, document):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)


def test_top_level_help_matches_the_golden_file(monkeypatch):
    monkeypatch.setenv("COLUMNS", "200")
    monkeypatch.setenv("NO_COLOR", "1")
    monkeypatch.delenv("FORCE_COLOR", raising=False)
    with open(GOLDEN_HELP, encoding="utf-8") as f:
        golden = f.read()
    # older Pythons title the flag section "optional arguments"
    text = build_parser().format_help().replace("\noptional arguments:\n", "\noptions:\n")
    assert text == golden


@pytest.mark.parametrize("name", sorted(SUBCOMMAND_FLAGS))
def test_every_subcommand_documents_its_flags(capsys, name):
    with pytest.raises(SystemExit) as excinfo:
        build_parser().parse_args([name, "--help"])
    assert excinfo.value.code == 0
    text = capsys.readouterr().out
    for flag in SUBCOMMAND_FLAGS[name] + ["--config", "--output", "--seed", "--debug"]:
        assert flag in text


def test_global_flags_are_accepted_after_the_command():
    args = build_parser().parse_args(["simulate", "--seed", "5", "--output", "out"])
    assert (args.seed, args.output, args.debug) == (5, "out", False)
    args = build_parser().parse_args(["--seed", "6", "simulate"])
    assert args.seed == 6


def test_init_config_writes_the_defaults(tmp_path, capsys):
    assert main(["init-config"]) == 0
    path = os.path.join(os.environ["HERALDCOMB_OUTPUT_DIR"], "heraldcomb_config.json")
    assert load_config(path).config_hash() == load_config(None).config_hash()
    assert report_lines(capsys.readouterr().out)["status"] == "success"
    explicit = str(tmp_path / "mine.json")
    assert main(["init-config", explicit]) == 0
    assert os.path.exists(explicit)


def test_unknown_configuration_key_exits_with_two(tmp_path, capsys):
    code = main(["--config", config_file(tmp_path, {"run": {"bogus": 1}}), "init-config"])
    assert code == 2
    assert "unknown key 'run.bogus'" in capsys.readouterr().err


def test_analytic_writes_curves_and_manifest(tmp_path, capsys):
    output = str(tmp_path / "analytic")
    code = main(["--output", output, "analytic", "--m-max", "10", "--range-ns", "400", "--points", "4096"])
    assert code == 0
    report = report_lines(capsys.readouterr().out)
    assert report["m_max"] == "10"
    manifest = read_manifest(os.path.join(output, MANIFEST_NAME))
    assert manifest["command"] == "analytic"
    assert manifest["seed"] == "0"
    assert manifest["count.points"] == "4096"
    for name in ("multimode.csv", "singlemode.csv"):
        digest = file_sha256(os.path.join(output, name))
        assert manifest["artifact.{}.sha256".format(name)] == digest
        assert report["artifacts.{}".format(name)] == digest


def test_analytic_rejects_a_short_grid(tmp_path, capsys):
    code = main(["--output", str(tmp_path), "analytic", "--range-ns", "10", "--points", "100"])
    assert code == 2
    err = capsys.readouterr().err
    assert "status=error" in err
    assert "problems=" in err


def test_simulate_correlate_g2_pipeline(tmp_path, capsys):
    config = config_file(tmp_path, IDEAL_UNFILTERED)
    output = str(tmp_path / "run")
    common = ["--config", config, "--output", output, "--seed", "3"]

    assert main(common + ["simulate", "--scenario", "c", "--pair-rate", "1e5", "--duration", "0.1"]) == 0
    simulated = report_lines(capsys.readouterr().out)
    assert simulated["scenario"] == "split-signal"
    tag_path = os.path.join(output, "tags.ttg")
    tags = read_tags(tag_path)
    assert tags.channel_count == 3
    assert int(simulated["counts.tags_ch0"]) == tags.counts_per_channel()[0]
    assert read_manifest(os.path.join(output, MANIFEST_NAME))["seed"] == "3"

    assert main(common + ["correlate", tag_path, "--ref", "0", "--sig", "1", "--range-ns", "50"]) == 0
    correlated = report_lines(capsys.readouterr().out)
    delays, counts = read_histogram_csv(os.path.join(output, "histogram.csv"))
    assert int(correlated["bins"]) == len(delays) == 101
    assert int(correlated["counts.coincidences"]) == counts.sum() > 0

    assert main(common + ["g2", tag_path, "--n23-csv", "n23.csv"]) == 0
    g2 = report_lines(capsys.readouterr().out)
    assert float(g2["g2_value"]) < 0.5
    assert g2["fit_form"] == "linear-quadratic"
    assert os.path.exists(os.path.join(output, "n23.csv"))


def test_simulation_is_reproducible_from_the_command_line(tmp_path):
    config = config_file(tmp_path, IDEAL_UNFILTERED)
    digests = []
    for name in ("first", "second"):
        output = str(tmp_path / name)
        assert main(["--config", config, "--output", output, "simulate", "--pair-rate", "1e5", "--duration", "0.05"]) == 0
        digests.append(file_sha256(os.path.join(output, "tags.ttg")))
    assert digests[0] == digests[1]


def test_bad_tag_file_exits_with_three(tmp_path, capsys):
    bad = tmp_path / "bad.ttg"
    bad.write_bytes(b"XXXX" + bytes(60))
    assert main(["--output", str(tmp_path / "out"), "correlate", str(bad)]) == 3
    assert "status=error" in capsys.readouterr().err


def test_missing_tag_file_exits_with_three(tmp_path, capsys):
    missing = str(tmp_path / "absent.ttg")
    assert main(["--output", str(tmp_path / "out"), "correlate", missing]) == 3
    err = capsys.readouterr().err
    assert "status=error" in err and "cannot read tag file" in err
    assert main(["--output", str(tmp_path / "out"), "resonance", missing, missing]) == 3


def test_unwritable_output_exits_with_one(tmp_path, capsys):
    blocker = tmp_path / "taken"
    blocker.write_text("not a directory", encoding="utf-8")
    code = main(["--output", str(blocker), "simulate", "--pair-rate", "1e4", "--duration", "0.01"])
    assert code == 1
    assert "file system error" in capsys.readouterr().err


def test_preset_creates_its_output_directory(tmp_path):
    config = RunConfig().with_section("run", pair_rate=1e5, duration=0.05, seed=4)
    output = tmp_path / "nested" / "fig2"
    summary = run_preset("fig2", config, str(output))
    assert summary["status"] == "success"
    assert (output / "tags.ttg").exists()
    assert read_manifest(str(output / MANIFEST_NAME))["seed"] == "4"


def test_g2_without_triggers_exits_with_four(tmp_path, stream_factory):
    path = str(tmp_path / "arms_only.ttg")
    write_tags(stream_factory([(1000, 1), (1010, 2)], channel_count=3), path)
    assert main(["--output", str(tmp_path / "out"), "g2", path]) == 4
    assert main(["--output", str(tmp_path / "out"), "g2", path, "--arm-b", "1"]) == 2


def test_resonance_from_two_files(tmp_path, capsys, stream_factory):
    low, high = str(tmp_path / "low.ttg"), str(tmp_path / "high.ttg")
    write_tags(stream_factory([(1000, 0), (1010, 1), (5000, 0), (5015, 1), (9000, 0), (9005, 1)]), low)
    write_tags(stream_factory([(1000, 0), (1010, 1), (5000, 0), (9000, 0)]), high)
    output = str(tmp_path / "out")
    assert main(["--output", output, "resonance", low, high, "--window-ns", "0.04"]) == 0
    report = report_lines(capsys.readouterr().out)
    assert (report["c_low"], report["c_high"]) == ("3", "1")
    assert float(report["ratio"]) == pytest.approx(3.0)
    manifest = read_manifest(os.path.join(output, MANIFEST_NAME))
    assert (manifest["count.c_low"], manifest["count.c_high"]) == ("3", "1")


def test_format_report_flattens_nested_results():
    lines = format_report({"status": "success", "counts": {"b": 2, "a": 1}, "windows": (1, 2)})
    assert lines == ["counts.a=1", "counts.b=2", "status=success", "windows=1,2"]


def test_command_decorator_maps_errors_to_exit_codes():
    @command("demo")
    def failing(error):
        raise error

    response, code = failing(ConfigError("bad flags", ["one", "two"]))
    assert code == 2
    assert response["status"] == "error" and response["problems"] == ["one", "two"]
    response, code = failing(AnalysisUndefinedError("nothing to estimate"))
    assert code == 4 and "problems" not in response
