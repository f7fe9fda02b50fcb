"""Config parsing, artifact writing, validation suites and the entry point."""

import csv
import dataclasses
import json
import math
import os

import numpy as np
import pytest

from torusflow import cli
from torusflow.cli import (ConfigError, PRESETS, ScenarioConfig, load_artifacts,
                           l2_length_constant, main, parse_config, run_scenario,
                           serialize_config, validate)
from torusflow.diagnostics import TraceRecord


def test_parse_minimal_custom_config():
    config = parse_config("curve.kind = \"dehn_twist\"\nflow.t_max = 10.0\n")
    assert config.scenario == "custom"
    assert config.curve_kind == "dehn_twist"
    assert config.flow_t_max == 10.0
    assert config.curve_deck == ((1, -1), (0, 1))  # kind default


def test_parse_comments_and_blank_lines():
    config = parse_config("""
# a comment
curve.kind = "closed_loop"   # trailing comment
flow.eta = 0.5
""")
    assert config.curve_kind == "closed_loop"
    assert config.flow_eta == 0.5
    assert config.curve_deck == ((1, 0), (0, 1))


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError, match="line 1.*unknown key"):
        parse_config("curve.knid = \"dehn_twist\"\n")


def test_parse_rejects_bad_syntax_with_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("flow.eta = 1.0\nnot a config line\n")
    with pytest.raises(ConfigError, match="line 1.*bad value"):
        parse_config("flow.eta = oops\n")


def test_parse_rejects_unknown_preset():
    with pytest.raises(ConfigError, match="unknown scenario preset"):
        parse_config('scenario = "nope"\n')


def test_parse_rejects_orientation_reversing_deck():
    with pytest.raises(ConfigError, match="orientation-preserving"):
        parse_config('curve.kind = "dehn_twist"\ncurve.deck = [[1, 0], [0, -1]]\n')


def test_parse_rejects_invalid_flow_settings():
    with pytest.raises(ConfigError, match="invalid flow"):
        parse_config("flow.eta = -1.0\n")
    with pytest.raises(ConfigError, match="a0 and initial.b0"):
        parse_config("initial.a0 = 0.5\n")


def test_preset_defaults_and_overrides():
    config = parse_config('scenario = "winding-dehn"\n')
    assert config.flow_t_max == 1e150
    assert config.flow_method == "radau"
    assert config.curve_deck == ((1, -1), (0, 1))
    override = parse_config('scenario = "winding-dehn"\nflow.t_max = 1e10\n')
    assert override.flow_t_max == 1e10
    assert override.flow_method == "radau"


def test_serialize_round_trip_presets():
    for name in PRESETS:
        config = parse_config(f'scenario = "{name}"\n')
        assert parse_config(serialize_config(config)) == config


def test_serialize_round_trip_randomized():
    rng = np.random.default_rng(71)
    kinds = ("dehn_twist", "closed_loop")
    for _ in range(100):
        kind = kinds[int(rng.integers(0, 2))]
        lines = [
            f'curve.kind = "{kind}"',
            f"flow.eta = {float(rng.uniform(0.1, 3.0))!r}",
            f"flow.t_max = {float(np.exp(rng.uniform(0, 10)))!r}",
            f"flow.rel_tol = {float(10.0 ** rng.uniform(-10, -4))!r}",
            f"initial.z0 = {float(rng.uniform(-1, 2))!r}",
            f"seed = {int(rng.integers(0, 1000))}",
        ]
        if kind == "closed_loop":
            lines.append(f"curve.center = [{float(rng.uniform(-1, 1))!r}, "
                         f"{float(rng.uniform(1.5, 4.0))!r}]")
            lines.append(f"curve.radius = {float(rng.uniform(0.0, 0.5))!r}")
        else:
            lines.append(f"curve.beta0 = {float(rng.uniform(0.5, 2.0))!r}")
        if rng.integers(0, 2):
            lines.append('flow.level_offsets = [0.0, 0.25, 0.5]')
        config = parse_config("\n".join(lines) + "\n")
        assert parse_config(serialize_config(config)) == config


def test_l2_length_constant():
    assert l2_length_constant(1.0) == 0.5
    assert l2_length_constant(2.0) == 1.0


def test_run_scenario_artifacts(converging_artifacts):
    art = converging_artifacts
    assert art.ok
    for path in (art.trace_path, art.events_path, art.report_path,
                 art.manifest_path):
        assert os.path.exists(path)
    with open(art.manifest_path, encoding="utf-8") as fh:
        manifest = fh.read()
    assert "status: ok" in manifest
    assert "kappa_qd_norm: 16.0" in manifest
    assert "l2_length_constant: 0.5" in manifest
    assert "scenario = \"analytic-converging\"" in manifest


def test_trace_csv_schema(converging_artifacts):
    with open(converging_artifacts.trace_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TraceRecord.FIELDS
    assert len(rows) > 10
    for row in rows[1:]:
        assert len(row) == len(TraceRecord.FIELDS)
        float(row[0])  # t parses
        int(row[10])  # winding_index is an integer literal
    ts = [float(r[0]) for r in rows[1:]]
    assert ts == sorted(ts)


def test_events_jsonl_schema(dehn_artifacts):
    with open(dehn_artifacts.events_path, encoding="utf-8") as fh:
        events = [json.loads(line) for line in fh if line.strip()]
    assert events
    for ev in events:
        assert set(ev) == {"kind", "t", "j", "offset", "value"}
        assert ev["kind"] in ("level_crossing", "velocity_min")
    crossings = [ev for ev in events if ev["kind"] == "level_crossing"]
    assert crossings
    for ev in crossings:
        assert ev["value"] == pytest.approx(ev["offset"] + ev["j"], abs=1e-9)


def test_report_jsonl_contents(dehn_artifacts):
    kinds = [line["kind"] for line in dehn_artifacts.report_lines]
    assert kinds == ["curve_validation", "limit_analysis", "lojasiewicz",
                     "l2_length", "summary"]
    by_kind = {line["kind"]: line for line in dehn_artifacts.report_lines}
    assert by_kind["curve_validation"]["passed"]
    assert by_kind["limit_analysis"]["applicable"]
    assert not by_kind["lojasiewicz"]["applicable"]
    length = by_kind["l2_length"]
    assert length["metric"] <= length["metric_bound"]
    summary = by_kind["summary"]
    assert summary["ok"]
    assert summary["winding_index"] >= 5
    assert summary["min_inj_radius"] > 0.2


def test_run_scenario_failure_still_writes_manifest(tmp_path):
    config = parse_config('scenario = "winding-dehn"\ninitial.z0 = 750.0\n')
    art = run_scenario(config, output_root=str(tmp_path))
    assert not art.ok
    assert art.messages
    with open(art.manifest_path, encoding="utf-8") as fh:
        manifest = fh.read()
    assert "status: failed" in manifest
    assert not os.path.exists(art.trace_path)


def test_run_determinism(tmp_path):
    config = parse_config('scenario = "analytic-converging"\n')
    first = run_scenario(dataclasses.replace(config, output_dir="one"),
                         output_root=str(tmp_path))
    second = run_scenario(dataclasses.replace(config, output_dir="two"),
                          output_root=str(tmp_path))
    for name in ("trace.csv", "events.jsonl", "report.jsonl"):
        with open(os.path.join(first.run_dir, name), "rb") as fh:
            blob1 = fh.read()
        with open(os.path.join(second.run_dir, name), "rb") as fh:
            blob2 = fh.read()
        assert blob1 == blob2, f"{name} differs between identical runs"


def test_load_artifacts_round_trip(converging_artifacts):
    loaded = load_artifacts(converging_artifacts.run_dir)
    assert len(loaded.records) == len(converging_artifacts.records)
    for orig, back in zip(converging_artifacts.records, loaded.records):
        assert back.t == orig.t
        assert back.energy == orig.energy
        assert back.winding_index == orig.winding_index
    kinds = [line["kind"] for line in loaded.report_lines]
    assert "summary" in kinds


def test_load_artifacts_rejects_bad_schema(tmp_path):
    run_dir = tmp_path / "bad"
    run_dir.mkdir()
    (run_dir / "trace.csv").write_text("t,z,a\n0.0,0.0,0.0\n")
    with pytest.raises(ValueError, match="schema"):
        load_artifacts(str(run_dir))
    with pytest.raises(FileNotFoundError):
        load_artifacts(str(tmp_path / "missing"))


def test_validate_suites_pass():
    results = validate(seed=0)
    names = [r.name for r in results]
    assert names == ["cosh-energy identity", "wp bound",
                     "energy-decay identity", "hopf/energy quadrature",
                     "lattice brute force", "mapping-class congruence"]
    for res in results:
        assert res.passed, f"{res.name}: {res.max_error} > {res.tolerance}"


def test_validate_negative_control():
    # a 1% perturbation of the norm constant must break the decay identity
    results = validate(seed=0, kappa=16.0 * 1.01)
    decay = next(r for r in results if r.name == "energy-decay identity")
    assert not decay.passed
    others = [r for r in results if r.name != "energy-decay identity"]
    assert all(r.passed for r in others)


def test_main_simulate_preset(tmp_path, capsys):
    rc = main(["--output-root", str(tmp_path), "simulate", "analytic-converging"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "analytic-converging" in out
    assert "artifacts in" in out
    assert os.path.exists(tmp_path / "analytic-converging" / "trace.csv")


def test_main_simulate_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text('scenario = "analytic-converging"\noutput.dir = "custom-name"\n')
    rc = main(["--output-root", str(tmp_path), "simulate", str(cfg)])
    assert rc == 0
    assert os.path.exists(tmp_path / "custom-name" / "report.jsonl")


def test_main_simulate_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("flow.eta = -2.0\n")
    rc = main(["--output-root", str(tmp_path), "simulate", str(cfg)])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_main_validate(capsys):
    rc = main(["validate", "--seed", "1"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("pass") == 6
    assert "FAIL" not in out


def test_main_report_and_plot(converging_artifacts, capsys):
    rc = main(["report", converging_artifacts.run_dir])
    assert rc == 0
    out = capsys.readouterr().out
    assert "status: ok" in out
    assert "lojasiewicz exponent estimate" in out
    rc = main(["plot", converging_artifacts.run_dir])
    assert rc == 0
    out = capsys.readouterr().out
    for name in ("energy.svg", "z.svg", "path.svg", "tracking.svg",
                 "lojasiewicz.svg"):
        assert name in out
        assert os.path.exists(os.path.join(converging_artifacts.run_dir, name))


def test_main_sweep(tmp_path, capsys):
    cfg_dir = tmp_path / "cfgs"
    cfg_dir.mkdir()
    (cfg_dir / "a.cfg").write_text('scenario = "analytic-converging"\n')
    (cfg_dir / "b.cfg").write_text(
        'scenario = "analytic-converging"\nflow.t_max = 5.0\n')
    rc = main(["--output-root", str(tmp_path / "out"), "sweep",
               str(cfg_dir / "*.cfg"), "--jobs", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "a: ok" in out and "b: ok" in out
    assert os.path.exists(tmp_path / "out" / "a" / "trace.csv")
    assert os.path.exists(tmp_path / "out" / "b" / "trace.csv")


def test_main_sweep_no_match(tmp_path, capsys):
    rc = main(["sweep", str(tmp_path / "*.nope")])
    assert rc == 2


def test_output_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "env-root"))
    config = parse_config('scenario = "analytic-converging"\nflow.t_max = 2.0\n')
    art = run_scenario(config)
    assert art.run_dir.startswith(str(tmp_path / "env-root"))
    assert os.path.exists(art.trace_path)
