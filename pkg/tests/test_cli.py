import json

import pytest
from hypothesis import given, settings, strategies as st

from fbminmax import cli
from fbminmax.cli import ConfigInvalid, MissingArtifacts, RunConfig, main, summarize
from fbminmax.sweepout import CoverFailure


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), h=st.floats(0.005, 0.5), iters=st.integers(0, 100),
       grid=st.integers(1, 20).map(lambda k: 2 * k + 1), eps0=st.floats(0.01, 10.0),
       mode=st.sampled_from(["minmax", "minimize", "verify", "analyze"]))
def test_config_round_trip_is_byte_identical(seed, h, iters, grid, eps0, mode):
    d = {"seed": seed, "h": h, "iters": iters, "mode": mode, "sweepout": {"grid_size": grid},
         "solver": {"eps0": eps0}}
    text = RunConfig.from_dict(d).to_json()
    assert RunConfig.from_json(text).to_json() == text
    assert list(json.loads(text)) == sorted(json.loads(text))


@pytest.mark.parametrize("text", [
    "{not json",
    "[1, 2]",
    '{"h": 7}',
    '{"mode": "explode"}',
    '{"unknown_key": 1}',
    '{"sweepout": {"grid_size": 4}}',
    '{"pair": {"kind": "ellipsoid", "semi_axes": [1, -1, 1]}}',
    '{"sweepout": {"kind": "ellipsoid_flat"}}',
    '{"solver": {"eps0": 0}}',
])
def test_invalid_configs_are_rejected(text):
    with pytest.raises(ConfigInvalid):
        RunConfig.from_json(text)


def test_mode_alias():
    assert RunConfig.from_dict({"mode": "verify-inequalities"}).mode == "verify"


def test_malformed_config_exits_with_code_two(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{oops")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--out", str(tmp_path / "o"), "--grid-size", "4"]) == 2


def test_analyze_run_is_deterministic_and_summarizes(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--mode", "analyze", "--out", str(a)]) == 0
    assert main(["run", "--mode", "analyze", "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    for f in ("bubbles.json", "annuli.csv", "config.json"):
        assert (a / f).is_file()
    capsys.readouterr()
    assert main(["summarize", str(a)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert any(line.startswith("PASS energy_identity") for line in out)
    assert json.loads(out[-1]) == {"pass": True}


def test_minimize_run_reports_monotone_energy(tmp_path):
    out = tmp_path / "m"
    assert main(["run", "--mode", "minimize", "--iters", "3", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["suites"]["monotone_energy"]["pass"]
    assert rep["suites"]["half_best_drop"]["pass"]
    rows = (out / "solves.csv").read_text().splitlines()
    assert rows[0] == "iteration,energy,drop,best_random_drop"
    assert "runtime" not in (out / "report.json").read_text()


def test_minmax_run_writes_artifacts(tmp_path):
    out = tmp_path / "mm"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"h": 0.1, "sweepout": {"grid_size": 5}}))
    assert main(["run", "--config", str(cfg), "--iters", "1", "--out", str(out), "--seed", "3"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["seed"] == 3
    assert rep["suites"]["monotone_max_energy"]["pass"]
    assert {"dirichlet_energy", "area", "conformality_defect", "hopf_differential"} <= set(rep["energy"])
    for f in ("iterations.csv", "checkpoint.npz", "final_slice.off", "final_slice.off.values", "bubbles.json"):
        assert (out / f).is_file()
    again = tmp_path / "mm2"
    assert main(["run", "--config", str(cfg), "--iters", "1", "--out", str(again), "--seed", "3"]) == 0
    assert (again / "report.json").read_bytes() == (out / "report.json").read_bytes()
    assert (again / "iterations.csv").read_bytes() == (out / "iterations.csv").read_bytes()


def test_numerical_failure_exits_with_code_one(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise CoverFailure("no family")

    monkeypatch.setitem(cli.RUNNERS, "analyze", boom)
    out = tmp_path / "f"
    assert main(["run", "--mode", "analyze", "--out", str(out)]) == 1
    rep = json.loads((out / "report.json").read_text())
    assert rep["error"]["type"] == "CoverFailure"


def test_summarize_errors_and_failed_suites(tmp_path, capsys):
    with pytest.raises(MissingArtifacts):
        summarize(tmp_path)
    assert main(["summarize", str(tmp_path)]) == 1
    (tmp_path / "report.json").write_text(json.dumps(
        {"mode": "verify", "status": 0, "suites": {"a": {"pass": True}, "b": {"pass": False, "residual": -1.0}}}))
    ok, text = summarize(tmp_path)
    assert not ok
    assert "FAIL b" in text and "PASS a" in text
    capsys.readouterr()
    assert main(["summarize", str(tmp_path)]) == 1
    assert json.loads(capsys.readouterr().out.splitlines()[-1]) == {"pass": False}


def test_non_finite_values_are_serialised():
    assert cli._clean({"x": float("inf"), "y": [float("nan")]}) == {"x": "inf", "y": ["nan"]}
