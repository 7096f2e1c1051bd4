from __future__ import annotations

import hashlib
import json
import math
import shutil
from pathlib import Path

import pytest

from blender_lab.cli import main, resolve_threads, run_scenario
from blender_lab.report import ResultRecord, emit_report, format_value, write_record
from blender_lab.scenario import (
    KINDS,
    REQUIRED,
    ScenarioParseError,
    ScenarioValidationError,
    parse_scenario,
)

DATA = Path(__file__).parent / "data"


def _write(tmp_path: Path, name: str, text: str, scenario_dir: Path | None = None) -> Path:
    if scenario_dir is not None and not (tmp_path / "models").exists():
        shutil.copytree(scenario_dir / "models", tmp_path / "models")
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _digest(d: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(d.iterdir()) if not p.name.endswith(".meta.json")}


# ------------------------------------------------------------------ scenario parsing

def test_parse_minimal():
    sc = parse_scenario("[scenario]\nkind = validate\nmodel = m.model\nseed = 4\n[params]\nxi = 1.185\n")
    assert sc.kind == "validate" and sc.seed == 4
    assert sc.num("xi") == 1.185
    assert sc.nums("xi") == [1.185]


def test_parse_lists_and_pairs():
    sc = parse_scenario("[scenario]\nkind = cover\n[params]\nxi = 1.18, 1.19\nmu = -9.5\n"
                        "steps = 3\neta_pairs = 0 0; 0.01 -1/100\n")
    assert sc.nums("xi") == [1.18, 1.19]
    assert sc.pairs("eta_pairs", []) == [(0.0, 0.0), (0.01, -0.01)]
    assert sc.integer("steps") == 3


@pytest.mark.parametrize("text, err", [
    ("kind = cover\n", ScenarioParseError),
    ("[params]\nxi = 1\n", ScenarioParseError),
    ("[scenario]\nkind = nope\n", ScenarioValidationError),
    ("[scenario]\nkind = cover\n[params]\nxi = 1.185\n", ScenarioValidationError),
    ("[scenario]\nkind = validate\n[params]\nxi = 1.185\n", ScenarioValidationError),
    ("[scenario]\nkind = cover\nseed = x\n[params]\nxi=1\nmu=1\nsteps=1\n", ScenarioParseError),
    ("[scenario]\nkind = cover\nseed = -1\n[params]\nxi=1\nmu=1\nsteps=1\n", ScenarioValidationError),
])
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_scenario(text)


def test_bad_number_is_parse_error():
    sc = parse_scenario("[scenario]\nkind = cover\n[params]\nxi = abc\nmu = 1\nsteps = 1\n")
    with pytest.raises(ScenarioParseError):
        sc.nums("xi")
    with pytest.raises(ScenarioValidationError):
        parse_scenario("[scenario]\nkind = cover\n[params]\nxi = 1\nmu = 1\nsteps = 1.5\n").integer("steps")


def test_every_kind_has_a_shipped_scenario(scenario_dir):
    kinds = set()
    for p in scenario_dir.glob("*.ini"):
        kinds.add(parse_scenario(p.read_text(), p.parent).kind)
    assert kinds == set(KINDS)
    assert set(REQUIRED) == set(KINDS)


def test_threads_resolution(monkeypatch):
    monkeypatch.delenv("BLAB_THREADS", raising=False)
    assert resolve_threads(None) == 1
    monkeypatch.setenv("BLAB_THREADS", "4")
    assert resolve_threads(None) == 4
    assert resolve_threads(2) == 2
    monkeypatch.setenv("BLAB_THREADS", "many")
    assert resolve_threads(None) == 1


# ------------------------------------------------------------------ report

def _record() -> ResultRecord:
    return ResultRecord("renorm", "abc", ["k", "supC0", "ok"],
                        [{"k": 0, "supC0": 0.1, "ok": True}, {"k": 1, "supC0": math.nan, "ok": False}],
                        {"decreasing": True}, series={"supC0": [(0, 0.1), (1, 0.01)]},
                        worst_margin=0.5, notes=["n"])


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert float(format_value(1 / 3)) == 1 / 3
    assert format_value(math.inf) == "inf" and format_value(True) == "true"


def test_csv_and_json(tmp_path):
    rec = _record()
    assert rec.csv_text().splitlines() == ["k,supC0,ok", "0,0.1,true", "1,nan,false"]
    doc = json.loads(rec.json_text())
    assert doc["passed"] is True and doc["rows"][1]["supC0"] == "nan"
    paths = write_record(rec, tmp_path)
    assert b"\r" not in paths[0].read_bytes()
    assert json.loads((tmp_path / "renorm.meta.json").read_text())["timestamp"]


def test_emit_report_series_and_summary(tmp_path):
    out = emit_report([_record()], tmp_path)
    assert (tmp_path / "renorm_supC0.dat").read_text() == "0.0 0.1\n1.0 0.01\n"
    summary = (tmp_path / "summary.txt").read_text()
    assert "renorm: PASS (1/1 verdicts, 2 rows)" in summary
    assert "worst margin 0.5" in summary
    assert out[0].name == "summary.txt"


def test_emit_report_deterministic(tmp_path):
    emit_report([_record()], tmp_path / "a")
    emit_report([_record()], tmp_path / "b")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_emit_report_empty():
    with pytest.raises(ValueError):
        emit_report([], "unused")


def test_emit_report_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report([_record()], blocker)


def test_figures_optional(tmp_path):
    pytest.importorskip("matplotlib")
    out = emit_report([_record()], tmp_path, figures=True)
    assert any(p.suffix == ".png" for p in out)


# ------------------------------------------------------------------ CLI

def test_fixed_points_scenario_exit_0(tmp_path, scenario_dir):
    assert run_scenario(scenario_dir / "fixed_points.ini", tmp_path) == 0
    lines = (tmp_path / "fixed-points.csv").read_text().splitlines()
    assert len(lines) == 401
    assert "\r" not in (tmp_path / "fixed-points.csv").read_text()


def test_cover_outside_window_exit_1(tmp_path, scenario_dir):
    assert run_scenario(scenario_dir / "cover_outside.ini", tmp_path) == 1
    assert "false" in (tmp_path / "cover.csv").read_text()


def test_malformed_exit_2(tmp_path):
    assert run_scenario(DATA / "malformed.ini", tmp_path) == 2
    assert run_scenario(tmp_path / "missing.ini", tmp_path) == 2


def test_invalid_exit_3(tmp_path):
    p = _write(tmp_path, "bad.ini", "[scenario]\nkind = cover\n[params]\nxi = 1.185\n")
    assert run_scenario(p, tmp_path / "out") == 3
    q = _write(tmp_path, "cf.ini", "[scenario]\nkind = cover\n[params]\nxi = 1.185\nmu = -9.5\nsteps = 1\n")
    assert run_scenario(q, tmp_path / "o", kind="certify") == 3
    assert run_scenario(q, tmp_path / "o", seed=-3) == 3


def test_main_argv(tmp_path, scenario_dir, capsys):
    rc = main(["validate", "--scenario", str(scenario_dir / "validate.ini"), "--out", str(tmp_path)])
    assert rc == 0
    assert "validate: PASS" in capsys.readouterr().out


def test_seed_override_changes_hash(tmp_path):
    text = ("[scenario]\nkind = cone-check\nseed = 1\n[params]\nxi = 1.185\nmu = -9.5\n"
            "samples = 2000\n")
    p = _write(tmp_path, "c.ini", text)
    assert run_scenario(p, tmp_path / "a") == 0
    assert run_scenario(p, tmp_path / "b", seed=2) == 0
    ja = json.loads((tmp_path / "a" / "cone-check.json").read_text())
    jb = json.loads((tmp_path / "b" / "cone-check.json").read_text())
    assert ja["scenario_hash"] != jb["scenario_hash"]


@pytest.mark.parametrize("name, text, model", [
    ("tube.ini", "[scenario]\nkind = tube-run\nseed = 9\n[params]\nxi = 1.185\nmu = -9.5\n"
                 "count = 2\nmax_steps = 40\n", False),
    ("renorm.ini", "[scenario]\nkind = renorm\nmodel = models/canonical.model\n[params]\n"
                   "xi = 1.185\nmu = -9.5\nmax_n = 100\ngrid_n = 3\ndirect_max_n = 20\n", True),
])
def test_rerun_bit_identical(tmp_path, scenario_dir, name, text, model):
    p = _write(tmp_path, name, text, scenario_dir if model else None)
    rc1 = run_scenario(p, tmp_path / "r1", threads=1)
    rc2 = run_scenario(p, tmp_path / "r2", threads=3)
    assert rc1 == rc2
    assert _digest(tmp_path / "r1") == _digest(tmp_path / "r2")
