import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from warprig import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_main(tmp_path, command, cfg, *extra):
    out = tmp_path / "report.json"
    code = cli.main([command, write(tmp_path, cfg), "--out", str(out), *extra])
    return code, out


SPHERE = {"ambient": {"preset": "euclidean"}, "surface": {"base_radius": 1.0}, "grid": {"lat": 16, "lon": 32}}


def test_verify_unit_sphere(tmp_path):
    code, out = run_main(tmp_path, "verify", SPHERE)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == "warprig.report/1" and rep["command"] == "verify"
    assert rep["result"]["worst_relative"] <= 1e-11
    meta = json.loads((tmp_path / "report.meta.json").read_text())
    assert meta["files"] == ["report.json"] and "started" in meta
    assert "started" not in out.read_text()


def test_report_to_stdout(tmp_path, capsys):
    assert cli.main(["verify", write(tmp_path, SPHERE)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["config"]["grid"] == {"lat": 16, "lon": 32}


def test_malformed_config_lists_all_errors(tmp_path, capsys):
    bad = {"ambient": {"preset": "nowhere"}, "surface": {"base_radius": -1}, "grid": {"lat": 4, "lon": 33}, "extra": 1}
    code, out = run_main(tmp_path, "verify", bad)
    assert code == 2
    assert not out.exists() and not (tmp_path / "report.meta.json").exists()
    err = capsys.readouterr().err
    assert err.count("  - ") >= 4
    assert "nowhere" in err and "extra" in err


def test_missing_section(tmp_path, capsys):
    code, out = run_main(tmp_path, "verify", {"ambient": {"preset": "euclidean"}})
    assert code == 2 and "surface" in capsys.readouterr().err


def test_invalid_json_and_missing_file(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["verify", str(p)]) == 2
    assert cli.main(["verify", str(tmp_path / "absent.json")]) == 2


def test_semantic_errors(tmp_path, capsys):
    cfg = {
        "ambient": {"preset": "schwarzschild", "interval": [3.0, 2.0]},
        "surface": {"base_radius": 2.0, "harmonics": [{"l": 1, "m": 2, "c": 0.1}]},
    }
    assert run_main(tmp_path, "verify", cfg)[0] == 2
    err = capsys.readouterr().err
    assert "mass" in err and "interval" in err and "m" in err


def test_overrides(tmp_path):
    code, out = run_main(tmp_path, "verify", SPHERE, "-O", "surface.base_radius=2.5", "-O", "grid.lat=12")
    assert code == 0
    cfg = json.loads(out.read_text())["config"]
    assert cfg["surface"]["base_radius"] == 2.5 and cfg["grid"]["lat"] == 12
    assert cli.parse_override("a.b=[1, 2]") == (["a", "b"], [1, 2])
    assert cli.parse_override("ambient.preset=hyperbolic") == (["ambient", "preset"], "hyperbolic")


def test_override_cannot_add_unknown_keys(tmp_path):
    assert run_main(tmp_path, "verify", SPHERE, "-O", "grid.depth=3")[0] == 2
    assert run_main(tmp_path, "verify", SPHERE, "-O", "noequals")[0] == 2


def test_numeric_error_exit_code(tmp_path, capsys):
    cfg = {"ambient": {"preset": "schwarzschild", "mass": 0.5}, "surface": {"base_radius": 1.1}, "grid": {"lat": 16, "lon": 32}}
    code, out = run_main(tmp_path, "verify", cfg)
    assert code == 3 and not out.exists()
    assert "numeric error" in capsys.readouterr().err


def test_defaults_filled_in(tmp_path):
    cfg = cli.resolve_config({"ambient": {"preset": "euclidean"}, "surface": {"base_radius": 1.0}}, "verify", [])
    assert cfg["grid"] == {"lat": 32, "lon": 64}
    assert cfg["output"]["format"] == "json"


def test_weight_csv_sidecar(tmp_path):
    cfg = json.loads((CONFIGS / "weight_schwarzschild.json").read_text())
    code, out = run_main(tmp_path, "weight", cfg)
    assert code == 0
    lines = (tmp_path / "report.weight.csv").read_text().splitlines()
    assert lines[0].startswith("# warprig.csv/1") and lines[1] == "r,w,w_u,w_over_f,wronskian"
    res = json.loads(out.read_text())["result"]
    assert res["conditions"]["wronskian_sign"] == "positive"
    assert res["refinement_error"] <= 1e-9


def test_ambient_and_pair_commands(tmp_path):
    code, out = run_main(tmp_path, "ambient", json.loads((CONFIGS / "ambient_schwarzschild.json").read_text()))
    assert code == 0
    res = json.loads(out.read_text())["result"]
    assert res["static"] and res["hypotheses"]["super_static"]
    cfg = json.loads((CONFIGS / "pair_rotation.json").read_text())
    cfg["grid"] = {"lat": 16, "lon": 32}
    code, out = run_main(tmp_path, "pair", cfg)
    pair = json.loads(out.read_text())["result"]["pair"]
    assert code == 0 and max(abs(pair[k]) for k in ("T1", "T2", "T3", "T4")) <= 1e-10


def test_non_finite_values_serialise():
    assert cli.dumps({"a": float("inf"), "b": float("nan")}) == cli.dumps({"b": float("nan"), "a": float("inf")})
    assert '"inf"' in cli.dumps({"a": float("inf")})


SMALL_SEARCH = {
    "ambient": {"preset": "schwarzschild", "mass": 0.5},
    "surface": {"base_radius": 2.0, "harmonics": [{"l": 1, "m": 1, "c": 0.02}]},
    "search": {"seed": 3, "restarts": 2, "degree": 1, "max_iter": 8, "grid": {"lat": 8, "lon": 16}},
    "output": {"format": "csv"},
}


def _subprocess_run(tmp_path, tag, threads, command, cfg):
    env = dict(os.environ, WARPRIG_THREADS=str(threads))
    cfg_path = write(tmp_path, cfg, f"{tag}.cfg.json")
    out = tmp_path / f"{tag}.json"
    subprocess.run([sys.executable, "-m", "warprig.cli", command, cfg_path, "--out", str(out)], check=True, env=env)
    return out


def test_reports_byte_reproducible_across_runs_and_threads(tmp_path):
    outs = [_subprocess_run(tmp_path, f"s{k}", t, "search", SMALL_SEARCH) for k, t in enumerate((1, 2, 1))]
    texts = [o.read_bytes() for o in outs]
    assert texts[0] == texts[1] == texts[2]
    traces = [(tmp_path / f"s{k}.trace.csv").read_bytes() for k in range(3)]
    assert traces[0] == traces[1] == traces[2]
    metas = [json.loads((tmp_path / f"s{k}.meta.json").read_text())["threads"] for k in range(2)]
    assert metas == ["1", "2"]
