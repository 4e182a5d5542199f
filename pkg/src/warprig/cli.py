"""Batch front-end: ``warprig <command> config.json [--override key=value ...]``.

Reports are JSON with the resolved config and toolkit version embedded;
bulk columns go to CSV next to the report.  Wall-clock data lives in a
``.meta.json`` sidecar so the report itself is byte-reproducible.
"""

from __future__ import annotations

import os

# BLAS stays single-threaded so that SVDs are bit-identical for every WARPRIG_THREADS
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ[_var] = "1"

import argparse
import copy
import csv
import io
import json
import math
import platform
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .ambient import RangeError, eval_radial, from_config, theorem_hypotheses
from .geometry import DegenerateGeometry, RadialGraph, eval_point
from .jets import DegenerateEvaluation
from .sphere import PoleProximityError, SurfaceSpec, axis_angle, build_grid
from .weight import SolverFailure

REPORT_SCHEMA = "warprig.report/1"
CSV_SCHEMA = "warprig.csv/1"
COMMANDS = ("ambient", "verify", "weight", "spectrum", "pair", "search")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_harmonic = {
    "type": "object",
    "properties": {"l": {"type": "integer", "minimum": 0}, "m": {"type": "integer"}, "c": _num},
    "required": ["l", "m", "c"],
    "additionalProperties": False,
}
_rotation = {
    "type": "object",
    "properties": {"axis": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}, "angle": _num},
    "required": ["axis", "angle"],
    "additionalProperties": False,
}
_surface = {
    "type": "object",
    "properties": {
        "base_radius": _pos,
        "harmonics": {"type": "array", "items": _harmonic},
        "rotation": _rotation,
    },
    "required": ["base_radius"],
    "additionalProperties": False,
}
_interval = {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "ambient": {
            "type": "object",
            "properties": {
                "preset": {
                    "enum": ["euclidean", "hyperbolic", "space_form", "schwarzschild", "ads_schwarzschild", "cubic_warp", "custom_radial"]
                },
                "mass": {"type": "number", "minimum": 0},
                "kappa": _num,
                "interval": _interval,
                "coefficients": {"type": "array", "items": _num, "minItems": 1},
                "n": {"type": "integer", "minimum": 2},
            },
            "required": ["preset"],
            "additionalProperties": False,
        },
        "surface": _surface,
        "surface_b": _surface,
        "grid": {
            "type": "object",
            "properties": {"lat": {"type": "integer", "minimum": 8}, "lon": {"type": "integer", "minimum": 16, "multipleOf": 2}},
            "additionalProperties": False,
        },
        "deformation": {
            "type": "object",
            "properties": {"degree": {"type": "integer", "minimum": 1, "maximum": 16}, "mode": {"enum": ["mean_curvature", "sigma2"]}},
            "additionalProperties": False,
        },
        "weight": {
            "type": "object",
            "properties": {
                "ic": {
                    "oneOf": [
                        {"enum": ["auto", "static"]},
                        {
                            "type": "object",
                            "properties": {"w0": _num, "wu0": _num},
                            "required": ["w0", "wu0"],
                            "additionalProperties": False,
                        },
                    ]
                },
                "direction": {"enum": ["forward", "backward"]},
                "interval": _interval,
                "samples": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "thresholds": {
            "type": "object",
            "properties": {"kernel_rel": _pos, "gap_min": _pos},
            "additionalProperties": False,
        },
        "search": {
            "type": "object",
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "perturbation": {"type": "number", "minimum": 0},
                "restarts": {"type": "integer", "minimum": 1},
                "degree": {"type": "integer", "minimum": 1, "maximum": 12},
                "mode": {"enum": ["mean_curvature", "sigma2"]},
                "lam": {"type": "number", "minimum": 0},
                "max_iter": {"type": "integer", "minimum": 0},
                "grad_tol": {"type": "number", "minimum": 0},
                "energy_tol": {"type": "number", "minimum": 0},
                "grid": {
                    "type": "object",
                    "properties": {"lat": {"type": "integer", "minimum": 8}, "lon": {"type": "integer", "minimum": 16, "multipleOf": 2}},
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"format": {"enum": ["json", "csv"]}, "path": {"type": "string", "minLength": 1}},
            "additionalProperties": False,
        },
    },
    "required": ["ambient"],
    "additionalProperties": False,
}

DEFAULTS = {
    "grid": {"lat": 32, "lon": 64},
    "deformation": {"degree": 8, "mode": "mean_curvature"},
    "weight": {"ic": "auto", "samples": 201},
    "thresholds": {"kernel_rel": 1e-8, "gap_min": 1e3},
    "search": {
        "seed": 0,
        "perturbation": 1e-2,
        "restarts": 5,
        "degree": 3,
        "mode": "mean_curvature",
        "max_iter": 500,
        "grad_tol": 1e-10,
        "energy_tol": 0.0,
        "grid": {"lat": 10, "lon": 20},
    },
    "output": {"format": "json"},
}

NEEDS = {
    "ambient": (),
    "verify": ("surface",),
    "weight": (),
    "spectrum": ("surface",),
    "pair": ("surface", "surface_b"),
    "search": ("surface",),
}


class ConfigError(ValueError):
    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


# -- config ----------------------------------------------------------------------
def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str):
    """``a.b.c=value``; the value is read as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError([f"override {text!r} is not of the form key=value"])
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError([f"override {text!r} has an empty key"])
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for text in overrides or ():
        path, value = parse_override(text)
        node = cfg
        for p in path[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[path[-1]] = value
    return cfg


def _semantic_errors(cfg: dict, command: str):
    errors = [f"{key}: required by the {command} command" for key in NEEDS[command] if key not in cfg]
    amb = cfg.get("ambient", {})
    preset = amb.get("preset")
    if preset in ("schwarzschild", "ads_schwarzschild") and "mass" not in amb:
        errors.append(f"ambient.mass: required for preset {preset}")
    if preset == "custom_radial" and "coefficients" not in amb:
        errors.append("ambient.coefficients: required for preset custom_radial")
    iv = amb.get("interval")
    if iv and len(iv) == 2 and not iv[0] < iv[1]:
        errors.append("ambient.interval: need r_lo < r_hi")
    for key in ("surface", "surface_b"):
        for k, h in enumerate(cfg.get(key, {}).get("harmonics", [])):
            if isinstance(h, dict) and isinstance(h.get("l"), int) and isinstance(h.get("m"), int) and abs(h["m"]) > h["l"]:
                errors.append(f"{key}.harmonics.{k}: |m| must not exceed l")
    wiv = cfg.get("weight", {}).get("interval")
    if wiv and len(wiv) == 2 and not wiv[0] < wiv[1]:
        errors.append("weight.interval: need r0 < r1")
    return errors


def resolve_config(raw: dict, command: str, overrides=()) -> dict:
    """Defaults + file + overrides, schema-validated; every violation is reported at once."""
    if command not in COMMANDS:
        raise ConfigError([f"unknown command {command!r}"])
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    cfg = apply_overrides(raw, overrides)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = [
        f"{'.'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
        for e in sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    ]
    if not errors:
        errors = _semantic_errors(cfg, command)
    if errors:
        raise ConfigError(errors)
    return _merge(DEFAULTS, cfg)


def surface_from_config(sc: dict) -> SurfaceSpec:
    terms = tuple((h["l"], h["m"], h["c"]) for h in sc.get("harmonics", []))
    rot = sc.get("rotation")
    R = axis_angle(rot["axis"], rot["angle"]) if rot else np.eye(3)
    return SurfaceSpec(sc["base_radius"], terms, R)


# -- output --------------------------------------------------------------------------
def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["# " + CSV_SCHEMA])
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# -- commands --------------------------------------------------------------------------
def _grid(cfg, key="grid"):
    g = cfg[key] if key == "grid" else cfg["search"]["grid"]
    return build_grid(g["lat"], g["lon"])


def cmd_ambient(cfg, space):
    r = np.linspace(*space.interval, 41)
    d = eval_radial(space, r)
    cols = ["r", "rho", "u", "f", "f_r", "f_rho", "f_u", "f_uu", "Phi", "Phi_rho", "Phi_u"]
    result = {
        "ambient": space.describe(),
        "largest_root": space.largest_root(),
        "static": space.static,
        "hypotheses": theorem_hypotheses(space),
    }
    table = np.column_stack([getattr(d, c) for c in cols] + [space.static_residual(r)])
    return result, {"radial.csv": (cols + ["static_residual"], table.tolist())}


def cmd_verify(cfg, space):
    from .verify import surface_report

    grid = _grid(cfg)
    spec = surface_from_config(cfg["surface"])
    rep = surface_report(space, RadialGraph(spec), grid)
    out = rep.to_dict()
    out["worst_relative"] = rep.worst()
    return out, {}


def _weight_for(space, cfg, radii=None):
    from .weight import solve_weight, static_weight

    wc = cfg["weight"]
    if "interval" in wc:
        r0, r1 = wc["interval"]
    elif radii is not None:
        lo, hi = float(np.min(radii)), float(np.max(radii))
        pad = 1e-3 * (hi - lo + lo)
        r0, r1 = max(space.interval[0], lo - pad), min(space.interval[1], hi + pad)
    else:
        r0, r1 = space.interval
    ic = wc["ic"]
    if ic == "static":
        return static_weight(space, r0, r1)
    if isinstance(ic, dict):
        ic = (ic["w0"], ic["wu0"])
    return solve_weight(space, r0, r1, ic, wc.get("direction"))


def cmd_weight(cfg, space):
    from .weight import check_conditions, refinement_error, weight_table

    sol = _weight_for(space, cfg)
    cond = check_conditions(space, sol)
    r = np.linspace(sol.r0, sol.r1, 1001)
    result = {
        "solution": sol.describe(),
        "conditions": cond.to_dict(),
        "refinement_error": refinement_error(sol),
        "max_deviation_from_f": float(np.max(np.abs(sol.w(r) - space.f(r)))),
    }
    table = weight_table(space, sol, cfg["weight"]["samples"])
    return result, {"weight.csv": (["r", "w", "w_u", "w_over_f", "wronskian"], table.tolist())}


def _surface_hypotheses(space, geo):
    k = geo.principal_curvatures
    return {
        "min_support": float(np.min(geo.phi)),
        "min_principal_curvature": float(np.min(k)),
        "min_mean_curvature": float(np.min(geo.H)),
        "radial_range": [float(np.min(geo.r)), float(np.max(geo.r))],
        "ambient": theorem_hypotheses(space),
    }


def cmd_spectrum(cfg, space):
    from .rigidity import DeformationBasis, assemble_operator, is_space_form, kernel_spectrum, translation_breaking
    from .weight import SolverFailure, static_weight, solve_weight

    grid = _grid(cfg)
    spec = surface_from_config(cfg["surface"])
    imm = RadialGraph(spec)
    basis = DeformationBasis(cfg["deformation"]["degree"])
    mode = cfg["deformation"]["mode"]
    A, layout = assemble_operator(space, imm, basis, grid, mode)
    geo = layout.response.geometry
    notes = []
    weight = None
    if mode == "mean_curvature":
        lo, hi = float(np.min(geo.r)), float(np.max(geo.r))
        try:
            if space.static:
                weight = static_weight(space, lo, hi)
            else:
                weight = solve_weight(space, lo, hi)
        except (ValueError, SolverFailure) as err:
            notes.append(f"no weight for the functional terms: {err}")
    th = cfg["thresholds"]
    rep = kernel_spectrum(A, th["kernel_rel"], th["gap_min"], layout, weight)
    result = rep.to_dict()
    result["mode"] = mode
    result["basis_dimension"] = basis.dimension
    result["row_scale"] = layout.row_scale
    result["weight"] = weight.describe() if weight is not None else None
    result["hypotheses"] = _surface_hypotheses(space, geo)
    result["space_form"] = is_space_form(space)
    result["translation_breaking"] = translation_breaking(A, layout)
    result["notes"] = notes
    kernel = [basis.to_json(v) for v in rep.kernel_vectors.T]
    sv = [(k, float(s)) for k, s in enumerate(rep.singular_values)]
    return result, {"singular_values.csv": (["index", "singular_value"], sv), "kernel.json": kernel}


def cmd_pair(cfg, space):
    from .rigidity import HypothesisError, is_space_form, pair_identity, sigma2_checks, spaceform_checks

    grid = _grid(cfg)
    immA = RadialGraph(surface_from_config(cfg["surface"]))
    immB = RadialGraph(surface_from_config(cfg["surface_b"]))
    gA, gB = eval_point(space, immA, grid), eval_point(space, immB, grid)
    sol = _weight_for(space, cfg, np.concatenate([gA.r, gB.r]))
    rep = pair_identity(space, immA, immB, sol, grid, geoms=(gA, gB))
    result = {"pair": rep.to_dict(), "weight": sol.describe(), "hypotheses": _surface_hypotheses(space, gA)}
    result["sigma2"] = sigma2_checks(space, grid, pair=(gA, gB))
    if is_space_form(space):
        try:
            result["space_form"] = spaceform_checks(space, grid, gA, pair_geo=gB)
        except HypothesisError as err:
            result["space_form"] = {"skipped": str(err)}
    return result, {}


def cmd_search(cfg, space):
    from .search import run_restarts

    sc = cfg["search"]
    grid = _grid(cfg, "search")
    spec = surface_from_config(cfg["surface"])
    workers = max(1, int(os.environ.get("WARPRIG_THREADS", "1") or 1))
    traces = run_restarts(
        space, spec, grid, sc["degree"], sc["seed"], sc["restarts"], sc["perturbation"], sc["mode"], sc.get("lam"),
        sc["max_iter"], sc["grad_tol"], sc["energy_tol"], workers,
    )
    result = {"restarts": [t.to_dict() for t in traces]}
    result["max_final_energy"] = max(t.final_energy for t in traces)
    result["max_orbit_distance"] = max(t.orbit_distance for t in traces)
    rows = [(k, i, e, g) for k, t in enumerate(traces) for i, e, g in t.csv_rows()]
    return result, {"trace.csv": (["restart", "iter", "E", "grad_norm"], rows)}


HANDLERS = {
    "ambient": cmd_ambient,
    "verify": cmd_verify,
    "weight": cmd_weight,
    "spectrum": cmd_spectrum,
    "pair": cmd_pair,
    "search": cmd_search,
}

NUMERIC_ERRORS = (SolverFailure, DegenerateGeometry, DegenerateEvaluation, PoleProximityError, RangeError, ArithmeticError, np.linalg.LinAlgError)


def run(command: str, cfg: dict):
    """Run a resolved config; returns (report dict, {sidecar name: payload})."""
    try:
        space = from_config(cfg["ambient"])
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError([f"ambient: {err}"]) from err
    for key in ("surface", "surface_b"):
        if key in cfg:
            try:
                surface_from_config(cfg[key])
            except ValueError as err:
                raise ConfigError([f"{key}: {err}"]) from err
    result, extras = HANDLERS[command](cfg, space)
    report = {"schema": REPORT_SCHEMA, "command": command, "version": __version__, "config": cfg, "result": result}
    return report, extras


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="warprig", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"warprig {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("config", help="JSON config file ('-' for stdin)")
        s.add_argument("--override", "-O", action="append", default=[], metavar="KEY=VALUE", help="dotted-path config override (repeatable)")
        s.add_argument("--out", help="report path (overrides output.path); stdout if neither is set")
    return p


def _load(path: str) -> dict:
    text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError([f"config is not valid JSON: {err}"]) from err


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.monotonic()
    started = datetime.now(timezone.utc).isoformat()
    try:
        raw = _load(args.config)
        cfg = resolve_config(raw, args.command, args.override)
        report, extras = run(args.command, cfg)
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as err:
        print("config error:", file=sys.stderr)
        for m in err.messages:
            print(f"  - {m}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as err:
        print(f"numeric error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"config error:\n  - {err}", file=sys.stderr)
        return EXIT_CONFIG

    text = dumps(report)
    out = args.out or cfg["output"].get("path")
    if out is None:
        sys.stdout.write(text)
        return EXIT_OK
    path = Path(out)
    write_atomic(path, text)
    written = [path.name]
    for name, payload in extras.items():
        if name.endswith(".json"):
            target = _sidecar(path, "." + name)
            write_atomic(target, dumps(payload))
        elif cfg["output"]["format"] == "csv":
            target = _sidecar(path, "." + name)
            write_atomic(target, csv_text(*payload))
        else:
            continue
        written.append(target.name)
    meta = {
        "started": started,
        "wall_seconds": round(time.monotonic() - t0, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": os.environ.get("WARPRIG_THREADS", "1"),
        "files": written,
    }
    write_atomic(_sidecar(path, ".meta.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
