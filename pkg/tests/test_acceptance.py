"""Acceptance criteria, each at its stated tolerance; one PASS/FAIL line per criterion."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from warprig import ambient as A
from warprig.geometry import Deformed, HarmonicField, RadialGraph, Rotated, eval_point, eval_variation, integrate
from warprig.rigidity import (
    DeformationBasis,
    assemble_operator,
    kernel_spectrum,
    pair_identity,
    sigma2_checks,
    spaceform_checks,
    weighted_variation_identity,
)
from warprig.search import run_restarts
from warprig.sphere import SurfaceSpec, axis_angle, build_grid
from warprig.verify import surface_report
from warprig.weight import check_conditions, solve_weight, static_weight

GENERIC = SurfaceSpec(2.0, ((2, 2, 0.08), (3, 1, 0.06)))
KERNEL_GRID = build_grid(32, 64)
KERNEL_DEGREE = 8


def fmt(x):
    return f"{x:.2e}"


@pytest.fixture(scope="module")
def kernels():
    """Full-size operators and spectra shared by the kernel criteria."""
    out = {}
    cases = {
        "euclidean": (A.space_form(0.0), "mean_curvature"),
        "hyperbolic": (A.space_form(1.0), "mean_curvature"),
        "schw05": (A.schwarzschild(0.5), "mean_curvature"),
        "cubic": (A.cubic_warp(), "sigma2"),
    }
    for key, (space, mode) in cases.items():
        Am, lay = assemble_operator(space, RadialGraph(GENERIC), DeformationBasis(KERNEL_DEGREE), KERNEL_GRID, mode=mode)
        weight = None
        if space.static:
            geo = lay.response.geometry
            weight = static_weight(space, float(geo.r.min()), float(geo.r.max()))
        out[key] = (space, Am, lay, kernel_spectrum(Am, layout=lay, weight=weight))
    return out


# 1 ---------------------------------------------------------------------------------
SURFACES = [
    SurfaceSpec(1.5),
    SurfaceSpec(2.0),
    SurfaceSpec(3.0),
    SurfaceSpec(2.0, ((2, 2, 0.08), (3, 1, 0.06))),
    SurfaceSpec(2.5, ((1, 0, 0.1), (2, -1, 0.05), (4, 3, 0.02)), axis_angle([1, 1, 0], 0.6)),
    SurfaceSpec(1.8, ((3, -3, 0.04), (2, 0, 0.1), (5, 2, 0.01))),
]
SURFACE_IDS = ["support_squared", "hessian_u", "support_gradient", "gauss", "codazzi"]


def test_criterion_01_identity_suite(acceptance):
    grid = build_grid(48, 96)
    ambients = [A.space_form(0.0), A.space_form(1.0), A.schwarzschild(0.1), A.schwarzschild(0.5), A.ads_schwarzschild(0.3, 1.0)]
    worst_s = worst_a = 0.0
    for space in ambients:
        for spec in SURFACES:
            rep = surface_report(space, RadialGraph(spec), grid)
            worst_s = max(worst_s, rep.worst(SURFACE_IDS))
            amb = ["warp_identity"] + (["static"] if space.static else [])
            worst_a = max(worst_a, rep.worst(amb))
    ok = worst_s <= 1e-8 and worst_a <= 1e-12
    acceptance(1, "identity suite 6 surfaces x 5 ambients, 48x96", ok, f"surface {fmt(worst_s)} <= 1e-8, ambient {fmt(worst_a)} <= 1e-12")
    assert ok


# 2 ---------------------------------------------------------------------------------
def test_criterion_02_round_sphere_closed_forms(acceptance):
    space = A.schwarzschild(0.1)
    grid = build_grid(32, 64)
    imm = RadialGraph(SurfaceSpec(2.0))
    geo = eval_point(space, imm, grid)
    e_phi = float(np.max(np.abs(geo.phi - 2.0)))
    e_H = float(np.max(np.abs(geo.H - 0.948683298)))
    e_s2 = float(np.max(np.abs(geo.sigma2 - 0.225)))
    e_area = abs(integrate(space, imm, grid, np.ones(grid.size), geo) - 16 * math.pi)
    ok = e_phi <= 1e-12 and e_H <= 1e-9 and e_s2 <= 1e-10 and e_area <= 1e-10
    acceptance(2, "round sphere in schwarzschild(0.1), r0 = 2", ok, f"phi {fmt(e_phi)}, H {fmt(e_H)}, sigma2 {fmt(e_s2)}, area {fmt(e_area)}")
    assert ok


# 3 ---------------------------------------------------------------------------------
def test_criterion_03_weight_oracle(acceptance):
    # r = 1 is the horizon of schwarzschild(0.5); its interval starts at 1.2
    cases = [(A.schwarzschild(0.1), 1.0), (A.schwarzschild(0.5), 1.2), (A.ads_schwarzschild(0.3, 1.0), 1.0)]
    dev = wvar = 0.0
    wmin = math.inf
    for space, lo in cases:
        r = np.linspace(lo, 4.0, 4001)
        sol = solve_weight(space, lo, 4.0, ic=(float(space.f(lo)), float(space.f_u(lo))))
        dev = max(dev, float(np.max(np.abs(sol.w(r) - space.f(r)))))
        auto = solve_weight(space, lo, 4.0)
        W = auto.wronskian(r)
        wvar = max(wvar, float(np.ptp(W)))
        wmin = min(wmin, float(W.min()))
        assert check_conditions(space, auto).wronskian_sign == "positive"
    ok = dev <= 1e-10 and wvar <= 1e-9 and wmin > 0
    acceptance(3, "weight ODE: w = f reproduced, auto Wronskian constant > 0", ok, f"dev {fmt(dev)}, W spread {fmt(wvar)}, min W {fmt(wmin)}")
    assert ok


# 4 ---------------------------------------------------------------------------------
def test_criterion_04_kernel_dimensions(kernels, acceptance):
    dims, gaps, angles, ratios = {}, [], [], []
    for key, want in (("euclidean", 6), ("hyperbolic", 6), ("schw05", 3)):
        _, _, _, rep = kernels[key]
        dims[key] = rep.kernel_dimension
        gaps.append(rep.gap)
        ang = rep.principal_angles_rotation if key == "schw05" else rep.principal_angles_killing
        angles.append(float(np.max(ang)) if ang is not None else math.inf)
    for nrm in kernels["schw05"][3].kernel_norms:
        ratios.append(max(nrm["h_dot"], nrm["u_dot"]) / nrm["scale"])
    ok = (
        dims == {"euclidean": 6, "hyperbolic": 6, "schw05": 3}
        and min(gaps) >= 1e3
        and max(angles) <= 1e-6
        and len(ratios) == 3
        and max(ratios) <= 1e-5
    )
    acceptance(
        4,
        "kernel dimensions 6 / 6 / 3",
        ok,
        f"dims {dims}, min gap {fmt(min(gaps))}, max angle {fmt(max(angles))}, max |h'|,|u'| / scale {fmt(max(ratios, default=math.inf))}",
    )
    assert ok


# 5 ---------------------------------------------------------------------------------
def test_criterion_05_functional_with_static_weight(kernels, acceptance):
    space, _, lay, rep = kernels["schw05"]
    terms = rep.functional_terms
    t2 = max(abs(t["T2"]) / t["scale"] ** 2 for t in terms)
    t13 = max((abs(t["T1"]) + abs(t["T3"])) / t["scale"] ** 2 for t in terms)
    geo = lay.response.geometry
    w = static_weight(space, float(geo.r.min()), float(geo.r.max()))
    var = lay.variation(lay.basis.rotation_vectors())
    kt = weighted_variation_identity(space, geo, var, w, lay.grid)
    killing = float(max(np.max(np.abs(kt[k])) for k in ("T1", "T2", "T3")))
    ok = len(terms) == 3 and t2 <= 1e-14 and t13 <= 1e-7 and killing <= 1e-10
    acceptance(5, "weighted identity with w = f on kernel and Killing fields", ok, f"T2/scale^2 {fmt(t2)}, (|T1|+|T3|)/scale^2 {fmt(t13)}, Killing {fmt(killing)}")
    assert ok


# 6 ---------------------------------------------------------------------------------
def test_criterion_06_rotation_pair_identity(acceptance):
    space = A.schwarzschild(0.5)
    grid = build_grid(48, 96)
    worst_T = worst_mm = 0.0
    for axis, angle in (([1, 2, 3], 0.7), ([0, 0, 1], 2.0), ([1, -1, 0.5], 3.0)):
        immA = RadialGraph(GENERIC)
        immB = Rotated(immA, axis_angle(axis, angle))
        rep = pair_identity(space, immA, immB, solve_weight(space, 1.5, 2.6), grid)
        worst_T = max(worst_T, abs(rep.T1), abs(rep.T2), abs(rep.T3), abs(rep.T4))
        worst_mm = max(worst_mm, rep.metric_mismatch, rep.mean_curvature_mismatch)
    ok = worst_T <= 1e-10 and worst_mm <= 1e-12
    acceptance(6, "pair identity on rotation pairs in schwarzschild(0.5)", ok, f"terms {fmt(worst_T)}, mismatch {fmt(worst_mm)}")
    assert ok


# 7 ---------------------------------------------------------------------------------
def test_criterion_07_sigma2(kernels, acceptance):
    space, _, lay, rep = kernels["cubic"]
    hyp = A.theorem_hypotheses(space)
    geo = lay.response.geometry
    pair_max = 0.0
    for axis, angle in (([1, 2, 3], 0.7), ([0, 1, 0], 1.9)):
        gB = eval_point(space, Rotated(RadialGraph(GENERIC), axis_angle(axis, angle)), KERNEL_GRID)
        pair_max = max(pair_max, sigma2_checks(space, KERNEL_GRID, pair=(geo, gB))["pair_max"])
    ok = (
        hyp["phi_phi_u_positive"]
        and rep.kernel_dimension == 3
        and float(np.min(np.abs(geo.H))) > 0
        and float(np.min(geo.phi)) > 0
        and pair_max <= 1e-10
    )
    acceptance(7, "cubic warp sigma2: Phi Phi_u > 0, kernel 3, pair residual", ok, f"min Phi Phi_u {fmt(hyp['min_phi_phi_u'])}, kernel {rep.kernel_dimension}, pair {fmt(pair_max)}")
    assert ok


# 8 ---------------------------------------------------------------------------------
def test_criterion_08_space_form_checks(kernels, acceptance):
    space, _, lay, rep = kernels["euclidean"]
    geo = lay.response.geometry
    var = lay.variation(rep.kernel_vectors)
    out = spaceform_checks(space, KERNEL_GRID, geo, var)
    lin = float(np.max(out["lin_gauss_max"] / out["scale"]))
    det = float(np.max(np.abs(out["det_integral"])))
    excess = float(np.max(out["sign_excess"] / out["scale"] ** 2))
    ok = lin <= 1e-6 and det <= 1e-8 and excess <= 1e-12
    acceptance(8, "space-form checks on Euclidean kernel vectors", ok, f"lin Gauss / scale {fmt(lin)}, |int det h' phi| {fmt(det)}, sign excess {fmt(excess)}")
    assert ok


# 9 ---------------------------------------------------------------------------------
def test_criterion_09_search(acceptance):
    traces = run_restarts(A.schwarzschild(0.5), GENERIC, build_grid(10, 20), degree=3, seed=0, restarts=5, perturbation=1e-2)
    E = max(t.final_energy for t in traces)
    D = max(t.orbit_distance for t in traces)
    ok = len(traces) == 5 and E <= 1e-10 and D <= 1e-4
    acceptance(9, "5 seeded restarts reach the rotation orbit", ok, f"max E {fmt(E)}, max orbit distance {fmt(D)}, status {sorted({t.status for t in traces})}")
    assert ok


# 10 --------------------------------------------------------------------------------
def _cli(tmp_path, tag, threads, command, cfg):
    env = dict(os.environ, WARPRIG_THREADS=str(threads))
    p = tmp_path / f"{tag}.cfg.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / f"{tag}.json"
    subprocess.run([sys.executable, "-m", "warprig.cli", command, str(p), "--out", str(out)], check=True, env=env)
    files = sorted(q for q in tmp_path.iterdir() if q.name.startswith(tag + ".") and not q.name.endswith((".meta.json", ".cfg.json")))
    return [q.read_bytes() for q in files]


def test_criterion_10_numerics_hygiene(tmp_path, acceptance):
    from test_jets import corpus_max_error

    jet_err = corpus_max_error(np.random.default_rng(2024))
    surface = {"base_radius": 2.0, "harmonics": [{"l": 2, "m": 2, "c": 0.08}, {"l": 3, "m": 1, "c": 0.06}]}
    configs = {
        "verify": {"ambient": {"preset": "schwarzschild", "mass": 0.5}, "surface": surface, "output": {"format": "csv"}},
        "weight": {"ambient": {"preset": "schwarzschild", "mass": 0.5}, "weight": {"interval": [1.5, 4.0]}, "output": {"format": "csv"}},
        "spectrum": {
            "ambient": {"preset": "schwarzschild", "mass": 0.5},
            "surface": surface,
            "grid": {"lat": 16, "lon": 32},
            "deformation": {"degree": 3},
            "output": {"format": "csv"},
        },
        "search": {
            "ambient": {"preset": "schwarzschild", "mass": 0.5},
            "surface": {"base_radius": 2.0, "harmonics": [{"l": 1, "m": 1, "c": 0.02}]},
            "search": {"seed": 11, "restarts": 2, "degree": 1, "max_iter": 10, "grid": {"lat": 8, "lon": 16}},
            "output": {"format": "csv"},
        },
    }
    same = True
    for command, cfg in configs.items():
        runs = [_cli(tmp_path, f"{command}{k}", t, command, cfg) for k, t in enumerate((1, 2, 1))]
        same &= runs[0] == runs[1] == runs[2] and len(runs[0]) >= 1
    ok = jet_err <= 1e-8 and same
    acceptance(10, "jet corpus vs finite differences; byte-reproducible reports", ok, f"jet rel err {fmt(jet_err)}, reports identical across runs/threads: {same}")
    assert ok
