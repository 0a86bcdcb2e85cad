"""The eleven acceptance criteria at their pinned tolerances.

Each test records one ``criterion NN ... PASS/FAIL`` line, shown in the
terminal summary (and on stdout with ``-s``).
"""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, GRID_SPECS, gradient_fd_error
from mrof import EnergyParams, Field, brute_force_small, energy, make_grid, minimize, parse_manifold, write_field
from mrof.cli import oracle_compare
from mrof.manifold import convexity_radius, strong_radius
from mrof.oracle import taut_string_1d
from mrof.verify import (
    convexity_sweep,
    ellipticity_sweep,
    geodesic_path_family,
    lipschitz_scaling_study,
    mollifier_study,
    range_invariance_study,
    retraction_length_check,
    retraction_monotonicity,
    sawtooth_family,
)

ALL_SPECS = ["euclidean:3", "sphere:2", "sphere:2:r=2", "hyperbolic:2", "spd:2", "spd:3"]


def record(number, name, ok, detail):
    line = f"criterion {number:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_geometry_round_trip():
    worst_rt = worst_norm = worst_pt = worst_tan = 0.0
    rng = np.random.default_rng(101)
    for spec in ALL_SPECS:
        M = parse_manifold(spec)
        p = M.random_point(rng, None, 1.0, size=1000)
        reach = 0.9 * M.inj if math.isfinite(M.inj) else 3.0
        v = M.random_tangent(rng, p)
        v *= (reach * rng.uniform(0.0, 1.0, 1000) / M.norm(p, v))[:, None]
        q = M.exp(p, v)
        w = M.log(p, q)
        back = M.exp(p, w)
        worst_rt = max(worst_rt, float(np.max(np.abs(back - q))))
        worst_norm = max(worst_norm, float(np.max(np.abs(M.norm(p, w) - M.dist(p, q)))))
        worst_pt = max(worst_pt, float(np.max(M.point_residual(q))), float(np.max(M.point_residual(back))))
        worst_tan = max(worst_tan, float(np.max(M.tangent_residual(p, w))))
    ok = worst_rt <= 1e-10 and worst_norm <= 1e-10 and worst_pt <= 1e-12 and worst_tan <= 1e-12
    record(1, "geometry round trip", ok,
           f"exp-log {worst_rt:.1e}, |log|-dist {worst_norm:.1e}, point {worst_pt:.1e}, tangent {worst_tan:.1e}")


def test_02_radii():
    expected = {
        "sphere:2": (0.5 * min(math.pi, math.pi / 1.0), min(0.5 * math.pi, math.pi / 4.0)),
        "sphere:2:r=2": (0.5 * min(2 * math.pi, math.pi / math.sqrt(0.25)), min(math.pi, math.pi / (4 * 0.5))),
        "hyperbolic:2": (math.inf, math.inf),
        "euclidean:3": (math.inf, math.inf),
        "spd:2": (math.inf, math.inf),
    }
    got = {s: (convexity_radius(parse_manifold(s)), strong_radius(parse_manifold(s))) for s in expected}
    ok = got == expected and got["sphere:2"] == (math.pi / 2, math.pi / 4)
    record(2, "radii", ok, ", ".join(f"{s}={g[0]:.6g}/{g[1]:.6g}" for s, g in got.items()))


def test_03_retraction():
    lengths = []
    for spec in ("sphere:2", "hyperbolic:2"):
        M = parse_manifold(spec)
        R = 0.5 * convexity_radius(M) if math.isfinite(convexity_radius(M)) else 1.0
        lengths.append(float(np.min(retraction_length_check(M, R, pairs=1000, seed=31))))
    reps = [retraction_monotonicity(parse_manifold(s), make_grid(g), samples=250, seed=32, pairs=10)
            for s, g in (("hyperbolic:2", "interval:16"), ("sphere:2", "rect2d:4x4"))]
    ok = min(lengths) >= -1e-12 and all(r.passed for r in reps)
    record(3, "retraction", ok,
           f"min length decrease {min(lengths):.1e} on 2000 pairs, "
           f"min energy drop {min(r.summary['min_energy_drop'] for r in reps):.1e} on 500 fields")


def test_04_gradient_finite_difference():
    rng = np.random.default_rng(404)
    errs = []
    specs = ["euclidean:3", "sphere:2", "hyperbolic:2", "spd:2"]
    for k in range(200):
        M = parse_manifold(specs[k % 4])
        g = make_grid(GRID_SPECS[(k // 4) % len(GRID_SPECS)])
        params = EnergyParams(lam=float(10 ** rng.uniform(-1, 1)), sigma=float(10 ** rng.uniform(-2, 0)),
                              eps=float(10 ** rng.uniform(-2, 0)))
        errs.append(gradient_fd_error(M, g, rng, params))
    worst = max(errs)
    record(4, "gradient finite difference", worst <= 1e-5, f"max relative error {worst:.1e} over 200 configurations")


def test_05_oracle_equivalence():
    res = oracle_compare(make_grid("interval:64"), 8.0, seed=1, signals=20)
    # brute force: two euclidean nodes against the taut string, three sphere nodes against the solver
    g2 = make_grid("interval:2")
    f2 = np.array([[0.0], [1.0]])
    bf = brute_force_small(parse_manifold("euclidean:1"), g2, f2, EnergyParams(lam=6.0), 201)
    ts = taut_string_1d(f2[:, 0], 6.0, grid=g2).values
    bf_gap = float(np.max(np.abs(bf.values[:, 0] - ts)))
    S = parse_manifold("sphere:2")
    g3 = make_grid("circle:3")
    f3 = S.random_point(np.random.default_rng(5), S.origin(), 0.6, size=3)
    params = EnergyParams(lam=2.0, sigma=0.05, eps=0.05)
    bs = brute_force_small(S, g3, f3, params, 21)
    u, _ = minimize(S, g3, f3, params)
    excess = energy(S, g3, u, f3, params).total - bs.objective
    ok = res["max_gap"] <= 1e-3 and bf_gap <= bf.info["net_resolution"] and excess <= bs.info["energy_resolution"]
    record(5, "oracle equivalence", ok,
           f"taut-string gap {res['max_gap']:.1e} over 20 signals, brute-force gap {bf_gap:.1e} "
           f"<= net {bf.info['net_resolution']:.1e}, sphere solver-minus-net {excess:.1e}")


def test_06_range_invariance():
    battery = [("hyperbolic:2", "interval:64", 20), ("hyperbolic:2", "rect2d:6x6:rho=sphere_patch", 5),
               ("spd:2", "interval:32", 5), ("euclidean:2", "circle:24", 5)]
    reps = [range_invariance_study(parse_manifold(s), make_grid(g), trials=n, seed=6) for s, g, n in battery]
    viol = sum(r.violations for r in reps)
    runs = sum(r.summary["n_cases"] for r in reps)
    worst = max(r.summary["max_excess"] for r in reps)
    record(6, "range invariance", viol == 0, f"{viol} violations over {runs} runs, max excess over R {worst:.1e}")


def test_07_geodesic_convexity():
    rep = convexity_sweep(parse_manifold("hyperbolic:2"), make_grid("circle:16"), trials=100, seed=7)
    s = rep.summary
    ok = rep.passed and s["min_convexity_margin"] >= -1e-10 and s["min_second_variation"] >= -1e-6
    record(7, "geodesic convexity", ok,
           f"{rep.violations} violations, min margin {s['min_convexity_margin']:.1e}, "
           f"min second variation {s['min_second_variation']:.1e}")


def test_08_ellipticity():
    rep = ellipticity_sweep(samples=10000, seed=8)
    record(8, "ellipticity H1-H6", rep.passed and rep.min_margin >= -1e-12,
           f"{rep.violations} violations, min slack {rep.min_margin:.1e}")


def test_09_lipschitz_scaling():
    sizes = (32, 64, 128, 256, 512)
    npc = [lipschitz_scaling_study(geodesic_path_family(parse_manifold(s)), sizes, lam=100.0)
           for s in ("hyperbolic:2", "spd:2")]
    saw = lipschitz_scaling_study(sawtooth_family(), (64, 128, 256, 512, 1024), lam=100.0)
    ok = all(r.passed for r in npc) and saw.passed
    ratios = "; ".join(f"{r.parameters['manifold']} " + ",".join(f"{x:.4f}" for x in r.summary["ratios"])
                       for r in npc)
    excess = max(c["oracle_excess"] for c in saw.cases)
    record(9, "Lipschitz scaling", ok, f"ratios {ratios}; sawtooth oracle max Lip(u)-Lip(f) {excess:.1e}")


def test_10_mollifier():
    cases = [("euclidean:1", "interval:64", sawtooth_family()), ("hyperbolic:2", "interval:64", None),
             ("hyperbolic:2", "circle:32", None), ("sphere:2", "rect2d:12x12", None), ("spd:2", "interval:32", None)]
    reps = []
    for spec, gspec, fam in cases:
        M = parse_manifold(spec)
        g = make_grid(gspec)
        if fam is None and g.is_1d:
            fam = geodesic_path_family(M, radius=0.5)
        reps.append(mollifier_study(M, g, seed=10, family=fam))
    fixed = max(c["fixed_point_error"] for r in reps for c in r.cases)
    conv = max(c["convolution_gap"] for c in reps[0].cases)
    cmax = max(r.summary["c_max"] for r in reps)
    ok = all(r.passed for r in reps) and fixed == 0.0 and conv <= 1e-12
    record(10, "mollifier", ok, f"fixed point error {fixed:.1e}, convolution gap {conv:.1e}, max C {cmax:.4f}")


def test_11_cli_determinism(tmp_path):
    S = parse_manifold("sphere:2")
    g = make_grid("interval:256")
    rng = np.random.default_rng(11)
    t = 0.7 * g.coords[:, 0]
    arc = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
    write_field(tmp_path / "f.json", Field(S, g, S.exp(arc, 0.05 * S.random_tangent(rng, arc))))
    env = dict(os.environ, MROF_THREADS="2")
    runs = {
        "denoise": ["denoise", "--manifold", "sphere:2", "--grid", "interval:256", "--input",
                    str(tmp_path / "f.json"), "--lambda", "4", "--schedule", "default", "--out", "u.json"],
        "verify": ["verify", "convexity", "--grid", "circle:16", "--trials", "20", "--seed", "7",
                   "--out", "study.json", "--csv", "study.csv"],
        "oracle": ["oracle-compare", "--grid", "interval:64", "--lambda", "8", "--seed", "1", "--signals", "5",
                   "--out", "oracle.json"],
    }
    outputs = []
    for rep in ("a", "b"):
        d = tmp_path / rep
        d.mkdir()
        for argv in runs.values():
            proc = subprocess.run([sys.executable, "-m", "mrof.cli", *argv], cwd=d, env=env, capture_output=True)
            assert proc.returncode == 0, proc.stderr
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    names = sorted(outputs[0])
    same = names == sorted(outputs[1]) and all(outputs[0][n] == outputs[1][n] for n in names)
    record(11, "CLI determinism", same and len(names) == 6, f"{len(names)} files byte-identical across two runs")


@pytest.fixture(autouse=True, scope="module")
def _numba_backend_line():
    from mrof import kernels

    ACCEPTANCE_LINES.append(f"criterion 00 kernel backend: {kernels.BACKEND}")
    yield
