"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed even when output capture is on.
"""

import math
import time

import numpy as np
import pytest

from gamma_forge import harness
from gamma_forge.bicombing import Bicombing, decay_profile
from gamma_forge.group_model import build_ball, gromov_product, preset
from gamma_forge.homotopy import Averager, basepoint_sensitivity
from gamma_forge.kasparov_skandalis import (
    KSGeometry,
    implication_holds,
    ks_F,
    line_sets,
    bicombing_rate_bound,
    scan_flower_loci,
    scan_sets,
    summability_audit,
    summability_exponent,
)
from gamma_forge.lafforgue import (
    MetricModel,
    commutator,
    default_t,
    generator_count,
    lafforgue_F,
    phi_matrix,
    rho_profile,
    rips_cliques,
    window_wedges,
)
from gamma_forge.spectral import count_check, materialize, schur_report, selfadjointify


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return emit


def test_criterion_01_chain_identities(report):
    lines, ok = [], True
    start = time.time()
    for group, radius in (("free2", 8), ("pslz", 6)):
        cfg = harness.ExperimentConfig(group=group, radius=radius, ell=2, R=2, chains=1000, max_degree=3,
                                       suites="chain,sigma,homotopy")
        rep, code = harness.run_suite(cfg)
        checks = {name: v for s in rep["suites"].values() for name, v in s["exact"].items()}
        skipped = rep["suites"].get("homotopy", {}).get("measured", {}).get("skipped_near_boundary")
        ok &= code == 0 and skipped == 0 and all(v["failures"] == 0 for v in checks.values())
        lines.append(f"{group}: " + ", ".join(f"{k} {v['failures']}/{v['total']}" for k, v in checks.items()))
    elapsed = time.time() - start
    report(1, ok and elapsed < 300, "; ".join(lines) + f"; {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_02_bicombing_axioms(report, f2_ball):
    ball = f2_ball
    L = ball.lengths
    fails = dict.fromkeys(("sum_one", "sphere", "proximity", "weight_sum", "geometry"), 0)
    pairs = 0
    for x in range(ball.size):
        bic = Bicombing(ball, 2, 1)  # fresh caches per source vertex
        for y in np.flatnonzero(L <= ball.radius - L[x]):
            y = int(y)
            pairs += 1
            for k in range(1, max(bic.levels(x, y), 1) + 1):
                d = bic.check_distribution(x, y, k)
                fails["sum_one"] += not d["sum_one"]
                fails["sphere"] += not d["sphere"]
                fails["proximity"] += not d["proximity_ok"]
            s = bic.check_sequences(x, y)
            fails["weight_sum"] += not s["weight_sum_one"]
            fails["geometry"] += not (s["geometry"] and s["proximity_ok"])
    report(2, not any(fails.values()), f"{pairs} boundary-safe pairs, failures {fails}")


def test_criterion_03_tree_decay(report, f2_small):
    ball = f2_small
    bic = Bicombing(ball, 2, 1)
    prof = decay_profile(bic, range(1, 3), exhaustive=True)
    bad_buckets = [(g, v) for g, v, _ in prof.rows() if g >= 1 and v != 0]
    avg = Averager(bic)
    core = [int(v) for v in ball.core(ball.radius // 2)]
    checked = bad = 0
    for i, x in enumerate(core):
        for xp in core[i + 1:]:
            for y in core:
                gp = gromov_product(x, xp, y, ball)
                for r in range(0, math.ceil(gp)):
                    val, gap = basepoint_sensitivity(avg, x, xp, y, r)
                    checked += 1
                    bad += val != 0
    triples = sum(n for _, _, n in prof.rows())
    report(3, not bad_buckets and not bad,
           f"decay: {triples} samples, nonzero buckets at gap>=1: {bad_buckets}; "
           f"sensitivity: {bad} nonzero of {checked} with r < (x|x')_y")


def test_criterion_04_rho_profile(report, f2_small, pslz_ball):
    f2 = f2_small
    word = rho_profile(MetricModel.word(f2), f2)
    vanish = all(v == 0 for r, v in word.values.items() if r >= 2)
    models = {
        "free2 word": word,
        "free2 scale:3/2": rho_profile(MetricModel.scaled(f2, "3/2"), f2),
        "free2 word+1": rho_profile(MetricModel("word+1", f2, lambda i, j: f2.dist(i, j) + (i != j)), f2),
        "free2 blend": rho_profile(MetricModel.combine(MetricModel.word(f2), MetricModel.scaled(f2, 2), "1/3"), f2),
        "pslz word": rho_profile(MetricModel.word(pslz_ball), pslz_ball),
    }
    mono = {}
    for name, prof in models.items():
        vals = [prof.values[r] for r in sorted(prof.values)]
        mono[name] = all(a >= b for a, b in zip(vals, vals[1:]))
    report(4, vanish and all(mono.values()),
           f"free2 word rho={word.values} over {word.quadruples} edge pairs; monotone {mono}")


@pytest.mark.parametrize("which", ["t0", "default"])
def test_criterion_05_lafforgue_defect(report, f2_ball, f2_contraction, which):
    metric = MetricModel.word(f2_ball)
    t = 0.0 if which == "t0" else default_t(f2_ball, metric)
    window = window_wedges(f2_ball, 0, 4, 2)
    mod = lafforgue_F(f2_contraction, metric, 0, t, window, toy=True)
    ch = mod.checks
    ok = (len(window) >= 500 and ch["defect_rank"] == 1 and ch["defect_residual"] <= 1e-10
          and ch["exact_defect_failures"] == 0 and ch["H_squared_failures"] == 0)
    report(5, ok, f"t={t:.6g}: window {len(window)}, interior {ch['interior']}, rank {ch['defect_rank']}, "
                  f"residual vs e^(-t d)[x] {ch['defect_residual']:.2e}, exact failures {ch['exact_defect_failures']}")


def test_criterion_06_ks_involution(report, f2_small):
    ball = f2_small
    geom = KSGeometry(Bicombing(ball, 2, 1, flower=False), 2, toy=True)
    window = rips_cliques(ball.ball_around(0, 2), geom.R, ball.dist)
    ch = ks_F(geom, 0, window).checks
    exact_ok = (ch["clifford_failures"] == 0 and ch["selfadjoint_error"] == 0.0 and ch["F_ex_norm"] == 0.0
                and ch["square_residual"] <= 1e-12)
    # toy scale: violations are reported, not failed
    toy = scan_flower_loci(geom, 0, ball.core(ball.radius - geom.R), max_size=None)
    line = build_ball(preset("free1"), 150)
    lgeom = KSGeometry(Bicombing(line, 10, 1, flower=False), 48)
    comp = scan_sets(lgeom, 0, line_sets(line, 40, 60, 48))
    comp_ok = comp["compliant"] and comp["sets"] > 0 and not comp["violations"] and comp["max_V_diam"] <= 22
    report(6, exact_ok and comp_ok,
           f"window {ch['window']}: clifford failures {ch['clifford_failures']}, selfadjoint {ch['selfadjoint_error']}, "
           f"F e_x {ch['F_ex_norm']}, F^2 residual {ch['square_residual']:.1e}; "
           f"toy tree scan {toy['sets']} sets, max diam V {toy['max_V_diam']}, {len(toy['violations'])} violations "
           f"(reported); compliant Z scan R=48: {comp['sets']} sets, max diam V {comp['max_V_diam']}, "
           f"{len(comp['violations'])} violations")


def test_criterion_07_summability(report, f2_ball):
    p_star = summability_exponent(1, 4)
    lam = bicombing_rate_bound(1, 4)
    grid = [p_star * f for f in np.geomspace(1.0 + 1e-9, 10.0, 25)]
    chain_ok = all(lam ** p < 1 / 5 and implication_holds(1, 4, p) for p in grid)
    geom = KSGeometry(Bicombing(f2_ball, 2, 1, flower=False), 2, toy=True)
    gens = [f2_ball.element(g) for g in ("a", "b", "A", "B")]
    start = time.time()
    audit = summability_audit(geom, 0, gens, [2, 3, 4], [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 804])
    elapsed = time.time() - start
    stab = audit["stabilized_p"]
    ok = (abs(p_star - 804.72) < 5e-3 and abs(lam - 0.995963) < 1e-4 and chain_ok
          and stab is not None and stab <= p_star and elapsed < 900)
    sizes = [w["window"] for w in audit["windows"]]
    report(7, ok, f"p*={p_star:.4f}, lambda1={lam:.7f}, implication on {len(grid)} grid points {chain_ok}, "
                  f"windows {sizes} stabilize at p={stab} in {elapsed:.0f}s")


def test_criterion_08_schur_domination(report, f2_ball, f2_contraction):
    n_gens = generator_count(f2_ball)
    metric = MetricModel.word(f2_ball)
    t = default_t(f2_ball, metric)
    window = window_wedges(f2_ball, 0, 3, 2)
    phi = phi_matrix(f2_contraction, metric, 0, t, window)
    phi_op = materialize(lambda s: phi[s], window, dist=f2_ball.dist, label="Phi")
    rows = schur_report(phi_op, 2, n_gens)
    mod = lafforgue_F(f2_contraction, metric, 0, t, window, toy=True, check=False)
    for g in ("a", "b", "A", "B"):
        mg = lafforgue_F(f2_contraction, metric, f2_ball.element(g), t, window, toy=True, check=False)
        rows += schur_report(commutator(mod, mg), 2, n_gens)
    counts = count_check(mod.F.rows, 2, n_gens, f2_ball.dist)
    worst = max(r["norm"] / r["bound"] for r in rows if r["bound"])
    ok = all(r["ok"] for r in rows) and all(c["ok"] for c in counts)
    report(8, ok, f"{len(rows)} propagation/degree blocks, worst norm/bound {worst:.3e}; "
                  f"{len(counts)} counting rows, violations {sum(not c['ok'] for c in counts)}")


def test_criterion_09_selfadjointify(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 51))
        q1, _ = np.linalg.qr(rng.normal(size=(d, d)))
        q2, _ = np.linalg.qr(rng.normal(size=(d, d)))
        S = q1 @ np.diag(rng.uniform(0.5, 2.0, size=d)) @ q2
        F = S @ np.diag(rng.choice([-1.0, 1.0], size=d)) @ np.linalg.inv(S)
        Ft = selfadjointify(F).F_tilde
        worst = max(worst, float(np.abs(Ft @ Ft - np.eye(d)).max()), float(np.abs(Ft - Ft.T).max()))
    const = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 51))
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        F = q @ np.diag(rng.choice([-1.0, 1.0], size=d)) @ q.T
        path = selfadjointify(F)
        const = max(const, max(float(np.abs(path.at(t) - F).max()) for t in (0.0, 0.5, 1.0)))
    report(9, worst <= 1e-10 and const <= 1e-10,
           f"1000 involutions: worst |F~^2 - 1|, |F~ - F~*| = {worst:.2e}; selfadjoint path drift {const:.2e}")


def test_criterion_10_determinism(report, tmp_path):
    text = ("group = free2\nradius = 6\nchains = 30\nsamples = 100\nwindow_radius = 2\nks_windows = 1,2\n"
            "suites = group,chain,sigma,bicombing,homotopy,lafforgue,ks,spectral\nmeasured = true\n")
    outs = []
    for run in range(2):
        cfg = harness.parse_config_text(text)
        rep, code = harness.run_suite(cfg, tmp_path / f"run{run}")
        outs.append((tmp_path / f"run{run}" / "report.json").read_text())
    same = harness.strip_timestamp(outs[0]) == harness.strip_timestamp(outs[1])
    report(10, same and code == 0, f"two runs of {len(cfg.suite_list())} suites, {len(outs[0])} bytes, "
                                   f"identical modulo timestamp: {same}")
