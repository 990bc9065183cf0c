"""Experiment configuration, suite orchestration and report emission.

Suites split into exact assertions (rational identities, which fail the
run) and measured profiles (decay fits, Schatten trends, which only
annotate it). Reports are JSON with a fixed key order; everything that
varies between identical runs lives under the top-level ``timestamp`` key.
"""

import csv
import dataclasses
import json
import os
import platform
import random
import time
from dataclasses import dataclass, fields
from fractions import Fraction

import numpy as np

from gamma_forge import _kernels
from gamma_forge.bicombing import Bicombing, decay_profile
from gamma_forge.chain_complex import Chain, ChainBuilder, boundary, prism
from gamma_forge.filling_line import sigma
from gamma_forge.group_model import BoundaryError, audit_delta, build_ball, resolve_group
from gamma_forge.homotopy import Averager, RetractionEta, RipsContraction, homotopy_defect

SUITE_ORDER = ("group", "chain", "sigma", "bicombing", "homotopy", "lafforgue", "ks", "spectral")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    group: str = "free2"
    radius: int = 8
    delta_config: int = 1
    ell: int = 2
    R: int = 2
    t: float = None
    metric: str = "word"
    window_center: str = "e"
    window_radius: int = 2
    ks_R: int = None
    ks_radius: int = None
    ks_windows: str = "2,3"
    p_grid: str = "2,4,8,16,32,64"
    generators: str = "all"
    seed: int = 0
    chains: int = 100
    max_degree: int = 3
    samples: int = 500
    sequence_budget: int = 200000
    vertex_budget: int = 250000
    tolerance: float = 1e-10
    suites: str = "group,chain,sigma"
    measured: bool = False

    def validate(self):
        for name in ("radius", "delta_config", "ell", "R", "window_radius", "chains", "samples"):
            if getattr(self, name) is None or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.max_degree < 0:
            raise ConfigError("max_degree must be >= 0")
        if not self.suite_list():
            raise ConfigError("the suite list is empty")
        bad = [s for s in self.suite_list() if s not in SUITE_ORDER]
        if bad:
            raise ConfigError(f"unknown suites {bad}; choose from {', '.join(SUITE_ORDER)}")
        return self

    def suite_list(self):
        names = [s.strip() for s in str(self.suites).split(",") if s.strip()]
        return [s for s in SUITE_ORDER if s in names] + [s for s in names if s not in SUITE_ORDER]

    def overrides(self):
        """Parameters below the thresholds the constructions are proved for."""
        d = self.delta_config
        out = []
        if self.R < 12 * d:
            out.append(f"R={self.R} < 12*delta={12 * d} (Rips contraction and Lafforgue operator)")
        if (self.ks_R or self.R) < 48 * d:
            out.append(f"ks_R={self.ks_R or self.R} < 48*delta={48 * d} (Kasparov-Skandalis operator)")
        if self.ell != 10 * d:
            out.append(f"ell={self.ell} != 10*delta={10 * d} (bicombing spacing)")
        return out

    def p_values(self):
        return parse_p_grid(self.p_grid)

    def echo(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_p_grid(text):
    """``2,4,8`` or ``lo:n:hi`` (n values spaced geometrically from lo to hi)."""
    text = str(text).strip()
    if ":" in text:
        lo, n, hi = text.split(":")
        lo, n, hi = float(lo), int(n), float(hi)
        if n < 2:
            return [lo]
        vals = [round(float(v), 6) for v in np.geomspace(lo, hi, n)]
        return [int(v) if v.is_integer() else v for v in vals]
    return [int(v) if float(v).is_integer() else float(v) for v in (x.strip() for x in text.split(",")) if v]


def _coerce(f, text):
    if f.name in ("t", "ks_R", "ks_radius"):
        if str(text).lower() in ("", "none", "default"):
            return None
        return float(text) if f.name == "t" else int(text)
    if isinstance(f.default, bool):
        return str(text).lower() in ("1", "true", "yes", "on")
    if isinstance(f.default, int):
        return int(text)
    if isinstance(f.default, float):
        return float(text)
    return str(text)


def parse_config_text(text, base=None):
    """``key = value`` lines; ``#`` starts a comment."""
    cfg = dataclasses.replace(base) if base else ExperimentConfig()
    known = {f.name: f for f in fields(ExperimentConfig)}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        setattr(cfg, key, _coerce(known[key], value))
    return cfg


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def set_field(cfg, key, value):
    known = {f.name: f for f in fields(ExperimentConfig)}
    setattr(cfg, key, _coerce(known[key], value))


# ---------------------------------------------------------------- context


class Context:
    """Lazily built shared objects for one run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._ball = None
        self._bicombing = None
        self._contraction = None

    @property
    def ball(self):
        if self._ball is None:
            spec = resolve_group(self.cfg.group)
            self._ball = build_ball(spec, self.cfg.radius, vertex_budget=self.cfg.vertex_budget)
        return self._ball

    @property
    def bicombing(self):
        if self._bicombing is None:
            c = self.cfg
            self._bicombing = Bicombing(self.ball, c.ell, c.delta_config, sequence_budget=c.sequence_budget)
        return self._bicombing

    @property
    def contraction(self):
        if self._contraction is None:
            eta = RetractionEta(self.ball, self.cfg.R)
            self._contraction = RipsContraction(self.bicombing, eta)
        return self._contraction

    def rng(self, salt):
        return random.Random(f"{self.cfg.seed}:{salt}")


def random_bar_chain(rng, core, degree, terms=2):
    acc = ChainBuilder(degree)
    for _ in range(terms):
        s = tuple(rng.choice(core) for _ in range(degree + 1))
        acc.add(s, Fraction(rng.randint(1, 5) * rng.choice((-1, 1))))
    return acc.build()


def random_rips_chain(rng, ball, core, R, degree, terms=2):
    acc = ChainBuilder(degree)
    for _ in range(terms):
        s = [rng.choice(core)]
        while len(s) < degree + 1:
            cand = [int(w) for w in ball.ball_around(s[0], R) if all(ball.dist(int(w), v) <= R for v in s)]
            s.append(rng.choice(cand))
        acc.add(tuple(s), Fraction(rng.randint(1, 5) * rng.choice((-1, 1))))
    return acc.build()


def _verdict(failures, total):
    return {"failures": failures, "total": total, "pass": failures == 0}


# ---------------------------------------------------------------- suites


def suite_group(ctx):
    ball = ctx.ball
    audit = audit_delta(ball, samples=ctx.cfg.samples * 10, seed=ctx.cfg.seed)
    spheres = [int(np.sum(ball.lengths == r)) for r in range(ball.radius + 1)]
    # ShortLex normal forms are geodesic iff their length is the BFS distance from e
    bad = int(np.sum(ball.dist_row(0) != ball.lengths))
    return {
        "exact": {"normal_form_lengths_match_bfs": _verdict(bad, ball.size)},
        "measured": {
            "vertices": ball.size,
            "sphere_sizes": spheres,
            "delta_thin": audit.delta_thin,
            "delta_config_audit": audit.delta_config,
            "sample_count": audit.sample_count,
            "exhaustive": audit.exhaustive,
            "surrogates": "delta of the thin-triangle definition",
        },
    }


def suite_chain(ctx):
    cfg, ball = ctx.cfg, ctx.ball
    rng = ctx.rng("chain")
    core = [int(v) for v in ball.core(min(3, ball.radius))]
    shift = ball.element(ball.spec.generators[0])
    out = {}
    fail_dd = fail_prism = fail_alt = total = 0
    from gamma_forge.chain_complex import antisymmetrize

    for n in range(cfg.max_degree + 1):
        for _ in range(cfg.chains):
            c = random_bar_chain(rng, core, n)
            total += 1
            if n >= 1 and boundary(boundary(c)):
                fail_dd += 1
            # prism between the identity and a left translation
            phi = lambda v: v
            psi = lambda v: ball.translate(shift, v)
            h = prism(phi, psi, c)
            lhs = boundary(h) + (prism(phi, psi, boundary(c)) if n >= 1 else Chain.zero(n))
            rhs = Chain({tuple(psi(v) for v in s): k for s, k in c.terms.items()}, n) - c
            if lhs != rhs:
                fail_prism += 1
            if n >= 1 and boundary(antisymmetrize(c)) != antisymmetrize(boundary(c)):
                fail_alt += 1
    out["boundary_squared"] = _verdict(fail_dd, total)
    out["prism_identity"] = _verdict(fail_prism, total)
    out["antisymmetrization_chain_map"] = _verdict(fail_alt, total)
    return {"exact": out, "measured": {}}


def suite_sigma(ctx):
    cfg = ctx.cfg
    rng = ctx.rng("sigma")
    fails = total = 0
    for n in range(-1, cfg.max_degree + 1):
        for _ in range(cfg.chains):
            if n == -1:
                c = Chain.unit(rng.randint(1, 5))
            else:
                c = random_bar_chain(rng, list(range(12)), n)
            total += 1
            if homotopy_defect(sigma, c):
                fails += 1
    return {"exact": {"sigma_contracting": _verdict(fails, total)}, "measured": {}}


def suite_bicombing(ctx):
    cfg, ball, bic = ctx.cfg, ctx.ball, ctx.bicombing
    rng = ctx.rng("bicombing")
    core = [int(v) for v in ball.core(ball.radius // 2)]
    fails = {"sum_one": 0, "sphere": 0, "weight_sum": 0, "geometry": 0}
    prox = 0
    n = 0
    for _ in range(cfg.samples):
        x, y = rng.choice(core), rng.choice(core)
        n += 1
        m = bic.levels(x, y)
        for k in range(1, max(m, 1) + 1):
            d = bic.check_distribution(x, y, k)
            fails["sum_one"] += not d["sum_one"]
            fails["sphere"] += not d["sphere"]
        s = bic.check_sequences(x, y)
        fails["weight_sum"] += not s["weight_sum_one"]
        fails["geometry"] += not s["geometry"]
        prox = max(prox, s["proximity"])
    kmax = max(1, (ball.radius // 2) // bic.ell)
    prof = decay_profile(bic, range(1, kmax + 1), samples=cfg.samples, seed=cfg.seed)
    return {
        "exact": {k: _verdict(v, n) for k, v in fails.items()},
        "measured": {
            "bicombing": bic.describe(),
            "sequence_proximity": prox,
            "tau_supp": bic.tau_supp,
            "decay_buckets": [[g, v, c] for g, v, c in prof.rows()],
            "lambda1_hat": prof.lambda1_hat,
            "C1_hat": prof.C1_hat,
            "covered": prof.covered,
            "note": prof.note,
            "sample_count": cfg.samples,
            "surrogates": "C1 * lambda1^((x|x')_y - k*ell)",
        },
    }


def suite_homotopy(ctx):
    cfg, ball = ctx.cfg, ctx.ball
    rng = ctx.rng("homotopy")
    # h^x recurses through base-point offsets, so keep two steps of margin
    core = [int(v) for v in ball.core(max(1, min(3, (ball.radius - 2) // 2)))]
    avg = Averager(ctx.bicombing)
    h = ctx.contraction
    mu_fail = h_fail = total = skipped = 0
    for n in range(-1, cfg.max_degree + 1):
        for _ in range(cfg.chains):
            x, y = rng.choice(core), rng.choice(core)
            bar = Chain.unit(rng.randint(1, 3)) if n == -1 else random_bar_chain(rng, core, n)
            rips = Chain.unit(rng.randint(1, 3)) if n == -1 else random_rips_chain(rng, ball, core, cfg.R, n)
            try:
                mu_bad = bool(homotopy_defect(lambda c: avg.mu(x, y, c), bar))
                h_bad = bool(homotopy_defect(lambda c: h.apply(x, c), rips))
            except BoundaryError:
                skipped += 1
                continue
            total += 1
            mu_fail += mu_bad
            h_fail += h_bad
    return {
        "exact": {"mu_contracting": _verdict(mu_fail, total), "h_contracting": _verdict(h_fail, total)},
        "measured": {"core_radius": int(ball.lengths[core].max()), "skipped_near_boundary": skipped,
                     "eta_propagation": h.eta.propagation, "eta_coefficient_bound": str(h.eta.coefficient_bound),
                     "eta_fills": h.eta.fills},
    }


def _window(ctx):
    from gamma_forge.lafforgue import window_wedges

    ball = ctx.ball
    center = ball.element(ctx.cfg.window_center)
    return window_wedges(ball, center, ctx.cfg.window_radius, ctx.cfg.R)


def _generators(ctx):
    ball = ctx.ball
    if ctx.cfg.generators == "all":
        return [ball.element((g,)) for g in ball.spec.generators]
    return [ball.element(g.strip()) for g in ctx.cfg.generators.split(",") if g.strip()]


def suite_lafforgue(ctx):
    from gamma_forge import lafforgue as lf

    cfg, ball = ctx.cfg, ctx.ball
    metric = lf.parse_metric(cfg.metric, ball)
    t = cfg.t if cfg.t is not None else lf.default_t(ball, metric)
    window = _window(ctx)
    x = ball.element(cfg.window_center)
    mod = lf.lafforgue_F(ctx.contraction, metric, x, t, window, toy=True, delta_config=cfg.delta_config)
    mod0 = lf.lafforgue_F(ctx.contraction, metric, x, 0.0, window, toy=True, delta_config=cfg.delta_config)
    ch = mod.checks
    tol = cfg.tolerance
    exact = {
        "defect_exact": _verdict(ch["exact_defect_failures"], ch["interior"]),
        "H_squared_zero": _verdict(ch["H_squared_failures"], ch["H_interior"]),
        "defect_rank_one": {"value": ch["defect_rank"], "pass": ch["defect_rank"] == 1},
        "defect_rank_one_t0": {"value": mod0.checks["defect_rank"], "pass": mod0.checks["defect_rank"] == 1},
        "defect_residual": {"value": ch["defect_residual"], "pass": ch["defect_residual"] <= tol * 100},
        "odd": {"pass": ch["odd"]},
    }
    measured = {"t": t, "window": ch["window"], "interior": ch["interior"],
                "selfadjoint_error": ch["selfadjoint_error"], "metric": metric.name}
    if cfg.measured:
        rho_ball = ball if ball.radius <= 6 else build_ball(ball.spec, 6)
        prof = lf.rho_profile(lf.parse_metric(cfg.metric, rho_ball), rho_ball)
        measured["rho"] = {str(r): v for r, v in prof.values.items()}
        measured["rho_decay"] = prof.decay
        table = {}
        for g in _generators(ctx):
            gx = ball.multiply(g, x)
            mg = lf.lafforgue_F(ctx.contraction, metric, gx, t, window, toy=True, check=False)
            _, _, tab = lf.commutator_table(mod, mg, cfg.p_values())
            table[ball.name(g)] = {str(p): v for p, v in tab.items()}
        measured["commutator_schatten"] = table
    return {"exact": exact, "measured": measured}


def _ks_geometry(ctx):
    from gamma_forge.kasparov_skandalis import KSGeometry

    cfg = ctx.cfg
    R = cfg.ks_R or cfg.R
    bic = Bicombing(ctx.ball, cfg.ell, cfg.delta_config, flower=False)
    return KSGeometry(bic, R, cfg.delta_config, toy=R < 48 * cfg.delta_config)


def suite_ks(ctx):
    from gamma_forge import kasparov_skandalis as ks
    from gamma_forge.lafforgue import generator_count, rips_cliques

    cfg, ball = ctx.cfg, ctx.ball
    geom = _ks_geometry(ctx)
    x = ball.element(cfg.window_center)
    window = rips_cliques(ball.ball_around(x, cfg.window_radius), geom.R, ball.dist)
    mod = ks.ks_F(geom, x, window)
    ch = mod.checks
    exact = {
        "clifford_identity": _verdict(ch["clifford_failures"], ch["window"]),
        "selfadjoint": {"value": ch["selfadjoint_error"], "pass": ch["selfadjoint_error"] == 0.0},
        "square_is_one_minus_projection": {"value": ch["square_residual"],
                                           "pass": ch["square_residual"] <= cfg.tolerance},
        "F_kills_base_vector": {"value": ch["F_ex_norm"], "pass": ch["F_ex_norm"] == 0.0},
        "norm_at_most_one": {"value": ch["norm"], "pass": ch["norm"] <= 1 + cfg.tolerance},
    }
    status = "exact" if not geom.toy else "measured"
    inv = {"block_invariance_failures": ch["block_invariance_failures"], "xi_block_mismatch": ch["xi_block_mismatch"]}
    if status == "exact":
        exact["block_invariance"] = _verdict(ch["block_invariance_failures"] + ch["xi_block_mismatch"], ch["window"])
    scan_r = ball.radius - geom.R - int(ball.lengths[x])
    scan = ks.scan_flower_loci(geom, x, ball.core(max(0, scan_r)), max_size=3)
    n_gens = generator_count(ball)
    measured = {"R": geom.R, "status": status, "blocks": ch["blocks"], "f2_defect_rank": ch["f2_defect_rank"],
                "vflower_max_diam": scan["max_V_diam"], "flower_violations": len(scan["violations"]),
                "flower_sets": scan["sets"], "closed_form_p": ks.summability_exponent(cfg.delta_config, n_gens),
                "lambda1": ks.bicombing_rate_bound(cfg.delta_config, n_gens), **inv}
    if cfg.measured:
        radii = [int(r) for r in cfg.ks_windows.split(",")]
        audit = ks.summability_audit(geom, x, _generators(ctx), radii, cfg.p_values())
        measured["schatten"] = audit["schatten"]
        measured["stabilized_p"] = audit["stabilized_p"]
        measured["stabilization_note"] = audit["stabilization_note"]
        measured["windows"] = audit["windows"]
    return {"exact": exact, "measured": measured}


def suite_spectral(ctx):
    from gamma_forge import lafforgue as lf
    from gamma_forge import spectral as sp

    cfg, ball = ctx.cfg, ctx.ball
    rng = np.random.default_rng(cfg.seed)
    fails = 0
    n = max(10, cfg.samples // 10)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(2, 12))
        F = _random_involution(rng, d)
        Ft = sp.selfadjointify(F).F_tilde
        err = max(float(np.abs(Ft @ Ft - np.eye(d)).max()), float(np.abs(Ft - Ft.T).max()))
        worst = max(worst, err)
        fails += err > cfg.tolerance
    # propagation bounds and spectrum of one Lafforgue commutator
    metric = lf.parse_metric(cfg.metric, ball)
    t = cfg.t if cfg.t is not None else lf.default_t(ball, metric)
    window = _window(ctx)
    x = ball.element(cfg.window_center)
    g = _generators(ctx)[0]
    mx = lf.lafforgue_F(ctx.contraction, metric, x, t, window, toy=True, check=False)
    mg = lf.lafforgue_F(ctx.contraction, metric, ball.multiply(g, x), t, window, toy=True, check=False)
    op, spec, table = lf.commutator_table(mx, mg, cfg.p_values())
    n_gens = lf.generator_count(ball)
    schur = sp.schur_report(mx.F, cfg.R, n_gens)
    counts = sp.count_check(mx.F.rows, cfg.R, n_gens, ball.dist)
    trace_gap = abs(float(np.sum(spec.values ** 2)) - float(np.sum(op.data ** 2)))
    frob = float(np.sum(op.data ** 2)) or 1.0
    exact = {
        "selfadjointify": _verdict(fails, n),
        "schur_domination": _verdict(sum(not r["ok"] for r in schur), len(schur)),
        "counting_bound": _verdict(sum(not r["ok"] for r in counts), len(counts)),
        "trace_identity": {"value": trace_gap / frob, "pass": trace_gap / frob <= 1e-7},
    }
    measured = {"worst_involution_error": worst, "generator": ball.name(g), "spectrum_method": spec.method,
                "commutator_shape": list(op.data.shape), "schatten": {str(p): v for p, v in table.items()},
                "singular_values": [float(v) for v in spec.values[:200]],
                "max_schur_ratio": max((r["norm"] / r["bound"] for r in schur if r["bound"]), default=0.0)}
    return {"exact": exact, "measured": measured}


def _random_involution(rng, d):
    """S diag(+-1) S^-1 for a well-conditioned random S."""
    while True:
        S = np.eye(d) + 0.3 * rng.normal(size=(d, d))
        if np.linalg.cond(S) < 50:
            break
    signs = rng.choice([-1.0, 1.0], size=d)
    return S @ np.diag(signs) @ np.linalg.inv(S)


SUITES = {
    "group": suite_group,
    "chain": suite_chain,
    "sigma": suite_sigma,
    "bicombing": suite_bicombing,
    "homotopy": suite_homotopy,
    "lafforgue": suite_lafforgue,
    "ks": suite_ks,
    "spectral": suite_spectral,
}


# ---------------------------------------------------------------- report


def suite_passed(result):
    return all(v.get("pass", True) for v in result.get("exact", {}).values())


def run_suite(cfg, out_dir=None):
    """Run the configured suites in dependency order; returns (report, exit_code)."""
    cfg.validate()
    started = time.time()
    ctx = Context(cfg)
    report = {
        "config": cfg.echo(),
        "overrides": cfg.overrides(),
        "provenance": {"package": "gamma-forge", "version": _version(), "numpy": np.__version__,
                       "kernel_backend": _kernels.BACKEND, "python": platform.python_version()},
        "suites": {},
        "verdict": "pass",
    }
    code = 0
    for name in cfg.suite_list():
        try:
            result = SUITES[name](ctx)
        except Exception as exc:  # a crash is a hard failure of that suite
            result = {"exact": {"error": {"pass": False, "message": f"{type(exc).__name__}: {exc}"}}, "measured": {}}
        result["pass"] = suite_passed(result)
        report["suites"][name] = result
        if not result["pass"]:
            report["verdict"] = "fail"
            report["aborted_after"] = name
            code = 1
            break
    report["timestamp"] = {"started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
                           "wall_time_s": round(time.time() - started, 3)}
    if out_dir:
        write_report(report, out_dir)
    return report, code


def _version():
    from gamma_forge import __version__

    return __version__


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, frozenset):
        return sorted(_jsonable(v) for v in obj)
    return obj


def dumps(report):
    return json.dumps(_jsonable(report), indent=2, sort_keys=False) + "\n"


def strip_timestamp(text):
    obj = json.loads(text)
    obj.pop("timestamp", None)
    return json.dumps(obj, indent=2)


def write_report(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(dumps(report))
    bic = report["suites"].get("bicombing", {}).get("measured", {})
    if "decay_buckets" in bic:
        with open(os.path.join(out_dir, "decay.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gap", "max_l1", "count"])
            w.writerows(bic["decay_buckets"])
