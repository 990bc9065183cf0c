"""Command-line entry point: ``gamma-forge <subcommand> [flags]``.

Settings resolve as defaults, then ``--config`` file, then explicit flags.
Every subcommand prints a short summary, or the full JSON with ``--json``.
"""

import argparse
import dataclasses
import os
import sys

from gamma_forge import harness
from gamma_forge.harness import ConfigError, ExperimentConfig
from gamma_forge.plots import write_csv

# flag name -> ExperimentConfig field
COMMON = {
    "group": "group", "radius": "radius", "ell": "ell", "R": "R", "delta_config": "delta_config",
    "samples": "samples", "chains": "chains", "degree_max": "max_degree", "tolerance": "tolerance",
    "seed": "seed", "sequence_budget": "sequence_budget",
}
WINDOW = {"metric": "metric", "t": "t", "window_center": "window_center", "window_radius": "window_radius",
          "p_grid": "p_grid", "generators": "generators", "ks_windows": "ks_windows"}


def _flag(args, name):
    return getattr(args, name, None)


def _common_parser():
    # SUPPRESS keeps a subcommand's copy of a flag from erasing one given before it
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("global")
    g.add_argument("--config", help="key = value file mirroring the experiment settings")
    g.add_argument("--seed", type=int)
    g.add_argument("--out-dir", help="directory for report.json and CSV artifacts")
    g.add_argument("--json", action="store_true", help="print the full JSON report")
    m = p.add_argument_group("model")
    m.add_argument("--group", help="free2, free3, pslz or a group spec file")
    m.add_argument("--radius", type=int)
    m.add_argument("--ell", type=int)
    m.add_argument("--R", type=int)
    m.add_argument("--delta-config", type=int)
    m.add_argument("--samples", type=int)
    m.add_argument("--chains", type=int, help="random chains per degree")
    m.add_argument("--degree-max", type=int)
    m.add_argument("--tolerance", type=float)
    m.add_argument("--sequence-budget", type=int)
    return p


def _window_flags(p):
    p.add_argument("--metric", help="word, scale:k or file:path")
    p.add_argument("--t", type=float)
    p.add_argument("--window-center")
    p.add_argument("--window-radius", type=int)
    p.add_argument("--p-grid", help="comma list (2,4,8) or lo:n:hi geometric grid")
    p.add_argument("--generators", help="'all' or a comma list of words")


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="gamma-forge", parents=[common],
                                     description="Chain-level constructions and spectral audits on Cayley balls.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ball", parents=[common], help="build a ball and report sphere sizes")
    sub.add_parser("audit-delta", parents=[common], help="thin-triangle constant of the ball")
    sub.add_parser("bicombing", parents=[common], help="bicombing axioms and decay profile")
    sub.add_parser("homotopy-check", parents=[common], help="exact homotopy identities and decay buckets")
    p = sub.add_parser("lafforgue", parents=[common], help="Lafforgue operator defect and commutators")
    _window_flags(p)
    p = sub.add_parser("ks", parents=[common], help="Kasparov-Skandalis operator checks and Schatten audit")
    _window_flags(p)
    p.add_argument("--ks-windows", help="comma list of window radii for the Schatten audit")
    p = sub.add_parser("schatten", parents=[common], help="singular values and Schatten norms of a triplet file")
    p.add_argument("triplets", help="file of 'row col value' lines")
    p.add_argument("--p-grid")
    p = sub.add_parser("run", parents=[common], help="run verification suites")
    _window_flags(p)
    p.add_argument("--suite", help="comma list of " + ",".join(harness.SUITE_ORDER))
    p.add_argument("--measured", action="store_true", help="include measured profiles")
    p = sub.add_parser("emit-plots", parents=[common], help="CSV and SVG charts from a report.json")
    p.add_argument("report")
    return parser


def resolve_config(args):
    cfg = harness.load_config(args.config) if _flag(args, "config") else ExperimentConfig()
    for flag, name in {**COMMON, **WINDOW}.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "suite", None) is not None:
        cfg.suites = args.suite
    if getattr(args, "measured", False):
        cfg.measured = True
    return cfg


def _emit(args, report, lines):
    if _flag(args, "out_dir"):
        harness.write_report(report, _flag(args, "out_dir"))
    if _flag(args, "json"):
        sys.stdout.write(harness.dumps(report))
    else:
        for line in lines:
            print(line)


def _suite_lines(report):
    lines = [f"override: {o}" for o in report.get("overrides", [])]
    for name, res in report["suites"].items():
        for check, v in res["exact"].items():
            status = "PASS" if v.get("pass") else "FAIL"
            if "failures" in v:
                detail = f"{v['failures']}/{v['total']} failures"
            else:
                detail = v.get("message") or f"value={v.get('value')}"
            lines.append(f"{status} {name}.{check} ({detail})")
    lines.append(f"verdict: {report['verdict']}")
    return lines


def _run(args, cfg, suites, measured=False):
    cfg = dataclasses.replace(cfg, suites=suites, measured=measured or cfg.measured)
    report, code = harness.run_suite(cfg)
    return report, code


def cmd_ball(args, cfg):
    report, code = _run(args, cfg, "group")
    m = report["suites"]["group"]["measured"]
    _emit(args, report, [f"{cfg.group} radius {cfg.radius}: {m['vertices']} vertices",
                         "sphere sizes: " + " ".join(map(str, m["sphere_sizes"]))])
    if _flag(args, "out_dir"):
        ball = harness.Context(cfg).ball
        write_csv(os.path.join(_flag(args, "out_dir"), "ball.csv"), ["index", "word", "length"],
                  [(i, ball.name(i), int(ball.lengths[i])) for i in range(ball.size)])
    return code


def cmd_audit_delta(args, cfg):
    report, code = _run(args, cfg, "group")
    m = report["suites"]["group"]["measured"]
    _emit(args, report, [f"delta_thin = {m['delta_thin']} over {m['sample_count']} triangles"
                         f" ({'exhaustive' if m['exhaustive'] else 'sampled'})",
                         f"delta_config = {m['delta_config_audit']}"])
    return code


def cmd_bicombing(args, cfg):
    report, code = _run(args, cfg, "bicombing")
    m = report["suites"]["bicombing"]["measured"]
    _emit(args, report, _suite_lines(report) + [f"lambda1_hat = {m['lambda1_hat']}  C1_hat = {m['C1_hat']}"
                                                f"  ({m['note']})"])
    return code


def cmd_homotopy_check(args, cfg):
    report, code = _run(args, cfg, "chain,sigma,bicombing,homotopy")
    _emit(args, report, _suite_lines(report))
    return code


def cmd_lafforgue(args, cfg):
    report, code = _run(args, cfg, "lafforgue", measured=True)
    if "error" in report["suites"]["lafforgue"]["exact"]:
        _emit(args, report, _suite_lines(report))
        return code
    res = report["suites"]["lafforgue"]
    ex, m = res["exact"], res["measured"]
    report["summary"] = {"defect_rank": ex["defect_rank_one"]["value"], "defect_error": ex["defect_residual"]["value"],
                         "commutator_schatten": m.get("commutator_schatten", {})}
    lines = _suite_lines(report) + [f"t = {m['t']:.6g}, window {m['window']} wedges, rho decay: {m.get('rho_decay')}"]
    for g, table in m.get("commutator_schatten", {}).items():
        lines.append(f"[pi({g}), F] Schatten: " + ", ".join(f"p={p}: {v:.6g}" for p, v in table.items()))
    _emit(args, report, lines)
    return code


def cmd_ks(args, cfg):
    if _flag(args, "R") is not None:
        cfg.ks_R = args.R
    report, code = _run(args, cfg, "ks", measured=True)
    if "error" in report["suites"]["ks"]["exact"]:
        _emit(args, report, _suite_lines(report))
        return code
    res = report["suites"]["ks"]
    ex, m = res["exact"], res["measured"]
    report["summary"] = {"f2_defect_rank": m["f2_defect_rank"], "selfadjoint_error": ex["selfadjoint"]["value"],
                         "vflower_max_diam": m["vflower_max_diam"], "schatten": m.get("schatten", []),
                         "closed_form_p": m["closed_form_p"]}
    lines = _suite_lines(report) + [
        f"status {m['status']}, F^2 defect rank {m['f2_defect_rank']}, V diameter {m['vflower_max_diam']}",
        f"summability bound p* = {m['closed_form_p']:.7f}, stabilized at p = {m.get('stabilized_p')}",
    ]
    _emit(args, report, lines)
    return code


def cmd_schatten(args, cfg):
    from gamma_forge import spectral as sp

    try:
        a = sp.read_triplets(args.triplets)
    except (OSError, ValueError, sp.SpectralError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    spec = sp.singular_values(a, tol=cfg.tolerance)
    rows = []
    for p in cfg.p_values():
        val, err = sp.schatten(a, p, spectrum=spec)
        rows.append({"p": p, "value": val, "trace_cross_check": err})
    report = {"input": args.triplets, "shape": list(a.shape), "method": spec.method, "rank": spec.rank(),
              "norm": spec.norm(), "residual": spec.residual, "schatten": rows,
              "singular_values": [float(v) for v in spec.values]}
    if _flag(args, "out_dir"):
        os.makedirs(_flag(args, "out_dir"), exist_ok=True)
        sp.write_spectrum_csv(os.path.join(_flag(args, "out_dir"), "spectrum.csv"), {0: spec})
    if _flag(args, "json"):
        sys.stdout.write(harness.dumps(report))
    else:
        print(f"shape {a.shape[0]}x{a.shape[1]}, rank {report['rank']}, norm {report['norm']:.6g} ({spec.method})")
        for r in rows:
            print(f"p={r['p']}: {r['value']:.10g}")
    return 0


def cmd_run(args, cfg):
    report, code = harness.run_suite(cfg)
    _emit(args, report, _suite_lines(report))
    return code


def cmd_emit_plots(args, cfg):
    from gamma_forge.plots import emit_plots

    out = _flag(args, "out_dir") or os.path.dirname(os.path.abspath(args.report))
    for path in emit_plots(args.report, out):
        print(path)
    return 0


COMMANDS = {
    "ball": cmd_ball, "audit-delta": cmd_audit_delta, "bicombing": cmd_bicombing,
    "homotopy-check": cmd_homotopy_check, "lafforgue": cmd_lafforgue, "ks": cmd_ks,
    "schatten": cmd_schatten, "run": cmd_run, "emit-plots": cmd_emit_plots,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args).validate()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
