"""Command-line entry point: ``branchmax <command> --config FILE``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment, io
from .asymptotics import predict
from .config import ExperimentConfig, load, validate
from .errors import BranchmaxError
from .offspring import make_canonical

log = logging.getLogger("branchmax")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else validate({}, "<defaults>")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output"] = args.out
    return cfg.with_overrides(**overrides) if overrides else cfg


def _pred_override(args, cfg):
    if getattr(args, "predict_beta", None) is None:
        return None
    law = make_canonical(args.predict_beta, min(cfg.law.c, 1.0 / args.predict_beta))
    return predict(cfg.model, law)


def _summary(d: dict) -> str:
    return json.dumps(io._jsonable(d), indent=2, sort_keys=True)


def cmd_simulate(args, cfg):
    res = experiment.simulate(cfg, args.threads)
    m = res["meta"]
    print(f"{cfg.runs} runs, censored fraction {m['censored_fraction']:.3g}, "
          f"{m['wall_time_s']:.1f}s -> {cfg.output}")
    return EXIT_OK


def cmd_solve(args, cfg):
    res = experiment.solve_step(cfg)
    m = res["meta"]
    print(f"{m['iterations']} iterations, residual {m['residual']:.3g} (tol {m['tol']:.3g}), "
          f"remainder bounds {'ok' if m['remainder_check']['pass'] else 'VIOLATED'} -> {cfg.output}")
    return EXIT_OK


def cmd_predict(args, cfg):
    pred = _pred_override(args, cfg)
    if pred is None:
        pred = experiment.predict_step(cfg)["prediction"]
    print(_summary(pred.to_dict()))
    return EXIT_OK


def cmd_fit(args, cfg):
    fits = experiment.fit_step(cfg, args.routes)
    for name in ("mc", "solver"):
        if name in fits:
            f = fits[name]["fit"]
            print(f"{name}: {_summary(f.to_dict())}")
    if "extinction" in fits:
        print(f"extinction slope {fits['extinction']['slope']:.4g}")
    return EXIT_OK


def cmd_verify(args, cfg):
    report = experiment.verify(cfg, inline=args.inline, threads=args.threads,
                               pred=_pred_override(args, cfg))
    for name, rep in report["routes"].items():
        for check, c in rep["checks"].items():
            print(f"{name:7s} {check:9s} {c['status']}"
                  + (f"  fitted {c['fitted']:.4g} vs {c['predicted']:.4g}" if "predicted" in c else ""))
    if "extinction" in report:
        e = report["extinction"]
        print(f"extinction slope {e['slope']:.4g} vs {e['predicted']:.4g}  {'pass' if e['pass'] else 'fail'}")
    if "cross_check" in report:
        cc = report["cross_check"]
        print(f"cross-check {cc['points'] - cc['failures']}/{cc['points']} points  "
              f"{'pass' if cc['pass'] else 'fail'}")
    print("PASS" if report["pass"] else "FAIL")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_report(args, cfg):
    from . import plotting

    written = []
    pred = predict(cfg.model, cfg.law).to_dict()
    mc = solver = None
    routes = cfg.data["fit"]["routes"]
    if "mc" in routes:
        mc = experiment._load_tail(cfg)
    if "solver" in routes:
        solver, cols, _ = experiment._load_solution(cfg)
    if args.no_figures or not plotting.available():
        if not args.no_figures:
            print("matplotlib not importable; CSV and JSON artifacts only", file=sys.stderr)
        print(f"artifacts in {cfg.output}")
        return EXIT_OK
    fig_dir = cfg.output / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written.append(plotting.tail_figure(fig_dir / "tail.png", mc, solver, pred, title=pred["regime"]))
    if mc is not None:
        ew = cfg.data["fit"]["extinction_window"]
        written.append(plotting.extinction_figure(fig_dir / "extinction.png",
                                                  experiment._load_extinction(cfg), cfg.law.beta, ew))
    if solver is not None:
        written.append(plotting.remainder_figure(fig_dir / "remainder.png", cols["x"], cols["u"],
                                                 cols["R"], cols["P_sup"]))
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "run the branching simulation and write outcome and tail CSVs"),
    "solve": (cmd_solve, "solve the fixed-point equation for u(x) = P(M >= x)"),
    "predict": (cmd_predict, "print and write the theoretical tail"),
    "fit": (cmd_fit, "fit tails to existing simulate/solve artifacts"),
    "verify": (cmd_verify, "compare fits with theory; exit code 1 on failure"),
    "report": (cmd_report, "render figures from existing artifacts (needs matplotlib)"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML experiment config (defaults if omitted)")
    common.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    common.add_argument("--threads", type=int, metavar="N",
                        help="simulation threads (default: $BRANCHMAX_THREADS, else all cores)")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="branchmax", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}
    for name, (_, helptext) in COMMANDS.items():
        subs[name] = sub.add_parser(name, parents=[common], help=helptext, description=helptext)
    for name in ("fit",):
        subs[name].add_argument("--routes", nargs="+", choices=["mc", "solver"])
    for name in ("predict", "verify"):
        subs[name].add_argument("--predict-beta", type=float, metavar="B",
                                help="predict with offspring index B instead of the configured one")
    subs["verify"].add_argument("--inline", action="store_true",
                                help="run simulate/solve first when their artifacts are missing")
    subs["report"].add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = _config(args)
        func = COMMANDS[args.command][0]
        return func(args, cfg)
    except BranchmaxError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
