"""Command-line interface.

Exit codes: 0 when every enabled check passed, 1 when a check failed,
2 for usage or configuration errors.
"""

import argparse
import dataclasses
import json
import logging
import sys

from .config import (
    ConfigError,
    assumption_flags,
    config_from_dict,
    expand_sweep,
    load_config,
    load_preset,
    resolve_config,
)
from .experiment import lemma_report_document, run_experiment, sample_instance, sweep, write_csv
from .model import Activation
from .plot import emit_plot
from .training import BreakpointProximityError, gradient_oracle_error

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
GRAD_CHECK_TOL = 1e-6

log = logging.getLogger("memlab")


def _report_assumptions(cfg):
    flags = assumption_flags(cfg)
    for name, ok in flags.items():
        if not ok:
            print(f"warning: size assumption {name} violated at d={cfg.d}, q={cfg.q}, m={cfg.m}",
                  file=sys.stderr)
    return flags


def _source(p, what):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help=f"{what} JSON file")
    g.add_argument("--preset", help="name of a bundled preset, e.g. default or heavy")


def _load(args):
    cfg = load_config(args.config) if args.config else config_from_dict(load_preset(args.preset))
    if getattr(args, "allow_invalid_activation", False):
        cfg = dataclasses.replace(cfg, allow_invalid_activation=True)
    return resolve_config(cfg)


def cmd_run(args):
    cfg = _load(args)
    _report_assumptions(cfg)
    result = run_experiment(cfg, threads=args.threads, timing=not args.no_timing)
    with open(args.out, "w", newline="") as fh:
        write_csv(result.rows, fh)
    if args.json_report:
        with open(args.json_report, "w") as fh:
            json.dump(lemma_report_document(result), fh, indent=2)
    failed = [r for r in result.rows if r.error or not r.memorization_rate == 1.0]
    for r in result.rows:
        if r.error:
            status = f"error: {r.error}"
        else:
            status = f"memorization_rate={r.memorization_rate:.4f} min_margin={r.min_margin:.4f}"
        print(f"replicate {r.replicate}: {status}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_sweep(args):
    if args.preset:
        spec = load_preset(args.preset)
    else:
        try:
            with open(args.config) as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read sweep {args.config}: {exc}") from exc
    grid = expand_sweep(spec)
    with open(args.out, "w", newline="") as fh:
        rows = list(sweep(grid, threads=args.threads, timing=not args.no_timing))
        write_csv(rows, fh)
    print(f"{len(rows)} rows written to {args.out}")
    return EXIT_FAIL if any(r.error for r in rows) else EXIT_OK


def cmd_check_lemmas(args):
    cfg = _load(args)
    _report_assumptions(cfg)
    result = run_experiment(cfg, threads=args.threads)
    doc = lemma_report_document(result)
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
    for rep in doc["replicates"]:
        if rep["error"]:
            print(f"replicate {rep['replicate']}: error: {rep['error']}")
            continue
        bad = [k for k, ok in rep["report"]["flags"].items() if not ok]
        verdict = "all checks passed" if not bad else "FAILED " + ", ".join(bad)
        print(f"replicate {rep['replicate']}: {verdict}")
    return EXIT_OK if doc["passed"] else EXIT_FAIL


def cmd_grad_check(args):
    net, data = sample_instance(
        args.seed, 0, args.d, args.q, args.m, Activation("smoothed_abs", args.epsilon)
    )
    try:
        err = gradient_oracle_error(net, data, args.h)
    except BreakpointProximityError as exc:
        print(f"grad-check: {exc}", file=sys.stderr)
        return EXIT_FAIL
    ok = err <= GRAD_CHECK_TOL
    print(f"grad-check d={args.d} q={args.q} m={args.m} epsilon={args.epsilon} h={args.h}: "
          f"max relative error {err:.3e} ({'PASS' if ok else 'FAIL'}, tol {GRAD_CHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_plot(args):
    emit_plot(args.input, args.x, args.y, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="memlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config, write per-replicate CSV")
    _source(p, "experiment config")
    p.add_argument("--out", required=True)
    p.add_argument("--json-report")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--allow-invalid-activation", action="store_true")
    p.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0 for byte-stable output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid of configs into one CSV")
    _source(p, "sweep")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-lemmas", help="write the JSON lemma report for a config")
    _source(p, "experiment config")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--allow-invalid-activation", action="store_true")
    p.set_defaults(func=cmd_check_lemmas)

    p = sub.add_parser("grad-check", help="closed-form gradient against finite differences")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--q", type=int, default=4)
    p.add_argument("--m", type=int, default=6)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("plot", help="SVG scatter of two CSV columns")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"memlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
