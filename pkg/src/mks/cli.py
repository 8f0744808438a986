"""Command-line entry points: run, verify, convergence, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import MksError


def _add_common(p):
    p.add_argument("--config", type=Path, required=True, help="experiment config file")
    p.add_argument("--seed", type=int, default=None, help="override base seed")
    p.add_argument("--paths", type=int, default=None, help="override path count")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: MKS_WORKERS or 1)")
    p.add_argument("--out", type=Path, default=None, help="override output directory")


def build_parser():
    ap = argparse.ArgumentParser(prog="mks",
                                 description="stochastic Maxwell-Kerr simulator")
    sub = ap.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="execute a Monte-Carlo experiment")
    _add_common(run_p)

    ver_p = sub.add_parser("verify", help="run the invariant suites")
    ver_p.add_argument("--level", choices=("fast", "full"), default="fast")
    ver_p.add_argument("--out", type=Path, default=None,
                       help="write the machine-readable report here (JSON)")

    conv_p = sub.add_parser("convergence", help="step-size or cutoff sweeps")
    _add_common(conv_p)
    conv_p.add_argument("--mode", choices=("dt", "galerkin"), default="dt")
    conv_p.add_argument("--dts", type=str, default="1/16 1/32 1/64",
                        help="space-separated dyadic step sizes (fractions ok)")
    conv_p.add_argument("--levels", type=str, default="1 2 3",
                        help="space-separated cutoff levels for galerkin mode")

    rep_p = sub.add_parser("report", help="re-aggregate series.csv into a summary")
    rep_p.add_argument("--out", type=Path, required=True,
                       help="experiment output directory")
    return ap


def _load_config(args):
    from .config import parse_config

    cfg = parse_config(args.config.read_text())
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.paths is not None:
        cfg.paths = args.paths
    if args.out is not None:
        cfg.out_dir = str(args.out)
    return cfg


def _parse_fraction(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except MksError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.verb == "run":
        from .harness import run_experiment

        cfg = _load_config(args)
        report, status = run_experiment(cfg, workers=args.workers)
        print(f"paths: {len(report.paths)}")
        print(f"E sup ||y||^2      = {report.sup_l2_squared.mean:.6g} "
              f"(+/- {report.sup_l2_squared.ci_half_width:.3g})")
        print(f"E int ||y||^{{q+2}} = {report.integral_power.mean:.6g} "
              f"(+/- {report.integral_power.ci_half_width:.3g})")
        print(f"E sup ||Lambda||^2 = {report.sup_lambda_squared.mean:.6g} "
              f"(+/- {report.sup_lambda_squared.ci_half_width:.3g})")
        print(f"events: {len(report.events)}")
        return status

    if args.verb == "verify":
        from .harness import verify_suite

        checks = verify_suite(args.level)
        failed = 0
        for c in checks:
            tag = "pass" if c["passed"] else "FAIL"
            print(f"[{tag}] {c['name']}: measured {c['measured']:.3e} "
                  f"(bound {c['bound']:.3e})")
            failed += 0 if c["passed"] else 1
        print(f"{len(checks) - failed}/{len(checks)} checks passed")
        if args.out is not None:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.write_text(json.dumps(checks, indent=2))
        return 0 if failed == 0 else 1

    if args.verb == "convergence":
        from .config import build_runtime
        from .diagnostics import galerkin_convergence, strong_convergence_order

        cfg = _load_config(args)
        model = build_runtime(cfg)
        seeds = [cfg.base_seed + p for p in range(cfg.paths)]
        if args.mode == "dt":
            dts = [_parse_fraction(x) for x in args.dts.split()]
            result = strong_convergence_order(model.spec, model.scheme,
                                              model.kernel, seeds, dts,
                                              horizon=model.horizon)
            for dt, err in result["table"]:
                print(f"dt={dt:.6g}  strong_error={err:.6e}")
            if result.get("exact"):
                print("errors identically zero (exact)")
            else:
                print(f"fitted slope: {result['slope']:.3f}")
        else:
            levels = [int(x) for x in args.levels.split()]
            result = galerkin_convergence(model.spec, model.scheme,
                                          model.kernel, levels, seeds,
                                          horizon=model.horizon)
            for row in result["rows"]:
                lo, hi = row["levels"]
                print(f"levels {lo}->{hi}: mean sup gap {row['mean_gap']:.6e}")
            print(f"decreasing: {result['decreasing']}")
        return 0

    if args.verb == "report":
        from .harness import reaggregate

        for key, val in reaggregate(args.out):
            print(f"{key} = {val}")
        return 0

    raise AssertionError(f"unhandled verb {args.verb!r}")


if __name__ == "__main__":
    raise SystemExit(main())
