"""
raresim command line.

  raresim run             IPS-FAS + Monte Carlo sweep over μ_r
  raresim mc              Monte Carlo baseline only
  raresim ttc             TTC verdicts for two trajectory CSV files
  raresim oracle          estimators against toy systems with exact answers
  raresim print-defaults  annotated default configuration
"""
import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from raresim.config import ConfigError, RareSimConfig, get_config, load_config, render_defaults

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config.toml (default: search path)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--trials", type=int, help="independent IPS-FAS trials per μ_r")
    common.add_argument("--particles", type=int, help="particles per level (N_P)")
    common.add_argument("--format", choices=("csv", "json", "all"), help="output format")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="raresim", description="Rare-event estimation for SHS")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="IPS-FAS and Monte Carlo over the μ_r sweep")
    sub.add_parser("mc", parents=[common], help="Monte Carlo baseline over the μ_r sweep")
    sub.add_parser("oracle", parents=[common], help="toy oracle suite")
    sub.add_parser("print-defaults", parents=[common], help="print annotated default config")

    ttc = sub.add_parser("ttc", parents=[common], help="TTC for two trace files")
    ttc.add_argument("sub_trace", type=Path, help="CSV with t,x,y[,vx,vy,ax,ay] of the subject")
    ttc.add_argument("col_trace", type=Path, help="CSV of the other vehicle")
    ttc.add_argument("--order", type=int, default=2, help="motion order k")
    ttc.add_argument("--policy", choices=("min_positive", "literal"), default="min_positive")
    ttc.add_argument("--same-lane", action="store_true", help="vehicles share a lane")
    ttc.add_argument("--length", type=float, default=None, help="vehicle length (m)")
    return parser


def _resolve_config(args: argparse.Namespace) -> RareSimConfig:
    cfg = load_config(args.config) if args.config else get_config()
    est, out = cfg.estimator, cfg.output
    if args.seed is not None:
        est = replace(est, seed=args.seed)
    if args.trials is not None:
        est = replace(est, trials=args.trials)
    if args.particles is not None:
        est = replace(est, particles=args.particles)
    if args.out is not None:
        out = replace(out, dir=str(args.out))
    if args.format is not None:
        out = replace(out, format=args.format)
    return replace(cfg, estimator=est, output=out).validate()


def _cmd_sweep(cfg: RareSimConfig, methods: tuple) -> int:
    from raresim.experiment import emit_results, format_table, run_sweep

    out_dir = Path(cfg.output.dir)
    table = run_sweep(cfg, methods=methods, partial_path=out_dir / "partial_results.json")
    emit_results(table, out_dir, cfg.output.format)
    print(format_table(table))
    return EXIT_OK


def _cmd_oracle(cfg: RareSimConfig) -> int:
    from core.state import save_state
    from raresim.oracle import toy_oracle_suite

    cases = toy_oracle_suite(cfg.estimator.seed, trials=cfg.estimator.trials)
    save_state(Path(cfg.output.dir) / "oracle.json", {"cases": [c.to_dict() for c in cases]})
    for c in cases:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<28} {c.method:<4} "
              f"exact={c.exact:.6g}  estimate={c.estimate:.6g}")
    return EXIT_OK if all(c.passed for c in cases) else EXIT_FAIL


def _read_trace(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows or not {"t", "x", "y"} <= set(rows[0]):
        raise ValueError(f"{path}: need columns t, x, y and at least one row")
    return rows


def _cmd_ttc(cfg: RareSimConfig, args: argparse.Namespace) -> int:
    from raresim.ttc import TtcPolicy, ttc_trace

    length = args.length if args.length is not None else cfg.vehicle.length
    rows = ttc_trace(_read_trace(args.sub_trace), _read_trace(args.col_trace),
                     same_lane=args.same_lane, sub_length=length, col_length=length,
                     order=args.order, policy=TtcPolicy(args.policy),
                     rear_end_angle_deg=cfg.scenario.rear_end_angle_deg)
    fields = ["t", "conflict", "ttc", "cx", "cy"]
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "ttc.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields)
            w.writeheader()
            w.writerows(rows)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')

    if args.command == "print-defaults":
        print(render_defaults())
        return EXIT_OK

    try:
        cfg = _resolve_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "run":
            return _cmd_sweep(cfg, cfg.sweep.methods)
        if args.command == "mc":
            return _cmd_sweep(cfg, ("mc",))
        if args.command == "oracle":
            return _cmd_oracle(cfg)
        return _cmd_ttc(cfg, args)
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
