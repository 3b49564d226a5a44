"""Command line entry point: ``concavlab <command> --config <path>``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from . import harness
from .errors import AuditError, ConcavlabError, ConfigError, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4
COMMANDS = ("solve", "deficit", "envelope", "check", "sweep", "baselines")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="concavlab", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="experiment JSON document (not needed for baselines)")
    p.add_argument("--out", help="output directory (default: the config's 'output')")
    p.add_argument("--threads", type=int, default=1, help="sweep worker processes")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--theorem", default="auto", choices=("auto", "1", "2", "props", "remark"),
                   help="which audit 'check' runs")
    p.add_argument("--h", type=float, default=harness.BASELINE_H, help="grid spacing for baselines")
    return p


def _summary(obj) -> str:
    return json.dumps(harness._clean(obj), indent=2, sort_keys=True)


def _dispatch(args) -> int:
    if args.command == "baselines":
        rows = harness.run_baselines(args.out, h=args.h)
        print(harness.format_table(rows))
        return EXIT_OK if all(r["passed"] for r in rows) else EXIT_AUDIT
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    cfg = harness.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.output
    if args.command == "solve":
        print(_summary(harness.run_solve(cfg, out)))
    elif args.command == "deficit":
        print(_summary(harness.run_deficit(cfg, out)["report"]))
    elif args.command == "envelope":
        print(_summary(harness.run_envelope(cfg, out)["envelope"]))
    elif args.command == "check":
        res = harness.run_check(cfg, out, args.theorem)
        print(_summary(res.get("audit", res.get("propositions", res.get("witnesses")))))
        if res.get("audit", {}).get("status") == "inequality-failure":
            return EXIT_AUDIT
    elif args.command == "sweep":
        rep = harness.run_sweep(cfg, out, args.threads)
        print(harness.sweep_csv(rep), end="")
        print(f"fit: {rep.fit if rep.fit else rep.fit_error}")
        if rep.inequality_failures:
            return EXIT_AUDIT
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.simplefilter("default")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AuditError as exc:
        print(f"audit failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except ConcavlabError as exc:
        # remaining library errors are input problems (bad field files, degenerate data)
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
