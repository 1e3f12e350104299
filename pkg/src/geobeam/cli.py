"""Command line entry point: ``geobeam <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geobeam", description="Tube covers, looping partitions and averaging bounds.")
    sub = p.add_subparsers(dest="command", required=True)
    for stage in harness.STAGES + ("run",):
        s = sub.add_parser(stage, help=f"run the pipeline through '{stage}'" if stage != "run" else "run every stage")
        s.add_argument("--config", required=True, help="scenario YAML path or bundled scenario name")
        s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        s.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        s.add_argument("--threads", type=int, default=1, help="worker threads for orbit scans")
    v = sub.add_parser("verify", help="run an invariant battery")
    v.add_argument("suite", help=f"one of {', '.join(harness.SUITES)}")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--threads", type=int, default=1, help="accepted for uniformity; batteries run serially")
    v.add_argument("--out", default=None, help="write the summary as JSON here")
    sub.add_parser("list", help="list bundled scenarios")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        if args.command == "list":
            print("\n".join(harness.bundled_scenarios()))
            return 0
        if args.command == "verify":
            if args.suite not in harness.SUITES:
                parser.print_usage(sys.stderr)
                print(f"geobeam: unknown suite {args.suite!r}; choose from {', '.join(harness.SUITES)}", file=sys.stderr)
                return 2
            res = harness.verify(args.suite, seed=args.seed)
            for name, (ok, detail) in res["checks"].items():
                print(f"{'PASS' if ok else 'FAIL'} {args.suite}.{name} {detail}")
            if args.out:
                with open(args.out, "w") as fh:
                    json.dump(res, fh, indent=1, default=str)
            return 0 if res["passed"] else 1
        if args.threads < 1:
            raise harness.ConfigError("--threads must be at least 1")
        sc = harness.Scenario.load(args.config).with_overrides(seed=args.seed, out=args.out)
        upto = "spectrum" if args.command == "run" else args.command
        rep = harness.run(sc, upto=upto, threads=args.threads)
        for name, ok in rep.invariants.items():
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        for path in rep.artifacts:
            print(f"wrote {path}")
        print(f"scenario_hash={rep.scenario_hash}")
        return 1 if rep.failed else 0
    except Exception as e:  # noqa: BLE001 - mapped to exit codes
        print(f"geobeam: {type(e).__name__}: {e}", file=sys.stderr)
        return harness.exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
