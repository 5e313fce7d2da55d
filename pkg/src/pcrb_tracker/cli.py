"""Command-line interface: simulate | sweep | selftest."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .controller import BENCHMARK, PROPOSED, ControlError
from .harness import resolve_jobs, selftest_checks, simulate_to_dir, sweep_to_dir
from .scenario import Scenario, ScenarioError, load_scenario


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="scenario config file (YAML)")
    parser.add_argument(
        "--policy",
        choices=[PROPOSED, BENCHMARK, "both"],
        default="both",
        help="which controller(s) to run",
    )
    parser.add_argument("--trials", type=int, default=1, help="number of seeded trials")
    parser.add_argument("--seed", type=int, default=None, help="base seed (trial k adds k)")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument(
        "--jobs", type=int, default=1, help="worker processes (PCRB_TRACKER_JOBS overrides)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcrb-tracker",
        description="Energy-aware radar target tracking experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded episodes and emit CSV logs + summary")
    _add_common(sim)

    swp = sub.add_parser("sweep", help="re-run the batch across values of one parameter")
    _add_common(swp)
    swp.add_argument("--param", required=True, help="scenario parameter to sweep")
    swp.add_argument(
        "--values", required=True, help="comma-separated numeric values, e.g. 1600,1800"
    )

    slf = sub.add_parser("selftest", help="run the oracle cross-check suite")
    slf.add_argument(
        "--inject-fault",
        choices=["pcrb-bearing"],
        default=None,
        help="deliberately corrupt one coefficient to prove the checks catch it",
    )
    return parser


def _load_config(path: Path | None) -> Scenario:
    if path is None:
        return Scenario()
    return load_scenario(Path(path).read_text())


def _policies(flag: str) -> tuple[str, ...]:
    return (PROPOSED, BENCHMARK) if flag == "both" else (flag,)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "selftest":
            checks = selftest_checks(inject_fault=args.inject_fault)
            for c in checks:
                print(f"check {c.name}: {c.status}" + (f" ({c.detail})" if c.detail else ""))
            failed = [c for c in checks if c.status == "FAIL"]
            print(f"selftest: {len(checks) - len(failed)}/{len(checks)} passed")
            return 1 if failed else 0

        scenario = _load_config(args.config)
        seed = args.seed if args.seed is not None else scenario.estimator.seed
        jobs = resolve_jobs(args.jobs)
        if args.trials < 1:
            parser.error("--trials must be at least 1")

        if args.command == "simulate":
            summary = simulate_to_dir(
                scenario, _policies(args.policy), args.trials, seed, args.out, jobs=jobs
            )
            print(summary, end="")
            return 0

        # sweep
        try:
            values = [float(v) for v in args.values.split(",") if v.strip() != ""]
        except ValueError:
            parser.error(f"--values must be comma-separated numbers, got {args.values!r}")
        if not values:
            parser.error("--values must contain at least one number")
        summary = sweep_to_dir(
            scenario, args.param, values, _policies(args.policy),
            args.trials, seed, args.out, jobs=jobs,
        )
        print(summary, end="")
        return 0
    except (ScenarioError, ControlError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
