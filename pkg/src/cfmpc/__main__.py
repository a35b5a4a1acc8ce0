import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv
from halo import Halo

from cfmpc.dynamics import RobotSpec
from cfmpc.errors import CfmpcError, ConfigError
from cfmpc.sim import format_bench, load_any, load_scenario, run_bench, run_scenario, solve_once
from cfmpc.utils import pp

_ = load_dotenv()

logger = logging.getLogger("cfmpc")

EXIT_THRESHOLDS_FAILED = 1
EXIT_TESTS_FAILED = 5


def simulate(args: argparse.Namespace) -> int:
    config = load_scenario(args.config, args.override)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    mode = "deterministic" if args.deterministic else "real-time"
    with Halo(f"Simulating {config.name} ({mode})"):
        report = run_scenario(config, source=args.config, out_dir=args.out, deterministic=args.deterministic)
    print(f"{'PASS' if report.passed else 'FAIL'} {report.name}: {report.metrics_path} (trace sha256 {report.digest})")
    for result in report.report["thresholds"]:
        print(f"  {'✅' if result['passed'] else '❌'} {result['name']} = {result['value']}")
    return 0 if report.passed else EXIT_THRESHOLDS_FAILED


def solve(args: argparse.Namespace) -> int:
    document = load_any(args.config, args.override)
    if isinstance(document, RobotSpec):
        raise ConfigError(f"{args.config} holds a '{document.kind}' document, which defines no OCP")
    with Halo(f"Solving {document.name}"):
        report = solve_once(document, source=args.config)
    pp(report)
    return 0


def bench(args: argparse.Namespace) -> int:
    config = load_scenario(args.config, args.override)
    with Halo(f"Benchmarking {config.name}"):
        rows = run_bench(config, source=args.config, repeats=args.repeats)
    print(format_bench(rows))
    return 0


def check(args: argparse.Namespace) -> int:
    import pytest

    options = ["-q", "-m", "not slow"] if not args.slow else ["-q"]
    test_dir = Path(__file__).resolve().parents[2] / "test"
    if test_dir.is_dir():
        options.append(str(test_dir))
    return 0 if pytest.main(options) == 0 else EXIT_TESTS_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfmpc", description="Contact-feedback MPC: closed-loop simulation, solver runs and benchmarks."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def with_config(name: str, help: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help)
        _ = sub.add_argument("config", type=Path, help="YAML document to load.")
        _ = sub.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override a config value, e.g. cost.c_p=200 or mpc.contact_feedback=false.",
        )
        return sub

    sub = with_config("simulate", "Run a scenario in closed loop and write the trace and metrics.")
    _ = sub.add_argument("--seed", type=int, default=None, help="Override the scenario seed.")
    _ = sub.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="Single-threaded fixed-ratio loop (default); --no-deterministic runs the controller in a thread.",
    )
    _ = sub.add_argument("--out", type=Path, default=None, help="Output directory (default: $CFMPC_OUT_DIR or runs/).")
    sub.set_defaults(handler=simulate)

    sub = with_config("solve", "Single cold OCP solve followed by a warm-started one; prints the stats.")
    sub.set_defaults(handler=solve)

    sub = with_config("bench", "Solve rates with 0, 1 and 2 contacts.")
    _ = sub.add_argument("--repeats", type=int, default=200, help="Solves per contact count.")
    sub.set_defaults(handler=bench)

    sub = subparsers.add_parser("check", help="Run the test batteries.")
    _ = sub.add_argument("--slow", action="store_true", help="Include the closed-loop scenario runs.")
    sub.set_defaults(handler=check)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.getenv("CFMPC_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CfmpcError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
