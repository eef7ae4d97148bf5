"""``safecopter`` command line: ``run``, ``compare`` and ``check``."""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema

from safecopter import settings
from safecopter.barriers import BarrierSnapshot
from safecopter.checks import run_suites
from safecopter.config import load_scenario
from safecopter.exceptions import (
    ConfigurationError,
    IntegrationDiverged,
    SingularThrust,
)
from safecopter.simulation import run
from safecopter.utils import import_string

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNSAFE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INVALID_OUTPUT = 4


def output_backend():
    return import_string(settings.OUTPUT_BACKEND)()


def _scenario(opts):
    return load_scenario(
        opts.config,
        duration=opts.duration,
        safety_filter=False if opts.no_safety_filter else None,
        seed=opts.seed,
    )


def cmd_run(opts):
    scenario = _scenario(opts)
    records, report = run(scenario)
    backend = output_backend()
    out_dir = Path(opts.out_dir)
    backend.trajectory(records, out_dir / "trajectory.csv")
    backend.report(report, out_dir / "report.json")
    if scenario.safety_filter and not report.safe:
        print(f"safety violated under the filter: {report.violations}", file=sys.stderr)
        return EXIT_UNSAFE
    return EXIT_OK


def compare_summary(safe_report, nominal_report):
    """Both reports plus per-family minimum deltas and first violation times."""
    deltas = {}
    for name in BarrierSnapshot.names():
        safe_min = safe_report.minima[name]
        nominal_min = nominal_report.minima[name]
        deltas[name] = (
            None if safe_min is None or nominal_min is None else safe_min - nominal_min
        )
    return {
        "safe": safe_report.to_dict(),
        "nominal": nominal_report.to_dict(),
        "min_h_delta": deltas,
        "first_violation": {
            label: {
                name: report.first_violation(name) for name in BarrierSnapshot.FAMILIES
            }
            for label, report in (("safe", safe_report), ("nominal", nominal_report))
        },
    }


def cmd_compare(opts):
    safe = _scenario(opts).replace(safety_filter=True)
    nominal = safe.replace(safety_filter=False, name=f"{safe.name}-nominal")

    with ThreadPoolExecutor(max_workers=2) as pool:
        safe_future = pool.submit(run, safe)
        nominal_future = pool.submit(run, nominal)
        safe_records, safe_report = safe_future.result()
        nominal_records, nominal_report = nominal_future.result()

    backend = output_backend()
    out_dir = Path(opts.out_dir)
    backend.trajectory(safe_records, out_dir / "safe" / "trajectory.csv")
    backend.trajectory(nominal_records, out_dir / "nominal" / "trajectory.csv")
    backend.compare(compare_summary(safe_report, nominal_report), out_dir / "compare.json")
    if not safe_report.safe:
        print(f"safety violated under the filter: {safe_report.violations}", file=sys.stderr)
        return EXIT_UNSAFE
    return EXIT_OK


def cmd_check(opts):
    scenario = _scenario(opts)
    seed = 0 if opts.seed is None else opts.seed
    results = run_suites(scenario, seed=seed, invariance=opts.invariance)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        line = f"{status} {result.name:<20} worst residual {result.worst_residual:.3e}"
        if result.detail:
            line += f"  ({result.detail})"
        print(line)
    return EXIT_OK if all(result.passed for result in results) else EXIT_UNSAFE


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "check": cmd_check,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="safecopter",
        description="CBF quadratic-program safety filter and simulator for multicopters.",
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "simulate a scenario and write trajectory.csv and report.json"),
        ("compare", "simulate with and without the safety filter and write compare.json"),
        ("check", "run the derivative, affinity and QP property suites"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument(
            "--config",
            type=Path,
            default=settings.DEFAULT_SCENARIO,
            help="scenario YAML file (default: the packaged circle_geofence scenario)",
        )
        sub.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
        sub.add_argument("--duration", type=float, default=None, help="override duration [s]")
        sub.add_argument("--seed", type=int, default=None, help="random seed")
        sub.add_argument(
            "--no-safety-filter",
            action="store_true",
            help="fly the nominal controller alone",
        )
        if name == "check":
            sub.add_argument(
                "--invariance",
                action="store_true",
                help="also run the closed-loop forward-invariance suite (slow)",
            )
    return parser


def main(argv=None):
    opts = build_parser().parse_args(argv)
    try:
        logging.basicConfig(
            level=str(opts.log_level).upper(),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[opts.command](opts)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularThrust, IntegrationDiverged) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"cannot write output: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except jsonschema.ValidationError as err:
        print(f"invalid output: {err.message}", file=sys.stderr)
        return EXIT_INVALID_OUTPUT
    except ValueError as err:
        print(f"invalid value: {err}", file=sys.stderr)
        return EXIT_CONFIG
