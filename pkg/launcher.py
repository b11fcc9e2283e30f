"""
Command-line entry point for the DSM and feeder study.

    python launcher.py run --scenario data/ref30.json --out output/run
    python launcher.py sweep --scenario data/ref30.json --axis penalty_residential --values 0,5,10,20 --out output/sweep
    python launcher.py validate --scenario data/ref30.json
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import config
import utils
from data_loader import ScenarioFileError
from model import ValidationError
from runner import ScenarioOptions, load_scenario, run_scenario, sweep, write_results

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID_INPUT = 2


class UsageError(ValueError):
    """The command line itself is malformed."""

    field = None


class JsonErrorParser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = JsonErrorParser(
        prog='launcher.py',
        description='Day-ahead DSM scheduling with radial feeder load flow.')
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Library log level')
    parser.add_argument('--quiet', action='store_true', help='Suppress progress lines')
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='Run one scenario and write result files')
    run.add_argument('--scenario', default=str(config.REFERENCE_SCENARIO_PATH))
    run.add_argument('--out', required=True, help='Output directory')
    run.add_argument('--no-dsm', action='store_true', help='Keep every baseline schedule')
    run.add_argument('--no-pv', action='store_true', help='Disable all PV')
    run.add_argument('--pv-scale', type=float, default=1.0, help='PV penetration multiplier')
    run.add_argument('--participation', type=float, default=100.0, help='Residential participation in percent')
    run.add_argument('--penalty-res', type=float, default=None, help='Residential penalty price, cents/kWh')
    run.add_argument('--resistance-scale', type=float, default=1.0, help='Branch resistance multiplier')
    run.add_argument('--commercial-scale', type=float, default=1.0, help='Commercial load multiplier')
    run.add_argument('--no-commercial-pv', action='store_true', help='Disable PV at the commercial site')
    run.add_argument('--compare-no-pv', action='store_true',
                     help='Also solve a no-PV reference and report the loss reduction')

    sweep_parser = commands.add_parser('sweep', help='Run one scenario per value of an option')
    sweep_parser.add_argument('--scenario', default=str(config.REFERENCE_SCENARIO_PATH))
    sweep_parser.add_argument('--axis', required=True, help=f"One of: {', '.join(config.SWEEP_AXES)}")
    sweep_parser.add_argument('--values', required=True, help='Comma-separated values, e.g. 0,5,10,20')
    sweep_parser.add_argument('--out', required=True, help='Output directory')
    sweep_parser.add_argument('--compare-no-pv', action='store_true', help='Add a no-PV reference to every run')

    validate = commands.add_parser('validate', help='Load and validate a scenario file')
    validate.add_argument('--scenario', default=str(config.REFERENCE_SCENARIO_PATH))
    return parser


def options_from_args(args: argparse.Namespace) -> ScenarioOptions:
    """Run options from the run sub-command flags."""
    return ScenarioOptions(
        participation_pct=args.participation,
        pv_scale=args.pv_scale,
        dsm_enabled=not args.no_dsm,
        pv_enabled=not args.no_pv,
        penalty_residential=args.penalty_res,
        commercial_pv=not args.no_commercial_pv,
        commercial_load_scale=args.commercial_scale,
        resistance_scale=args.resistance_scale,
        compare_no_pv=args.compare_no_pv,
    )


def error_payload(error: Exception) -> dict:
    """JSON-ready description of a failure for stderr."""
    payload = {
        'error': type(error).__name__,
        'message': str(error),
        'entity': getattr(error, 'entity', None),
        'field': getattr(error, 'field', None),
    }
    for key in ('line', 'column', 'slot'):
        if getattr(error, key, None) is not None:
            payload[key] = getattr(error, key)
    return payload


def execute(args: argparse.Namespace) -> int:
    verbose = not args.quiet

    if args.command == 'validate':
        scenario = load_scenario(args.scenario, verbose=verbose)
        if verbose:
            print(f"✓ Scenario {scenario.name} is valid"
                  f"{' (synthesized)' if scenario.synthesized else ''}")
        return EXIT_OK

    if args.command == 'run':
        scenario = load_scenario(args.scenario, options_from_args(args), verbose=verbose)
        result = run_scenario(scenario, verbose=verbose)
        write_results(result, args.out, verbose=verbose)
        if verbose:
            m = result.metrics
            print(utils.create_summary_report({
                'pv_utilization_residential_pct': m.pv_utilization_pct.get('residential'),
                'pv_utilization_commercial_pct': m.pv_utilization_pct.get('commercial'),
                'cost_reduction_residential_pct': m.area_cost_reduction_pct.get('residential'),
                'cost_reduction_commercial_pct': m.area_cost_reduction_pct.get('commercial'),
                'daily_loss_kwh': m.daily_loss_kwh,
                'loss_reduction_pct': m.loss_reduction_pct,
                'loss_reduction_vs_no_pv_pct': m.loss_reduction_vs_no_pv_pct,
                'max_voltage_pu': m.max_voltage_pu,
                'min_voltage_pu': m.min_voltage_pu,
            }, title=f"Scenario {scenario.name}"))
        return EXIT_OK

    if args.command == 'sweep':
        try:
            values = utils.parse_value_list(args.values)
        except ValueError as e:
            raise ValidationError(f"--values: {e}", field='values')
        if args.axis not in config.SWEEP_AXES:
            raise ValidationError(f"--axis: unknown axis '{args.axis}'. Choose from {config.SWEEP_AXES}",
                                  field='axis')
        scenario = load_scenario(args.scenario, ScenarioOptions(compare_no_pv=args.compare_no_pv), verbose=verbose)
        results = sweep(scenario, args.axis, values, verbose=verbose)
        write_results(results, args.out, axis=args.axis, verbose=verbose)
        return EXIT_OK

    raise ValueError(f"Unknown command {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main launcher function."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(json.dumps(error_payload(e)), file=sys.stderr)
        return EXIT_INVALID_INPUT
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return execute(args)
    except (ValidationError, ScenarioFileError) as e:
        print(json.dumps(error_payload(e)), file=sys.stderr)
        return EXIT_INVALID_INPUT
    except KeyboardInterrupt:
        print("\n\nInterrupted.", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        print(json.dumps(error_payload(e)), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
