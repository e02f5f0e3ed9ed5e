#!/usr/bin/env python3

import sys
import argparse
import logging
import os

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from logic.cli_helper import SimulationCLIHelper
from logic.results_writer import dump_json


def _add_input_arguments(parser, scenario=True):
    parser.add_argument('--network', required=True, help='Network JSON file')
    if scenario:
        parser.add_argument('--scenario', help='Scenario JSON file merged over the network')


def _add_numeric_arguments(parser):
    parser.add_argument('--dt', type=float, help='Explicit time step (s)')
    parser.add_argument('--dx', type=float, help='Target cell size (m)')
    parser.add_argument('--eos', choices=['ideal', 'linear-z'], help='Equation of state mode')
    parser.add_argument('--monitor', choices=['on', 'off'], help='Nodal monitoring policies')
    parser.add_argument('--output-every', type=int, help='Record every k-th step')
    parser.add_argument('--permissive-reversals', action='store_true', default=None,
                        help='Warn instead of failing when a boundary flow reverses')
    parser.add_argument('--unsafe-dt', action='store_true', default=None, help='Accept a dt above the CFL bound')
    parser.add_argument('--boundary-spacing', choices=['half-cell', 'full-cell'],
                        help='Distance between a node and the first cell center')
    parser.add_argument('--workers', type=int, help='Threads for per-pipe updates')
    parser.add_argument('--no-registry', action='store_true', help='Do not record the run in the database')


def _overrides(args):
    return {
        'dt': args.dt,
        'dx_target': args.dx,
        'eos': args.eos,
        'monitor': args.monitor,
        'output_every': args.output_every,
        'permissive_reversals': args.permissive_reversals,
        'allow_unsafe_dt': args.unsafe_dt,
        'boundary_spacing': args.boundary_spacing,
        'workers': args.workers
    }


def main():
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    parser = argparse.ArgumentParser(description='Gas Network Mixture Simulator CLI')
    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # Full transient run
    simulate_parser = subparsers.add_parser('simulate', help='Run a transient simulation and write CSV series')
    _add_input_arguments(simulate_parser)
    simulate_parser.add_argument('--out', help='Output directory for the run artifacts')
    simulate_parser.add_argument('--t-end', type=float, help='Simulated time span (s)')
    _add_numeric_arguments(simulate_parser)

    # Steady initialization and frozen hold
    steady_parser = subparsers.add_parser('steady-check', help='Check initial data and hold the steady state')
    _add_input_arguments(steady_parser)
    steady_parser.add_argument('--steps', type=int, default=1000, help='Number of frozen steps')
    steady_parser.add_argument('--tabulated', action='store_true',
                               help='Hold the tabulated profiles instead of the reconciled steady state')
    _add_numeric_arguments(steady_parser)

    # Grid refinement study
    converge_parser = subparsers.add_parser('converge', help='Self-refinement convergence study')
    _add_input_arguments(converge_parser)
    converge_parser.add_argument('--out', help='Directory for convergence.json')
    converge_parser.add_argument('--t-end', type=float, help='Simulated time span (s)')
    converge_parser.add_argument('--levels', type=int, default=3, help='Refinement levels')
    converge_parser.add_argument('--base-cells', type=int, default=50, help='Cells per pipe on the coarsest level')
    _add_numeric_arguments(converge_parser)

    # Diffusion comparison
    diffuse_parser = subparsers.add_parser('diffuse', help='Compare runs with and without diffusion')
    _add_input_arguments(diffuse_parser)
    diffuse_parser.add_argument('--out', help='Directory for diffusion.json')
    diffuse_parser.add_argument('--t-end', type=float, help='Simulated time span (s)')
    diffuse_parser.add_argument('--eps', type=float, nargs='+', default=[0.1], help='Diffusion coefficients (m^2/s)')
    _add_numeric_arguments(diffuse_parser)

    # File checks
    validate_parser = subparsers.add_parser('validate', help='Validate network and scenario files')
    _add_input_arguments(validate_parser)

    # Charts
    plot_parser = subparsers.add_parser('plot', help='Render SVG charts from a run directory')
    plot_parser.add_argument('csv_dir', help='Run directory with CSV series')
    plot_parser.add_argument('--out', help='Directory for the charts (defaults to the run directory)')

    # Registry listing
    subparsers.add_parser('runs', help='List recorded runs')

    args = parser.parse_args()

    if not args.command:
        parser.print_help()
        return

    cli_helper = SimulationCLIHelper(use_registry=not getattr(args, 'no_registry', False))

    if args.command == 'simulate':
        result = cli_helper.simulate(args.network, args.scenario, output_dir=args.out, t_end=args.t_end,
                                     **_overrides(args))

    elif args.command == 'steady-check':
        result = cli_helper.steady_check(args.network, args.scenario, steps=args.steps,
                                         reconcile=not args.tabulated, **_overrides(args))

    elif args.command == 'converge':
        result = cli_helper.converge(args.network, args.scenario, t_end=args.t_end, levels=args.levels,
                                     base_cells=args.base_cells, output_dir=args.out, **_overrides(args))

    elif args.command == 'diffuse':
        result = cli_helper.diffuse(args.network, args.scenario, t_end=args.t_end, eps_values=args.eps,
                                    output_dir=args.out, **_overrides(args))

    elif args.command == 'validate':
        result = cli_helper.validate(args.network, args.scenario)

    elif args.command == 'plot':
        result = cli_helper.plot(args.csv_dir, args.out)

    else:
        result = cli_helper.list_runs()

    print(result['message'])
    if not result['success']:
        if result.get('error'):
            print(dump_json(result['error']).decode('utf-8'))
        sys.exit(result['exit_code'])


if __name__ == '__main__':
    main()
