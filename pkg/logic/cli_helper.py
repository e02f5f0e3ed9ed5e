import logging
import os
from typing import Any, Dict, Optional, Sequence, Tuple

from logic.errors import NetworkValidationError, SimulationError
from logic.network import load_network, load_scenario, validate
from logic.plotting import emit_plots
from logic.results_writer import ERROR_FILE, dump_json
from logic.simulation_runner import SimulationRunner
from models.database import DatabaseManager
from models.network import NetworkSpec, ScenarioSpec
from models.run_status import RunStatusHelper
from models.run_summary import RunSummaryHelper
from models.sim_config import SimConfig
from models.simulation_run import SimulationRunHelper

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def error_report(error: Exception) -> Dict[str, Any]:
    if isinstance(error, SimulationError):
        return error.to_dict()
    kind = 'missing-file' if isinstance(error, FileNotFoundError) else type(error).__name__
    return {'kind': kind, 'message': str(error), 'context': {}}


def exit_code_for(error: Exception) -> int:
    if isinstance(error, (NetworkValidationError, ValueError, FileNotFoundError)):
        return EXIT_VALIDATION
    return EXIT_RUNTIME


class SimulationCLIHelper:
    """Backs every CLI subcommand; each method returns a result dict instead of raising."""

    def __init__(self, use_registry: bool = True, show_progress: bool = True):
        self.use_registry = use_registry
        self.show_progress = show_progress

    def _load(self, network_path: str, scenario_path: Optional[str]) -> Tuple[NetworkSpec, Optional[ScenarioSpec]]:
        network = load_network(network_path)
        scenario = load_scenario(scenario_path) if scenario_path else None
        if scenario is not None:
            network = network.with_scenario(scenario)
        return network, scenario

    def _config(self, scenario: Optional[ScenarioSpec], overrides: Dict[str, Any]) -> SimConfig:
        config = SimConfig.from_env()
        if scenario is not None:
            config = config.with_scenario(scenario)
        return config.merged(**overrides)

    def _horizon(self, t_end: Optional[float], scenario: Optional[ScenarioSpec], network: NetworkSpec) -> float:
        for candidate in (t_end, scenario.t_end if scenario else None, network.horizon):
            if candidate is not None:
                if candidate <= 0:
                    raise ValueError(f"Simulated time must be positive, got {candidate}")
                return float(candidate)
        raise ValueError("No end time: pass --t-end or use a scenario or network with a horizon")

    def _output_dir(self, output_dir: Optional[str], config: SimConfig, network: NetworkSpec,
                    scenario: Optional[ScenarioSpec]) -> str:
        if output_dir:
            return output_dir
        name = f"{network.name}-{scenario.name}" if scenario else network.name
        return os.path.join(config.output_dir, name)

    def _runner(self, config: SimConfig) -> SimulationRunner:
        return SimulationRunner(config, use_registry=self.use_registry, show_progress=self.show_progress)

    def _failure(self, error: Exception, action: str, output_dir: Optional[str] = None) -> Dict[str, Any]:
        report = error_report(error)
        if isinstance(error, NetworkValidationError) and error.violations:
            lines = '\n'.join(f"  - [{v['code']}] {v['item']}: {v['message']}" for v in error.violations)
            message = f'{action} failed: {error.message}\n{lines}'
        else:
            message = f'{action} failed: {error}'
        if output_dir and os.path.isdir(output_dir):
            with open(os.path.join(output_dir, ERROR_FILE), 'wb') as handle:
                handle.write(dump_json(report))
        logger.error(message)
        return {
            'success': False,
            'message': message,
            'exit_code': exit_code_for(error),
            'error': report
        }

    def simulate(self, network_path: str, scenario_path: Optional[str] = None, output_dir: Optional[str] = None,
                 t_end: Optional[float] = None, **overrides) -> Dict[str, Any]:
        try:
            network, scenario = self._load(network_path, scenario_path)
            config = self._config(scenario, overrides)
            output_dir = self._output_dir(output_dir, config, network, scenario)
            os.makedirs(output_dir, exist_ok=True)
            horizon = self._horizon(t_end, scenario, network)
            summary = self._runner(config).simulate(network, horizon, output_dir, scenario=scenario,
                                                    network_file=network_path, scenario_file=scenario_path)
            return {
                'success': True,
                'message': (f"Simulated {summary['simulated_seconds']:.1f}s in {summary['steps']} steps; "
                            f"results in {output_dir} (max relative mass residual "
                            f"{summary['max_relative_residual']:.2e}, {summary['policy_event_count']} policy events)"),
                'exit_code': EXIT_OK,
                'summary': summary
            }
        except Exception as e:
            return self._failure(e, 'Simulation', output_dir)

    def steady_check(self, network_path: str, scenario_path: Optional[str] = None, steps: int = 1000,
                     reconcile: bool = True, **overrides) -> Dict[str, Any]:
        try:
            network, scenario = self._load(network_path, scenario_path)
            config = self._config(scenario, overrides)
            summary = self._runner(config).steady_check(network, steps=steps, reconcile=reconcile,
                                                        network_file=network_path)
            table = summary['table_compatibility']
            message = (f"Steady hold drift over {steps} steps: {summary['drift']:.3e}; "
                       f"tabulated data {'consistent' if table['ok'] else 'inconsistent'} "
                       f"({len([c for c in table['checks'] if not c['ok']])} failed checks)")
            if not summary['hold_ok'] or not summary['state_compatibility']['ok']:
                return {
                    'success': False,
                    'message': message,
                    'exit_code': EXIT_RUNTIME,
                    'summary': summary,
                    'error': {'kind': 'steady-hold', 'message': message, 'context': {'drift': summary['drift']}}
                }
            return {'success': True, 'message': message, 'exit_code': EXIT_OK, 'summary': summary}
        except Exception as e:
            return self._failure(e, 'Steady check')

    def converge(self, network_path: str, scenario_path: Optional[str] = None, t_end: Optional[float] = None,
                 levels: int = 3, base_cells: int = 50, output_dir: Optional[str] = None,
                 **overrides) -> Dict[str, Any]:
        try:
            network, scenario = self._load(network_path, scenario_path)
            config = self._config(scenario, overrides)
            horizon = self._horizon(t_end, scenario, network)
            summary = self._runner(config).converge(network, horizon, levels=levels, base_cells=base_cells,
                                                    network_file=network_path, output_dir=output_dir)
            if summary['declined']:
                message = f"Convergence study declined: {summary['message']}"
            else:
                orders = ', '.join(f'{order:.3f}' for order in summary['orders'])
                message = f"Observed orders over {levels} levels: {orders}"
            return {'success': True, 'message': message, 'exit_code': EXIT_OK, 'summary': summary}
        except Exception as e:
            return self._failure(e, 'Convergence study', output_dir)

    def diffuse(self, network_path: str, scenario_path: Optional[str] = None, t_end: Optional[float] = None,
                eps_values: Sequence[float] = (0.1,), output_dir: Optional[str] = None,
                **overrides) -> Dict[str, Any]:
        try:
            network, scenario = self._load(network_path, scenario_path)
            config = self._config(scenario, overrides)
            horizon = self._horizon(t_end, scenario, network)
            summary = self._runner(config).diffuse(network, horizon, eps_values=eps_values,
                                                   network_file=network_path, output_dir=output_dir)
            lines = '\n'.join(f"  eps={row['eps']:g}: inlet flux difference {row['flux_difference']:.3e}"
                              for row in summary['rows'])
            return {
                'success': True,
                'message': f'Diffusion study over {horizon:.1f}s:\n{lines}',
                'exit_code': EXIT_OK,
                'summary': summary
            }
        except Exception as e:
            return self._failure(e, 'Diffusion study', output_dir)

    def validate(self, network_path: str, scenario_path: Optional[str] = None) -> Dict[str, Any]:
        try:
            network, _ = self._load(network_path, scenario_path)
            report = validate(network)
            if not report.ok:
                report.raise_for_violations()
            return {
                'success': True,
                'message': (f"Network '{network.name}' is valid: {len(network.nodes)} nodes, "
                            f"{len(network.pipes)} pipes, {len(network.species)} species"),
                'exit_code': EXIT_OK,
                'violations': []
            }
        except Exception as e:
            result = self._failure(e, 'Validation')
            result['violations'] = getattr(e, 'violations', [])
            return result

    def plot(self, csv_dir: str, output_dir: Optional[str] = None) -> Dict[str, Any]:
        try:
            if not os.path.isdir(csv_dir):
                raise FileNotFoundError(f"Results directory not found: {csv_dir}")
            charts = emit_plots(csv_dir, output_dir)
            message = f'Wrote {len(charts)} charts' if charts else f'No charts written; no series found in {csv_dir}'
            return {'success': True, 'message': message, 'exit_code': EXIT_OK, 'charts': charts}
        except Exception as e:
            return self._failure(e, 'Plotting')

    def list_runs(self) -> Dict[str, Any]:
        try:
            DatabaseManager().create_tables()
            status_helper = RunStatusHelper()
            summary_helper = RunSummaryHelper()
            runs = []
            for run in SimulationRunHelper().get_all_runs():
                row = run.to_dict()
                status = status_helper.get_run_status_by_id(run.run_id)
                summary = summary_helper.get_run_summary_by_id(run.run_id)
                row['status'] = status.to_dict() if status else None
                row['summary'] = summary.to_dict() if summary else None
                runs.append(row)
            lines = [f"{r['run_id']}  {r['command']:<12} "
                     f"{(r['status'] or {}).get('status') or 'unknown':<12} {r['network_file'] or ''}" for r in runs]
            return {
                'success': True,
                'message': '\n'.join([f'{len(runs)} recorded runs'] + lines),
                'exit_code': EXIT_OK,
                'runs': runs
            }
        except Exception as e:
            return self._failure(e, 'Listing runs')
