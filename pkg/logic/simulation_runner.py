import logging
import os
import time
import uuid
from typing import Any, Dict, Optional, Sequence

import orjson
from tqdm import tqdm

from logic.diagnostics import convergence_study, diffusion_study, mass_balance_residual, steady_hold_drift
from logic.engine import SimulationEngine
from logic.network import validate
from logic.results_writer import ResultsWriter, dump_json
from logic.steady_init import check_compatibility, init_network_steady
from models.database import DatabaseManager
from models.network import NetworkSpec, ScenarioSpec
from models.run_status import RunStatusHelper
from models.run_summary import RunSummaryHelper
from models.sim_config import SimConfig
from models.simulation_run import SimulationRunHelper

logger = logging.getLogger(__name__)

HOLD_TOLERANCE = 1e-6


def _json_text(payload: Any) -> str:
    return orjson.dumps(payload, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY).decode('utf-8')


class SimulationRunner:
    """Runs simulations and studies and tracks each one in the run registry.

    Every public method follows the same lifecycle: register the run, move it
    through named stages, then mark it completed (with a summary) or failed.
    """

    def __init__(self, config: SimConfig, use_registry: bool = True, show_progress: bool = True):
        self.config = config
        self.use_registry = use_registry
        self.show_progress = show_progress
        if use_registry:
            DatabaseManager().create_tables()
            self.run_helper = SimulationRunHelper()
            self.status_helper = RunStatusHelper()
            self.summary_helper = RunSummaryHelper()

    def _begin(self, command: str, network_file: Optional[str], scenario_file: Optional[str],
               output_dir: Optional[str]) -> str:
        run_id = str(uuid.uuid4())
        if self.use_registry:
            self.run_helper.create_run(run_id, command, network_file=network_file, scenario_file=scenario_file,
                                       config_json=_json_text(self.config.model_dump(mode='json')),
                                       output_dir=output_dir)
            self.status_helper.create_run_status(run_id, stage='starting')
        logger.info(f"🚀 Run {run_id} ({command}) started")
        return run_id

    def _update_status(self, run_id: str, stage: str):
        if self.use_registry:
            self.status_helper.update_stage(run_id, stage)
        logger.info(f"Run {run_id}: {stage}")

    def _complete(self, run_id: str, started: float, summary: Dict[str, Any]):
        duration = time.monotonic() - started
        if self.use_registry:
            self.summary_helper.create_run_summary(
                run_id,
                steps=summary.get('steps'),
                simulated_seconds=summary.get('simulated_seconds'),
                max_relative_residual=summary.get('max_relative_residual'),
                policy_event_count=summary.get('policy_event_count', 0),
                observed_order=summary.get('observed_order'),
                final_pressures=_json_text(summary['final_pressures']) if 'final_pressures' in summary else None
            )
            self.status_helper.mark_as_completed(run_id, duration_seconds=duration, run_metadata=_json_text(summary))
        logger.info(f"✅ Run {run_id} completed in {duration:.2f}s")

    def _fail(self, run_id: str, started: float, error: Exception):
        duration = time.monotonic() - started
        if self.use_registry:
            report = error.to_dict() if hasattr(error, 'to_dict') else {'message': str(error)}
            self.status_helper.mark_as_failed(run_id, str(error), duration_seconds=duration,
                                              run_metadata=_json_text(report))
        logger.error(f"❌ Run {run_id} failed after {duration:.2f}s: {error}")

    def simulate(self, network: NetworkSpec, t_end: float, output_dir: str, scenario: Optional[ScenarioSpec] = None,
                 network_file: Optional[str] = None, scenario_file: Optional[str] = None) -> Dict[str, Any]:
        """Full transient run writing CSV series, final state and manifest into output_dir."""
        run_id = self._begin('simulate', network_file, scenario_file, output_dir)
        started = time.monotonic()
        try:
            self._update_status(run_id, 'validating')
            validate(network).raise_for_violations()

            self._update_status(run_id, 'initializing')
            engine = SimulationEngine(network, self.config)
            steps = max(1, int(round((t_end - engine.state.t) / engine.dt)))

            self._update_status(run_id, 'stepping')
            try:
                with tqdm(total=steps, desc=network.name, unit='step', disable=not self.show_progress) as bar:
                    history = engine.run(t_end, progress=bar.update)
            finally:
                engine.close()

            self._update_status(run_id, 'writing_results')
            report = mass_balance_residual(history)
            summary = {
                'run_id': run_id,
                'steps': history.steps,
                'dt': engine.dt,
                'simulated_seconds': history.steps * engine.dt,
                'max_relative_residual': report.max_relative,
                'max_nodal_imbalance': history.max_nodal_imbalance,
                'policy_event_count': len(history.events),
                'final_pressures': {nid: node.p for nid, node in engine.state.nodes.items()},
                'grid': engine.plan.to_dict()
            }
            writer = ResultsWriter(output_dir)
            files = writer.write_run(history, report, engine.dt, self.config.output_every, engine.final_state())
            manifest_summary = {key: value for key, value in summary.items() if key != 'run_id'}
            writer.write_manifest(self.config.model_dump(mode='json'), network.to_payload(),
                                  scenario.model_dump(mode='json', exclude_none=True) if scenario else None,
                                  files, manifest_summary)
            summary['output_dir'] = output_dir
            self._complete(run_id, started, summary)
            return summary
        except Exception as e:
            self._fail(run_id, started, e)
            raise

    def steady_check(self, network: NetworkSpec, steps: int = 1000, reconcile: bool = True,
                     network_file: Optional[str] = None) -> Dict[str, Any]:
        """Initial-data compatibility plus drift of a frozen-schedule hold."""
        run_id = self._begin('steady-check', network_file, None, None)
        started = time.monotonic()
        try:
            self._update_status(run_id, 'validating')
            validate(network).raise_for_violations()

            self._update_status(run_id, 'checking_compatibility')
            engine = SimulationEngine(network, self.config, reconcile=reconcile, freeze_time=0.0)
            engine.close()
            tabulated = init_network_steady(network, engine.plan, engine.eos, reconcile=False)
            table_report = check_compatibility(tabulated, network, engine.plan, engine.eos)
            state_report = check_compatibility(engine.state, network, engine.plan, engine.eos)

            self._update_status(run_id, 'holding')
            drift = steady_hold_drift(network, self.config, steps=steps, reconcile=reconcile)
            summary = {
                'run_id': run_id,
                'steps': steps,
                'simulated_seconds': steps * engine.dt,
                'drift': drift,
                'hold_ok': drift < HOLD_TOLERANCE,
                'table_compatibility': table_report.to_dict(),
                'state_compatibility': state_report.to_dict(),
                'final_pressures': {nid: node.p for nid, node in engine.state.nodes.items()}
            }
            self._complete(run_id, started, summary)
            return summary
        except Exception as e:
            self._fail(run_id, started, e)
            raise

    def converge(self, network: NetworkSpec, t_end: float, levels: int = 3, base_cells: int = 50,
                 network_file: Optional[str] = None, output_dir: Optional[str] = None) -> Dict[str, Any]:
        run_id = self._begin('converge', network_file, None, output_dir)
        started = time.monotonic()
        try:
            self._update_status(run_id, 'refining')
            report = convergence_study(network, self.config, t_end, levels=levels, base_cells=base_cells)
            summary = {'run_id': run_id, 'simulated_seconds': t_end, 'observed_order': report.observed_order,
                       **report.to_dict()}
            self._write_report(output_dir, 'convergence.json', summary)
            self._complete(run_id, started, summary)
            return summary
        except Exception as e:
            self._fail(run_id, started, e)
            raise

    def diffuse(self, network: NetworkSpec, t_end: float, eps_values: Sequence[float] = (0.1,),
                network_file: Optional[str] = None, output_dir: Optional[str] = None) -> Dict[str, Any]:
        run_id = self._begin('diffuse', network_file, None, output_dir)
        started = time.monotonic()
        try:
            self._update_status(run_id, 'comparing')
            report = diffusion_study(network, self.config, t_end, eps_values=eps_values)
            summary = {'run_id': run_id, 'simulated_seconds': t_end, **report.to_dict()}
            self._write_report(output_dir, 'diffusion.json', summary)
            self._complete(run_id, started, summary)
            return summary
        except Exception as e:
            self._fail(run_id, started, e)
            raise

    def _write_report(self, output_dir: Optional[str], filename: str, payload: Dict[str, Any]):
        if not output_dir:
            return
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, filename), 'wb') as handle:
            handle.write(dump_json({key: value for key, value in payload.items() if key != 'run_id'}))
