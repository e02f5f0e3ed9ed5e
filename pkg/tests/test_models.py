import pytest
import tempfile
import os
from unittest.mock import patch
import sys
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from pydantic import ValidationError
from sqlalchemy import create_engine
from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import sessionmaker
from models.database import Base
from models.network import ScenarioSpec
from models.run_status import RunStatusEnum, RunStatusHelper
from models.run_summary import RunSummaryHelper
from models.sim_config import SimConfig
from models.simulation_run import SimulationRunHelper


class TestRunRegistry:

    def setup_method(self):
        # Create a unique temporary database for each test
        self.temp_db = tempfile.NamedTemporaryFile(delete=False, suffix='.db')
        self.temp_db_path = self.temp_db.name
        self.temp_db.close()

        self.engine = create_engine(f'sqlite:///{self.temp_db_path}', echo=False)
        Base.metadata.create_all(bind=self.engine)

        # Patch the helpers to use our test database
        self.session_patcher = patch('models.database.engine', self.engine)
        self.session_patcher.start()

        self.sessionlocal_patcher = patch('models.database.SessionLocal', sessionmaker(bind=self.engine))
        self.sessionlocal_patcher.start()

        self.run_helper = SimulationRunHelper()
        self.status_helper = RunStatusHelper()
        self.summary_helper = RunSummaryHelper()

    def teardown_method(self):
        self.session_patcher.stop()
        self.sessionlocal_patcher.stop()
        self.engine.dispose()

        try:
            os.unlink(self.temp_db_path)
        except FileNotFoundError:
            pass

    def test_run_creation(self):
        run = self.run_helper.create_run("run-1", "simulate", network_file="net.json", output_dir="runs/a")

        assert run.run_id == "run-1"
        assert run.command == "simulate"
        assert run.network_file == "net.json"
        assert run.scenario_file is None
        assert run.created_at is not None

    def test_run_get_by_id(self):
        self.run_helper.create_run("run-2", "converge")

        run = self.run_helper.get_run_by_id("run-2")

        assert run is not None
        assert run.command == "converge"

    def test_run_get_by_nonexistent_id(self):
        assert self.run_helper.get_run_by_id("NONEXISTENT") is None

    def test_all_runs(self):
        for index in range(3):
            self.run_helper.create_run(f"run-{index}", "simulate")

        runs = self.run_helper.get_all_runs()

        assert {run.run_id for run in runs} == {"run-0", "run-1", "run-2"}

    def test_run_delete(self):
        self.run_helper.create_run("run-3", "validate")

        assert self.run_helper.delete_run("run-3") == True
        assert self.run_helper.delete_run("run-3") == False
        assert self.run_helper.get_run_by_id("run-3") is None

    def test_run_delete_removes_status_and_summary(self):
        self.run_helper.create_run("run-3b", "simulate")
        self.status_helper.create_run_status("run-3b")
        self.summary_helper.create_run_summary("run-3b", steps=10)

        assert self.run_helper.delete_run("run-3b") == True
        assert self.status_helper.get_run_status_by_id("run-3b") is None
        assert self.summary_helper.get_run_summary_by_id("run-3b") is None

    def test_run_to_dict(self):
        run = self.run_helper.create_run("run-4", "simulate", config_json='{"dt":0.1}')

        payload = run.to_dict()

        assert payload['run_id'] == "run-4"
        assert payload['config_json'] == '{"dt":0.1}'
        assert 'created_at' in payload

    def test_status_creation(self):
        self.run_helper.create_run("run-5", "simulate")

        status = self.status_helper.create_run_status("run-5", stage="starting")

        assert status.status == RunStatusEnum.IN_PROGRESS
        assert status.stage == "starting"
        assert status.started_at is not None

    def test_status_stage_update(self):
        self.run_helper.create_run("run-6", "simulate")
        self.status_helper.create_run_status("run-6")

        status = self.status_helper.update_stage("run-6", "stepping")

        assert status.stage == "stepping"
        assert status.status == RunStatusEnum.IN_PROGRESS

    def test_status_mark_as_completed(self):
        self.run_helper.create_run("run-7", "simulate")
        self.status_helper.create_run_status("run-7")

        status = self.status_helper.mark_as_completed("run-7", duration_seconds=1.5, run_metadata='{}')

        assert status.status == RunStatusEnum.COMPLETED
        assert status.stage == "done"
        assert status.completed_at is not None
        assert status.duration_seconds == 1.5

    def test_status_mark_as_failed(self):
        self.run_helper.create_run("run-8", "simulate")
        self.status_helper.create_run_status("run-8")

        status = self.status_helper.mark_as_failed("run-8", "Flow reversed at the end of pipe P")

        assert status.status == RunStatusEnum.FAILED
        assert status.error_message == "Flow reversed at the end of pipe P"

    def test_status_update_missing_run(self):
        assert self.status_helper.update_stage("missing", "stepping") is None

    def test_status_update_rejects_unknown_fields(self):
        self.run_helper.create_run("run-8b", "simulate")
        self.status_helper.create_run_status("run-8b")

        with pytest.raises(ValueError):
            self.status_helper.update_run_status("run-8b", RunStatusEnum.FAILED, reason="oops")

    def test_session_scope_rolls_back(self):
        self.run_helper.create_run("run-8c", "simulate")

        with pytest.raises(IntegrityError):
            self.run_helper.create_run("run-8c", "simulate")

        assert len(self.run_helper.get_all_runs()) == 1

    def test_runs_by_status(self):
        for run_id in ("run-a", "run-b", "run-c"):
            self.run_helper.create_run(run_id, "simulate")
            self.status_helper.create_run_status(run_id)
        self.status_helper.mark_as_completed("run-b")

        in_progress = self.status_helper.get_runs_by_status(RunStatusEnum.IN_PROGRESS)
        completed = self.status_helper.get_runs_by_status(RunStatusEnum.COMPLETED)

        assert {s.run_id for s in in_progress} == {"run-a", "run-c"}
        assert [s.run_id for s in completed] == ["run-b"]

    def test_status_to_dict(self):
        self.run_helper.create_run("run-9", "simulate")
        self.status_helper.create_run_status("run-9", stage="validating")

        payload = self.status_helper.get_run_status_by_id("run-9").to_dict()

        assert payload['status'] == "in-progress"
        assert payload['stage'] == "validating"
        assert payload['completed_at'] is None

    def test_summary_creation(self):
        self.run_helper.create_run("run-10", "simulate")

        summary = self.summary_helper.create_run_summary("run-10", steps=1200, simulated_seconds=120.0,
                                                         max_relative_residual=1e-14, policy_event_count=3,
                                                         final_pressures='{"N1": 3447378.645}')

        assert summary.steps == 1200
        assert summary.policy_event_count == 3
        assert summary.observed_order is None
        assert self.summary_helper.get_run_summary_by_id("run-10").to_dict()['max_relative_residual'] == 1e-14

    def test_all_summaries(self):
        for run_id in ("run-11", "run-12"):
            self.run_helper.create_run(run_id, "converge")
            self.summary_helper.create_run_summary(run_id, observed_order=2.0)

        summaries = self.summary_helper.get_all_run_summaries()

        assert len(summaries) == 2
        assert all(s.observed_order == 2.0 for s in summaries)


class TestSimConfig:

    def test_defaults(self):
        config = SimConfig()

        assert config.dx_target == 1000.0
        assert config.dt is None
        assert config.eos == 'ideal'
        assert config.spacing_factor == 0.5

    def test_from_env(self):
        with patch.dict(os.environ, {'SIM_DT': '0.05', 'SIM_EOS': 'linear-z', 'SIM_MONITOR': 'off',
                                     'SIM_WORKERS': '4', 'SIM_BOUNDARY_SPACING': 'full-cell'}):
            config = SimConfig.from_env()

        assert config.dt == 0.05
        assert config.eos == 'linear-z'
        assert config.monitor == False
        assert config.workers == 4
        assert config.spacing_factor == 1.0

    def test_blank_env_values_mean_unset(self):
        with patch.dict(os.environ, {'SIM_DT': '', 'SIM_TEMPERATURE': ' '}):
            config = SimConfig.from_env()

        assert config.dt is None
        assert config.temperature is None

    def test_env_overrides_ignore_none(self):
        with patch.dict(os.environ, {'SIM_DT': '0.05'}):
            config = SimConfig.from_env(dt=None, output_every=10)

        assert config.dt == 0.05
        assert config.output_every == 10

    def test_invalid_values(self):
        with pytest.raises(ValidationError):
            SimConfig(dt=-1.0)
        with pytest.raises(ValidationError):
            SimConfig(eos='van-der-waals')
        with pytest.raises(ValidationError):
            SimConfig(monitor='sometimes')
        with pytest.raises(ValidationError):
            SimConfig(unknown=1)

    def test_merged_skips_none(self):
        config = SimConfig(dt=0.1, monitor=True)

        merged = config.merged(dt=None, monitor='off', workers=2)

        assert merged.dt == 0.1
        assert merged.monitor == False
        assert merged.workers == 2
        assert config.merged() is config

    def test_scenario_then_flags_precedence(self):
        scenario = ScenarioSpec(t_end=100.0, dt=0.02, eos='linear-z', output_every=500)

        config = SimConfig(dt=0.5).with_scenario(scenario).merged(dt=0.1)

        assert config.dt == 0.1
        assert config.eos == 'linear-z'
        assert config.output_every == 500
