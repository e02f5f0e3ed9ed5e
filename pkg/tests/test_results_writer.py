import json
import os
import shutil
import tempfile

import pytest

from logic.diagnostics import mass_balance_residual
from logic.engine import SimulationEngine
from logic.monitoring import MAX_FRACTION, PolicyEvent
from logic.network import load_network, load_scenario
from logic.plotting import emit_plots
from logic.results_writer import (
    MANIFEST_FILE,
    MASS_BALANCE_FILE,
    NODES_FILE,
    PIPES_FILE,
    POLICY_EVENTS_FILE,
    ResultsWriter,
    package_versions,
    read_series,
)
from tests.helpers import FIVE_NODE, config, scenario_path


class TestResultsWriter:

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()
        self.network = load_network(FIVE_NODE).with_scenario(load_scenario(scenario_path('monitoring')))
        self.config = config(dt=0.1)
        engine = SimulationEngine(self.network, self.config)
        try:
            self.history = engine.run(1.0)
        finally:
            engine.close()
        self.engine = engine
        self.report = mass_balance_residual(self.history)
        self.writer = ResultsWriter(self.temp_dir)

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write_all(self, every=1):
        files = self.writer.write_run(self.history, self.report, self.engine.dt, every, self.engine.final_state())
        self.writer.write_manifest(self.config.model_dump(mode='json'), self.network.to_payload(), None, files)
        return files

    def test_write_run_files(self):
        files = self._write_all()

        assert [os.path.basename(f) for f in files] == [NODES_FILE, PIPES_FILE, MASS_BALANCE_FILE,
                                                        POLICY_EVENTS_FILE, 'final_state.json']
        assert all(os.path.exists(f) for f in files)

    def test_node_columns(self):
        self._write_all()

        nodes = read_series(os.path.join(self.temp_dir, NODES_FILE))

        for column in ('N1_p_Pa', 'N4_net_flow_kg_s', 'N4_c_hydrogen', 'N5_d_natural_gas_kg_m3'):
            assert column in nodes
        assert len(nodes['time_s']) == 10
        assert nodes['time_s'][0] == 0.0

    def test_pipe_columns(self):
        self._write_all()

        pipes = read_series(os.path.join(self.temp_dir, PIPES_FILE))

        for column in ('P1_phi_start_kg_m2_s', 'P5_phi_end_kg_m2_s', 'P2_p_inlet_Pa', 'P3_d_end_hydrogen_kg_m3'):
            assert column in pipes

    def test_mass_balance_thinning_keeps_last_step(self):
        self._write_all(every=3)

        balance = read_series(os.path.join(self.temp_dir, MASS_BALANCE_FILE))

        assert balance['time_s'] == pytest.approx([0.1, 0.4, 0.7, 1.0])
        assert max(balance['relative_residual']) <= 1e-9
        assert 'total_linepack_kg' in balance

    def test_policy_events(self):
        event = PolicyEvent(time=12.5, node='N4', policy=MAX_FRACTION, species='hydrogen', planned=2.0,
                            applied=1.5, limit=0.033)

        self.writer.write_policy_events([event], 0.1)

        events = read_series(os.path.join(self.temp_dir, POLICY_EVENTS_FILE))
        assert events['node'] == ['N4']
        assert events['applied_min_kg_s'] == [1.5]
        assert events['steps'] == [1.0]
        assert events['violation'] == ['false']

    def test_contiguous_clamps_share_one_row(self):
        def clamp(time, node='N4', applied=1.5):
            return PolicyEvent(time=time, node=node, policy=MAX_FRACTION, species='hydrogen', planned=2.0,
                               applied=applied, limit=0.033)

        events = [clamp(1.0), clamp(1.1, node='N2'), clamp(1.1, applied=1.2), clamp(1.2), clamp(2.0)]

        self.writer.write_policy_events(events, 0.1)

        rows = read_series(os.path.join(self.temp_dir, POLICY_EVENTS_FILE))
        assert rows['node'] == ['N4', 'N2', 'N4']
        assert rows['time_s'] == [1.0, 1.1, 2.0]
        assert rows['end_time_s'] == [1.2, 1.1, 2.0]
        assert rows['steps'] == [3.0, 1.0, 1.0]
        assert rows['applied_min_kg_s'] == [1.2, 1.5, 1.5]

    def test_manifest_digests_files(self):
        files = self._write_all()

        with open(os.path.join(self.temp_dir, MANIFEST_FILE), 'r', encoding='utf-8') as handle:
            manifest = json.load(handle)

        assert manifest['schema_version'] == 1
        assert manifest['files'][NODES_FILE] == self.writer.digest(files[0])
        assert manifest['network']['name'] == self.network.name
        assert set(manifest['versions']) == set(package_versions())

    def test_read_missing_series(self):
        assert read_series(os.path.join(self.temp_dir, 'absent.csv')) == {}


class TestPlotting:

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_empty_directory_writes_nothing(self):
        assert emit_plots(self.temp_dir) == []

    def test_monitoring_run_charts(self):
        network = load_network(FIVE_NODE).with_scenario(load_scenario(scenario_path('monitoring')))
        settings = config(dt=0.1)
        engine = SimulationEngine(network, settings)
        try:
            history = engine.run(1.0)
        finally:
            engine.close()
        writer = ResultsWriter(self.temp_dir)
        files = writer.write_run(history, mass_balance_residual(history), engine.dt, 1, engine.final_state())
        writer.write_manifest(settings.model_dump(mode='json'), network.to_payload(), None, files)
        chart_dir = os.path.join(self.temp_dir, 'charts')

        charts = emit_plots(self.temp_dir, chart_dir)

        names = {os.path.basename(c) for c in charts}
        assert names == {'inflow.svg', 'outlet_pressure.svg', 'fractions.svg', 'monitoring_panels.svg',
                         'partial_densities.svg', 'mass_residual.svg'}
        assert all(os.path.getsize(c) > 0 for c in charts)
