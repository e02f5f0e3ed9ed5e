from unittest.mock import patch

import numpy as np
import pytest

from logic.diagnostics import (
    convergence_study,
    diffusion_study,
    mass_balance_residual,
    restrict,
    steady_hold_drift,
)
from logic.engine import SimulationEngine
from logic.errors import StabilityError
from logic.history import MassBalanceLedger
from logic.network import load_network, load_scenario, parse_network
from tests.helpers import FIVE_NODE, SINGLE_PIPE, config, read_payload, scenario_path


def single_pipe(cells=None):
    payload = read_payload(SINGLE_PIPE)
    if cells:
        payload['pipes'][0]['cells'] = cells
    return parse_network(payload).with_scenario(load_scenario(scenario_path('single_pipe_pure')))


class TestMassBalance:

    def test_ledger_residual(self):
        ledger = MassBalanceLedger(['natural_gas', 'hydrogen'], dt=2.0)
        ledger.start(np.array([100.0, 10.0]))
        ledger.record(np.array([1.0, 0.5]), np.array([102.0, 11.0]))
        ledger.record(np.array([0.0, 0.0]), np.array([102.0, 11.0]))

        report = mass_balance_residual(ledger)

        assert report.residual == pytest.approx(np.zeros((2, 2)))
        assert report.max_relative == 0.0
        assert ledger.steps == 2

    def test_ledger_detects_leak(self):
        ledger = MassBalanceLedger(['natural_gas'], dt=1.0)
        ledger.start(np.array([100.0]))
        ledger.record(np.array([0.0]), np.array([99.0]))

        report = mass_balance_residual(ledger)

        assert report.residual[0, 0] == pytest.approx(-1.0)
        assert report.total[0] == pytest.approx(-1.0)
        assert report.max_relative == pytest.approx(1.0 / 99.0)

    def test_blended_run_conserves_every_species(self):
        network = load_network(FIVE_NODE).with_scenario(load_scenario(scenario_path('hydrogen_blend')))
        engine = SimulationEngine(network, config(dt=0.1))
        history = engine.run(120.0)
        engine.close()

        report = mass_balance_residual(history)

        assert report.residual.shape == (1200, 2)
        assert report.max_relative <= 1e-9
        assert history.max_nodal_imbalance <= 1e-9


class TestSteadyHold:

    def test_reconciled_five_node_state_holds(self):
        drift = steady_hold_drift(load_network(FIVE_NODE), config(dt=0.02), steps=1000)
        assert drift < 1e-6

    def test_single_pipe_state_holds(self):
        drift = steady_hold_drift(single_pipe(), config(), steps=500)
        assert drift < 1e-6


class TestRestriction:

    def test_pairwise_average(self):
        fine = np.array([[1.0, 3.0, 5.0, 7.0], [0.0, 2.0, 2.0, 4.0]])
        assert restrict(fine, 2) == pytest.approx(np.array([[2.0, 6.0], [1.0, 3.0]]))

    def test_indivisible_cells(self):
        with pytest.raises(ValueError):
            restrict(np.ones((1, 5)), 2)


class TestConvergenceStudy:

    def test_declines_with_two_levels(self):
        report = convergence_study(single_pipe(), config(), 10.0, levels=2)

        assert report.declined == True
        assert report.orders == []
        assert report.to_dict()['observed_order'] is None

    def test_half_cell_spacing_is_second_order(self):
        report = convergence_study(single_pipe(), config(), 7200.0, levels=3, base_cells=50)

        assert [level['cells'] for level in report.levels] == [50, 100, 200]
        assert report.levels[1]['dt'] == pytest.approx(report.levels[0]['dt'] / 2)
        assert 1.6 < report.observed_order < 2.4
        assert report.differences[0] > report.differences[1]

    def test_full_cell_spacing_loses_an_order(self):
        report = convergence_study(single_pipe(), config(boundary_spacing='full-cell'), 7200.0, levels=3,
                                   base_cells=50)

        assert report.observed_order < 1.5


class TestDiffusionStudy:

    def test_small_diffusivity_barely_changes_outputs(self):
        payload = read_payload(SINGLE_PIPE)
        payload['pipes'][0]['cells'] = 25

        report = diffusion_study(parse_network(payload), config(), 21600.0, eps_values=(0.1,))

        row = report.rows[0]
        assert row['eps'] == 0.1
        assert row['flux_difference'] < 1e-3
        assert row['natural_gas_difference'] < 1e-3
        assert 0 < row['hydrogen_difference'] < 1e-3
        assert report.to_dict()['rows'] == report.rows


class TestEngineCleanup:

    def test_diffusion_study_closes_engine_on_failure(self):
        with patch.object(SimulationEngine, 'run', side_effect=StabilityError('dt too large')), \
                patch.object(SimulationEngine, 'close') as close:
            with pytest.raises(StabilityError):
                diffusion_study(single_pipe(cells=10), config(), 10.0)

        close.assert_called_once()

    def test_steady_hold_closes_engine_on_failure(self):
        with patch.object(SimulationEngine, 'step', side_effect=StabilityError('dt too large')), \
                patch.object(SimulationEngine, 'close') as close:
            with pytest.raises(StabilityError):
                steady_hold_drift(single_pipe(cells=10), config(), steps=5)

        close.assert_called_once()

    def test_convergence_study_closes_engine_on_failure(self):
        with patch.object(SimulationEngine, 'run', side_effect=StabilityError('dt too large')), \
                patch.object(SimulationEngine, 'close') as close:
            with pytest.raises(StabilityError):
                convergence_study(single_pipe(), config(), 10.0, levels=3, base_cells=10)

        close.assert_called_once()
