import numpy as np
import pytest

from logic.diagnostics import mass_balance_residual
from logic.engine import SimulationEngine
from logic.errors import CompressorRatioError, FlowReversalError, StabilityError
from logic.junction import NodeState
from logic.monitoring import MAX_FRACTION
from logic.network import load_network, load_scenario, parse_network, parse_scenario
from logic.pipe_solver import PipeState
from logic.state import NetworkState
from tests.helpers import FIVE_NODE, config, scenario_path, two_node_payload


def run(network, t_end, **overrides):
    engine = SimulationEngine(network, config(**overrides))
    try:
        history = engine.run(t_end)
    finally:
        engine.close()
    return engine, history


def blended_network():
    return load_network(FIVE_NODE).with_scenario(load_scenario(scenario_path('hydrogen_blend')))


class TestQuiescentPipe:

    def setup_method(self):
        payload = two_node_payload()
        payload['nodes'] = [
            {'id': 'A', 'kind': 'slack', 'density': {'kind': 'constant', 'value': 40.0}},
            {'id': 'B', 'kind': 'slack', 'density': {'kind': 'constant', 'value': 40.0}}
        ]
        del payload['initial']
        self.network = parse_network(payload)

    def _engine(self):
        # 10 km pipe at the default 1 km cells
        state = NetworkState(
            t=0.0,
            pipes={'P': PipeState(np.full((1, 10), 40.0), np.zeros(11), 1000.0)},
            nodes={node_id: NodeState(p=40.0 * 377.9683 ** 2, d=np.array([40.0]), c=np.array([1.0]))
                   for node_id in ('A', 'B')}
        )
        return SimulationEngine(self.network, config(), state=state)

    def test_gas_at_rest_stays_at_rest(self):
        engine = self._engine()
        initial = engine.state.copy()

        for _ in range(50):
            engine.step()

        assert np.array_equal(engine.state.pipes['P'].d, initial.pipes['P'].d)
        assert np.all(engine.state.pipes['P'].phi == 0.0)

    def test_mass_residual_is_exactly_zero(self):
        engine = self._engine()

        history = engine.run(20 * engine.dt)

        report = mass_balance_residual(history)
        assert np.all(report.residual == 0.0)
        assert report.max_relative == 0.0


class TestEngineRuns:

    def test_pure_natural_gas_never_produces_hydrogen(self):
        engine, history = run(load_network(FIVE_NODE), 120.0)

        for pipe in engine.state.pipes.values():
            assert np.all(pipe.d[1] == 0.0)
        for node_id in history.node_ids:
            assert np.all(history.node_series(node_id, 'fractions')[:, 1] == 0.0)

    def test_zero_slopes_reproduce_ideal_mode_bit_for_bit(self):
        flat = blended_network().with_scenario(parse_scenario({
            't_end': 30,
            'species_overrides': {'natural_gas': {'compressibility': 0.0}, 'hydrogen': {'compressibility': 0.0}}
        }))

        ideal, _ = run(flat, 30.0, dt=0.1, eos='ideal')
        linear, _ = run(flat, 30.0, dt=0.1, eos='linear-z')

        for pid in ideal.state.pipes:
            assert np.array_equal(ideal.state.pipes[pid].d, linear.state.pipes[pid].d)
            assert np.array_equal(ideal.state.pipes[pid].phi, linear.state.pipes[pid].phi)

    def test_nonideal_gas_changes_pressures(self):
        nonideal = load_network(FIVE_NODE).with_scenario(load_scenario(scenario_path('nonideal')))

        _, ideal = run(nonideal, 5.0, dt=0.1, eos='ideal')
        _, linear = run(nonideal, 5.0, dt=0.1, eos='linear-z')

        p_ideal = ideal.node_series('N5', 'pressure')[-1]
        p_linear = linear.node_series('N5', 'pressure')[-1]
        assert abs(p_linear - p_ideal) / p_ideal > 1e-3

    def test_default_slopes_apply_without_a_scenario(self):
        network = load_network(FIVE_NODE)

        _, ideal = run(network, 5.0, dt=0.1, eos='ideal')
        _, linear = run(network, 5.0, dt=0.1, eos='linear-z')

        p_ideal = ideal.node_series('N5', 'pressure')[-1]
        p_linear = linear.node_series('N5', 'pressure')[-1]
        assert abs(p_linear - p_ideal) / p_ideal > 1e-3

    def test_worker_threads_do_not_change_results(self):
        serial, _ = run(blended_network(), 20.0, dt=0.1, workers=1)
        threaded, _ = run(blended_network(), 20.0, dt=0.1, workers=3)

        for pid in serial.state.pipes:
            assert np.array_equal(serial.state.pipes[pid].d, threaded.state.pipes[pid].d)
            assert np.array_equal(serial.state.pipes[pid].phi, threaded.state.pipes[pid].phi)

    def test_output_every_thins_records(self):
        engine, history = run(load_network(FIVE_NODE), 9.5, dt=0.1, output_every=10)

        assert history.steps == 95
        assert len(history.records) == 11
        assert history.times[0] == 0.0
        assert history.times[-1] == pytest.approx(9.4)
        assert engine.state.t == pytest.approx(9.5)
        assert engine.ledger.steps == 95

    def test_final_state_is_serializable(self):
        engine, _ = run(load_network(FIVE_NODE), 1.0, dt=0.1)

        final = engine.final_state()

        assert final['step'] == 10
        assert set(final['nodes']) == {'N1', 'N2', 'N3', 'N4', 'N5'}
        assert len(final['pipes']['P1']['phi']) == len(final['pipes']['P1']['d']['natural_gas']) + 1
        assert final['pipes']['P1']['max_wave_speed'] == pytest.approx(377.9683, rel=1e-9)
        assert final['nodes']['N5']['volume_fractions'] == pytest.approx({'natural_gas': 1.0, 'hydrogen': 0.0})
        assert final['species_constants']['hydrogen']['a'] == pytest.approx(0.59e-8)


class TestHomogeneousReduction:

    def _run(self, payload):
        engine = SimulationEngine(parse_network(payload), config(), reconcile=False)
        try:
            engine.run(60.0)
        finally:
            engine.close()
        return engine.state.pipes['P']

    def test_identical_species_match_single_gas(self):
        reference = self._run(two_node_payload())
        payload = two_node_payload(species=[{'name': 'natural_gas', 'wave_speed': 377.9683},
                                            {'name': 'tracer', 'wave_speed': 377.9683}])
        payload['nodes'][0]['composition'] = {'tracer': {'kind': 'constant', 'value': 0.3}}
        payload['initial']['composition'] = {'natural_gas': 0.7, 'tracer': 0.3}

        split = self._run(payload)

        assert split.d.sum(axis=0) == pytest.approx(reference.d[0], rel=1e-12)
        assert split.phi == pytest.approx(reference.phi, rel=1e-12)
        assert split.d[1] / split.d.sum(axis=0) == pytest.approx(np.full(split.d.shape[1], 0.3), rel=1e-12)


class TestOrientation:

    def _run(self, flipped):
        payload = two_node_payload()
        payload['nodes'][1]['withdrawal'] = {'kind': 'piecewise-linear', 'points': [[0, 50.0], [60, 60.0]]}
        if flipped:
            payload['pipes'][0].update(from_node='B', to_node='A')
            payload['initial']['pipes']['P'] = {'flow': -50.0}
        engine = SimulationEngine(parse_network(payload), config())
        try:
            engine.run(60.0)
        finally:
            engine.close()
        return engine.state

    def test_flipping_a_pipe_mirrors_the_solution(self):
        forward = self._run(False)
        backward = self._run(True)

        assert backward.pipes['P'].d[:, ::-1] == pytest.approx(forward.pipes['P'].d, rel=1e-8)
        assert -backward.pipes['P'].phi[::-1] == pytest.approx(forward.pipes['P'].phi, rel=1e-8)
        assert backward.nodes['B'].p == pytest.approx(forward.nodes['B'].p, rel=1e-8)


class TestStability:

    def test_time_step_above_bound_is_refused(self):
        with pytest.raises(StabilityError):
            SimulationEngine(parse_network(two_node_payload()), config(dt=5.0))

    def test_unsafe_time_step_can_be_allowed(self):
        engine = SimulationEngine(parse_network(two_node_payload()), config(dt=5.0, allow_unsafe_dt=True))

        assert engine.dt == 5.0
        assert engine.plan.dt_bound == pytest.approx(0.8 * 1000.0 / 377.9683)


class TestFailures:

    def _reversing_network(self):
        payload = two_node_payload()
        payload['nodes'][1] = {
            'id': 'B',
            'kind': 'flow',
            'withdrawal': {'kind': 'piecewise-linear', 'points': [[0, 50.0], [60, 50.0], [120, 0.0]]},
            'injection': {'kind': 'piecewise-linear', 'points': [[0, 0.0], [120, 0.0], [180, 80.0]]}
        }
        return parse_network(payload)

    def test_flow_reversal_stops_the_run(self):
        with pytest.raises(FlowReversalError) as error:
            run(self._reversing_network(), 900.0)

        assert error.value.context['pipe'] == 'P'

    def test_permissive_mode_completes(self):
        engine, history = run(self._reversing_network(), 900.0, permissive_reversals=True)

        assert engine.state.t >= 899.0
        assert history.pipe_series('P', 'flux_end')[-1] < 0

    def test_compressor_ratio_below_one_mid_run(self):
        # ratio crosses 1 at t = 600 * 0.2 / 0.21 s while the withdrawal keeps pulling gas forward
        payload = two_node_payload()
        payload['compressors'] = [{'id': 'C', 'pipe': 'P',
                                   'ratio': {'kind': 'piecewise-linear', 'points': [[0, 1.2], [600, 0.99]]}}]
        payload['initial']['pipes']['P']['pressure_in'] = 6e6
        crossing = 600.0 * 0.2 / 0.21

        with pytest.raises(CompressorRatioError) as error:
            run(parse_network(payload), 900.0, permissive_reversals=True)

        assert error.value.kind == 'compressor-ratio'
        assert error.value.context['compressor'] == 'C'
        assert crossing < error.value.context['time'] <= crossing + 0.8 * 1000.0 / 377.9683 + 1e-9


class TestMonitoringInEngine:

    def _network(self, cap):
        scenario = parse_scenario({
            't_end': 600,
            'node_overrides': {
                'N4': {
                    'withdrawal': None,
                    'injection': {'kind': 'piecewise-linear', 'points': [[0, 0.0], [60, 2.0], [86400, 2.0]]},
                    'composition': {'hydrogen': {'kind': 'constant', 'value': 1.0}},
                    'max_fraction': {'hydrogen': cap}
                }
            }
        })
        return load_network(FIVE_NODE).with_scenario(scenario)

    def test_cap_holds_at_the_node(self):
        _, history = run(self._network(0.005), 300.0)

        fractions = history.node_series('N4', 'fractions')[:, 1]
        assert fractions.max() <= 0.005 + 1e-9
        assert fractions.max() == pytest.approx(0.005, rel=1e-6)
        assert any(event.policy == MAX_FRACTION and event.node == 'N4' for event in history.events)

    def test_monitoring_off_lets_fraction_exceed_cap(self):
        _, history = run(self._network(0.005), 300.0, monitor=False)

        assert history.node_series('N4', 'fractions')[:, 1].max() > 0.005
        assert history.events == []

    def test_mass_balance_holds_with_clamping(self):
        _, history = run(self._network(0.005), 300.0)

        assert mass_balance_residual(history).max_relative <= 1e-9

    def test_blend_cap_holds_with_a_heavy_injection(self):
        # 6 kg/s of hydrogen into about 150 kg/s of through flow would reach 3.8% at N4
        scenario = parse_scenario({
            't_end': 600,
            'node_overrides': {
                'N4': {'injection': {'kind': 'piecewise-linear', 'points': [[0, 0.0], [300, 6.0], [86400, 6.0]]}}
            }
        })
        network = load_network(FIVE_NODE).with_scenario(load_scenario(scenario_path('monitoring')))
        network = network.with_scenario(scenario)

        _, capped = run(network, 600.0)
        _, free = run(network, 600.0, monitor=False)

        capped_fractions = capped.node_series('N4', 'fractions')[:, 1]
        assert capped_fractions.max() <= 0.033 + 1e-9
        assert capped_fractions.max() == pytest.approx(0.033, rel=1e-6)
        assert free.node_series('N4', 'fractions')[:, 1].max() > 0.033
