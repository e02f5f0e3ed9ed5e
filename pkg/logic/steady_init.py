import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize

from logic.errors import InconsistentDataError, PressureCollapseError, SimulationError
from logic.gas_core import EquationOfState
from logic.grid_plan import GridPlan, PipeGrid
from logic.junction import NodeState
from logic.network import compressor_ratio, eval_composition, node_flows, slack_pressure
from logic.pipe_solver import PipeState
from logic.state import NetworkState
from models.gas_species import GasSpecies
from models.network import NetworkSpec

logger = logging.getLogger(__name__)

PRESSURE_TOLERANCE = 1e-5
BALANCE_TOLERANCE = 1e-3
RECONCILE_TOLERANCE = 1e-10


def steady_pipe_profile(inlet_density: float, flux: float, pipe: PipeGrid, s: GasSpecies,
                        temperature: float) -> np.ndarray:
    """Isothermal ideal-gas steady density at the cell centers of a pipe.

    d(x)^2 = d(0)^2 - lambda / (R T D) * phi|phi| x
    """
    slope = pipe.friction / (s.R * temperature * pipe.diameter) * flux * abs(flux)
    if inlet_density ** 2 - slope * pipe.length <= 0:
        raise PressureCollapseError(f"Steady profile of pipe {pipe.id} collapses before its outlet",
                                    {'pipe': pipe.id, 'flux': flux})
    x = (np.arange(pipe.cells) + 0.5) * pipe.dx
    return np.sqrt(inlet_density ** 2 - slope * x)


def _larger_root(alpha: float, beta: float, gamma: float, pipe_id: str, cell: int) -> float:
    discriminant = beta * beta - 4.0 * alpha * gamma
    if discriminant < 0:
        raise PressureCollapseError(f"No steady state in pipe {pipe_id}: pressure collapses",
                                    {'pipe': pipe_id, 'cell': cell})
    return (-beta + math.sqrt(discriminant)) / (2.0 * alpha)


def discrete_steady_profile(pipe: PipeGrid, flow: float, inlet_pressure: float, gain_a: float,
                            gain_b: float) -> Tuple[np.ndarray, float]:
    """Total densities that the scheme holds fixed for a uniform mixture and constant flow.

    The mixture follows p(rho) = rho*A / (1 - rho*B). inlet_pressure is the
    pressure on the node side of the inlet boundary edge (after any
    compressor).

    Returns:
        (total density per cell, pressure implied at the outlet node)
    """
    flux = flow / pipe.area
    drag = pipe.friction * flux * abs(flux) / pipe.diameter
    edge_drag = pipe.h * drag / 2.0
    cell_drag = pipe.dx * drag

    def p_of(rho):
        return rho * gain_a / (1.0 - rho * gain_b)

    rho = np.empty(pipe.cells)
    rho[0] = _larger_root(gain_a + inlet_pressure * gain_b, -(inlet_pressure + edge_drag * gain_b),
                          edge_drag, pipe.id, 0)
    p_i = p_of(rho[0])
    for i in range(pipe.cells - 1):
        d_i = rho[i]
        alpha = gain_a + p_i * gain_b
        beta = gain_a * d_i - p_i + p_i * gain_b * d_i - cell_drag * gain_b
        gamma = cell_drag - p_i * d_i
        rho[i + 1] = _larger_root(alpha, beta, gamma, pipe.id, i + 1)
        if rho[i + 1] <= 0 or rho[i + 1] * gain_b >= 1.0:
            raise PressureCollapseError(f"No admissible steady state in pipe {pipe.id}",
                                        {'pipe': pipe.id, 'cell': i + 1})
        p_i = p_of(rho[i + 1])
    outlet = p_i - edge_drag / rho[-1]
    if outlet <= 0:
        raise PressureCollapseError(f"Outlet pressure of pipe {pipe.id} is not positive", {'pipe': pipe.id})
    return rho, outlet


@dataclass
class _SteadySetup:
    weights: np.ndarray
    gain_a: float
    gain_b: float
    slack: Dict[str, float]
    flows: Dict[str, Tuple[float, float]]
    ratios: Dict[str, float]
    node_seed: Dict[str, float] = field(default_factory=dict)
    flow_seed: Dict[str, float] = field(default_factory=dict)


def _initial_weights(network: NetworkSpec) -> np.ndarray:
    names = network.species_names
    weights = np.zeros(len(names))
    if network.initial is not None and network.initial.composition:
        for name, value in network.initial.composition.items():
            weights[names.index(name)] = value
    else:
        weights[0] = 1.0
    return weights


def _seed_from_table(network: NetworkSpec, setup: _SteadySetup, eos: EquationOfState):
    """Nodal pressures and flows from the tabulated per-pipe data; raises on disagreement."""
    problems: List[Dict[str, Any]] = []
    readings: Dict[str, List[Tuple[str, float]]] = {}
    rows = network.initial.pipes if network.initial is not None else {}

    for pipe in network.pipes:
        row = rows.get(pipe.id)
        if row is None:
            continue
        setup.flow_seed[pipe.id] = row.flow
        inlet = row.pressure_in
        if inlet is None and row.density_in is not None:
            inlet = float(eos.pressure(row.density_in * setup.weights))
        if inlet is not None:
            readings.setdefault(pipe.from_node, []).append((pipe.id, inlet / setup.ratios[pipe.id]))
        if row.pressure_out is not None:
            readings.setdefault(pipe.to_node, []).append((pipe.id, row.pressure_out))

    for node in network.nodes:
        values = readings.get(node.id, [])
        reference = setup.slack.get(node.id)
        if reference is None and values:
            reference = values[0][1]
        if reference is None:
            continue
        setup.node_seed[node.id] = reference
        for pipe_id, value in values:
            residual = abs(value - reference) / reference
            if residual > PRESSURE_TOLERANCE:
                problems.append({'check': 'pressure', 'node': node.id, 'pipe': pipe_id, 'residual': residual})

    for node in network.nodes:
        if node.is_slack:
            continue
        inflow = sum(setup.flow_seed.get(p.id, 0.0) for p in network.pipes if p.to_node == node.id)
        outflow = sum(setup.flow_seed.get(p.id, 0.0) for p in network.pipes if p.from_node == node.id)
        supply, withdrawal = setup.flows[node.id]
        imbalance = inflow + supply - outflow - withdrawal
        scale = max(inflow + supply, outflow + withdrawal, 1e-12)
        if rows and abs(imbalance) / scale > BALANCE_TOLERANCE:
            problems.append({'check': 'balance', 'node': node.id, 'residual': imbalance})

    if problems:
        summary = '; '.join(f"{p['check']} at {p['node']} (residual {p['residual']:.3g})" for p in problems)
        raise InconsistentDataError(f"Initial data disagree: {summary}", {'violations': problems})


def _reconcile(network: NetworkSpec, plan: GridPlan, setup: _SteadySetup) -> Tuple[Dict[str, float], Dict[str, float]]:
    free_nodes = [node.id for node in network.nodes if not node.is_slack]
    pipe_ids = [pipe.id for pipe in network.pipes]
    p_scale = float(np.mean(list(setup.slack.values()))) if setup.slack else 1e6
    q_scale = max([abs(q) for q in setup.flow_seed.values()] + [1.0])

    def unpack(x):
        pressures = dict(setup.slack)
        for i, nid in enumerate(free_nodes):
            pressures[nid] = x[i] * p_scale
        flows = {pid: x[len(free_nodes) + k] * q_scale for k, pid in enumerate(pipe_ids)}
        return pressures, flows

    def residual(x):
        pressures, flows = unpack(x)
        out = []
        for pid in pipe_ids:
            grid = plan.pipes[pid]
            try:
                _, outlet = discrete_steady_profile(grid, flows[pid], setup.ratios[pid] * pressures[grid.from_node],
                                                    setup.gain_a, setup.gain_b)
            except PressureCollapseError:
                outlet = -pressures[grid.to_node]
            out.append((outlet - pressures[grid.to_node]) / p_scale)
        for nid in free_nodes:
            supply, withdrawal = setup.flows[nid]
            inflow = sum(flows[p] for p in pipe_ids if plan.pipes[p].to_node == nid)
            outflow = sum(flows[p] for p in pipe_ids if plan.pipes[p].from_node == nid)
            out.append((inflow + supply - outflow - withdrawal) / q_scale)
        return np.array(out)

    x0 = np.array([setup.node_seed.get(nid, p_scale) / p_scale for nid in free_nodes] +
                  [setup.flow_seed.get(pid, 0.0) / q_scale for pid in pipe_ids])
    solution = optimize.root(residual, x0, method='hybr', options={'xtol': 1e-14})
    worst = float(np.abs(residual(solution.x)).max()) if len(x0) else 0.0
    if worst > RECONCILE_TOLERANCE:
        raise InconsistentDataError(f"Steady state reconciliation did not converge: {solution.message}",
                                    {'residual': worst})
    pressures, flows = unpack(solution.x)
    logger.info(f"Reconciled steady state in {solution.nfev} evaluations (max residual {worst:.2e})")
    return pressures, flows


def _tabulated_pipes(network: NetworkSpec, plan: GridPlan, eos: EquationOfState,
                     setup: _SteadySetup) -> Tuple[Dict[str, PipeState], Dict[str, float]]:
    """Analytic profiles from the table, marched outward from the nodes with a known pressure.

    A node the table gives no pressure for takes the outlet pressure of the
    first profile that reaches it.
    """
    pressures = dict(setup.node_seed)
    mixture = GasSpecies('mixture', R=setup.gain_a / eos.temperature)
    rows = network.initial.pipes if network.initial is not None else {}
    pipes: Dict[str, PipeState] = {}
    pending = list(plan.pipes)
    while pending:
        reached = []
        for pid in pending:
            grid = plan.pipes[pid]
            row = rows.get(pid)
            flow = row.flow if row is not None else 0.0
            if row is not None and row.density_in is not None:
                inlet_density = row.density_in
            else:
                if row is not None and row.pressure_in is not None:
                    inlet_pressure = row.pressure_in
                elif grid.from_node in pressures:
                    inlet_pressure = setup.ratios[pid] * pressures[grid.from_node]
                else:
                    continue
                inlet_density = inlet_pressure / (setup.gain_a + inlet_pressure * setup.gain_b)
            flux = flow / grid.area
            rho = steady_pipe_profile(inlet_density, flux, grid, mixture, eos.temperature)
            pipes[pid] = PipeState(np.outer(setup.weights, rho), np.full(grid.cells + 1, flux), grid.dx)
            slope = grid.friction / (setup.gain_a * grid.diameter) * flux * abs(flux)
            outlet_density = math.sqrt(inlet_density ** 2 - slope * grid.length)
            pressures.setdefault(grid.to_node, outlet_density * setup.gain_a / (1.0 - outlet_density * setup.gain_b))
            reached.append(pid)
        if not reached:
            break
        pending = [pid for pid in pending if pid not in reached]
    return pipes, pressures


def init_network_steady(network: NetworkSpec, plan: GridPlan, eos: EquationOfState, reconcile: bool = True,
                        t: float = 0.0) -> NetworkState:
    """Steady initial state of the whole network.

    With reconcile, the tabulated data seed a root solve of the scheme's own
    discrete steady equations, so the result is an exact fixed point of the
    time step. Without it, each pipe gets the analytic profile from its
    tabulated inlet density and flow.
    """
    names = network.species_names
    weights = _initial_weights(network)
    setup = _SteadySetup(
        weights=weights,
        gain_a=float(np.dot(weights, eos.rt)),
        gain_b=float(np.dot(weights, eos.rta)),
        slack={n.id: slack_pressure(n, eos, names, t) for n in network.nodes if n.is_slack},
        flows={n.id: node_flows(n, t) for n in network.nodes if not n.is_slack},
        ratios={p.id: compressor_ratio(network, p.id, t) for p in network.pipes}
    )
    _seed_from_table(network, setup, eos)

    pipes: Dict[str, PipeState] = {}
    if reconcile:
        pressures, flows = _reconcile(network, plan, setup)
        for pid, grid in plan.pipes.items():
            rho, _ = discrete_steady_profile(grid, flows[pid], setup.ratios[pid] * pressures[grid.from_node],
                                             setup.gain_a, setup.gain_b)
            pipes[pid] = PipeState(np.outer(weights, rho), np.full(grid.cells + 1, flows[pid] / grid.area), grid.dx)
    else:
        pipes, pressures = _tabulated_pipes(network, plan, eos, setup)

    missing = [n.id for n in network.nodes if n.id not in pressures]
    if missing:
        raise InconsistentDataError(f"No initial pressure for nodes {missing}", {'nodes': missing})
    nodes = {nid: NodeState(p=p, d=eos.densities_at_pressure(p, weights), c=weights.copy())
             for nid, p in pressures.items()}
    logger.info(f"Initialized steady state for '{network.name}' ({'reconciled' if reconcile else 'tabulated'})")
    return NetworkState(t=t, pipes=pipes, nodes=nodes)


@dataclass
class CompatibilityReport:
    checks: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(check['ok'] for check in self.checks)

    def failures(self) -> List[Dict[str, Any]]:
        return [check for check in self.checks if not check['ok']]

    def add(self, check: str, item: str, residual: float, tolerance: float):
        self.checks.append({'check': check, 'item': item, 'residual': residual, 'ok': residual <= tolerance})

    def to_dict(self) -> Dict[str, Any]:
        return {'ok': self.ok, 'checks': self.checks}


def check_compatibility(state: NetworkState, network: NetworkSpec, plan: GridPlan, eos: EquationOfState,
                        t: float = 0.0, tolerance: float = 1e-4) -> CompatibilityReport:
    """Check an assembled initial state against the nodal conditions at time t."""
    report = CompatibilityReport()
    names = network.species_names
    for node in network.nodes:
        nodal = state.nodes[node.id]
        report.add('fraction-sum', node.id, abs(float(nodal.c.sum()) - 1.0), 1e-12)
        if node.is_slack:
            scheduled = slack_pressure(node, eos, names, t)
            report.add('slack-pressure', node.id, abs(nodal.p - scheduled) / scheduled, 1e-9)

    for pid, grid in plan.pipes.items():
        pipe = state.pipes[pid]
        ends = (
            (grid.from_node, 0, pipe.phi[0], compressor_ratio(network, pid, t)),
            (grid.to_node, grid.cells - 1, -pipe.phi[-1], 1.0),
        )
        for node_id, cell, psi, mu in ends:
            nodal = state.nodes[node_id]
            d_cell = pipe.d[:, cell]
            total = float(d_cell.sum())
            if psi > 0:
                report.add('composition', f"{pid}:{node_id}", float(np.abs(d_cell / total - nodal.c).max()), 1e-9)
            drag = grid.h * grid.friction * psi * abs(psi) / (2.0 * grid.diameter * total)
            p_cell = float(eos.pressure(d_cell))
            residual = abs(p_cell - (mu * nodal.p - drag)) / nodal.p
            report.add('boundary-pressure', f"{pid}:{node_id}", residual, tolerance)
    return report
