import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from logic.errors import FlowReversalError, SimulationError
from logic.gas_core import EquationOfState, MixtureState, volumetric_fractions
from logic.grid_plan import GridPlan, PipeGrid, plan_grids
from logic.history import MassBalanceLedger, SimulationHistory, StepRecord
from logic.junction import (
    Endpoint,
    JunctionResult,
    apply_compressor,
    boundary_component_flux,
    solve_junction,
    split_withdrawal,
    update_boundary_densities,
)
from logic.monitoring import PolicyEvent, apply_policies
from logic.network import (
    END,
    START,
    adjacency,
    compressor_ratio,
    eval_composition,
    node_flows,
    slack_pressure,
)
from logic.pipe_solver import PipeState, add_diffusive_flux, species_fluxes, update_densities, update_fluxes
from logic.state import NetworkState
from logic.steady_init import init_network_steady
from models.network import NetworkSpec
from models.sim_config import SimConfig

logger = logging.getLogger(__name__)

__all__ = ['SimulationEngine', 'plan_grids', 'GridPlan', 'PipeGrid']


@dataclass
class _NodeInputs:
    supply: float
    withdrawal: float
    supply_c: np.ndarray
    slack_p: Optional[float]


class SimulationEngine:
    """Explicit staggered-grid time stepping over a whole network.

    One step takes densities at t_n and fluxes at t_n - dt/2 to densities at
    t_n + dt and fluxes at t_n + dt/2.
    """

    def __init__(self, network: NetworkSpec, config: Optional[SimConfig] = None, reconcile: bool = True,
                 freeze_time: Optional[float] = None, state: Optional[NetworkState] = None):
        self.network = network
        self.config = config or SimConfig.from_env()
        self.species_names = network.species_names
        temperature = self.config.temperature or network.temperature
        self.eos = EquationOfState(network.gas_species(), temperature, self.config.eos)
        self.plan = plan_grids(network, self.config)
        self.dt = self.plan.dt
        self.links = adjacency(network)
        self.nodes = {node.id: node for node in network.nodes}
        self.areas = {pid: grid.area for pid, grid in self.plan.pipes.items()}
        self.eps = np.array([s.eps for s in network.gas_species()])
        self.freeze_time = freeze_time
        self.state = state.copy() if state is not None else init_network_steady(network, self.plan, self.eos,
                                                                               reconcile=reconcile)
        self.reference_signs: Dict[Tuple[str, str], float] = {}
        self._reversals_reported = set()
        self._active_clamps = set()
        for pid, pipe in self.state.pipes.items():
            self._track_sign(pid, START, pipe.phi[0])
            self._track_sign(pid, END, pipe.phi[-1])
        self.ledger = MassBalanceLedger(self.species_names, self.dt)
        self.ledger.start(self.state.linepack(self.areas))
        self.events: List[PolicyEvent] = []
        self.max_nodal_imbalance = 0.0
        self._executor = ThreadPoolExecutor(max_workers=self.config.workers) if self.config.workers > 1 else None

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def _schedule_times(self, t: float) -> Tuple[float, float]:
        if self.freeze_time is not None:
            return self.freeze_time, self.freeze_time
        return t, t + 0.5 * self.dt

    def _flux_floor(self, pid: str) -> float:
        return self.config.flow_floor / self.areas[pid]

    def _track_sign(self, pid: str, side: str, flux: float):
        if abs(flux) > self._flux_floor(pid):
            self.reference_signs.setdefault((pid, side), math.copysign(1.0, flux))

    def _check_reversal(self, pid: str, side: str, flux: float, t: float):
        reference = self.reference_signs.get((pid, side))
        if reference is None:
            self._track_sign(pid, side, flux)
            return
        if abs(flux) <= self._flux_floor(pid) or math.copysign(1.0, flux) == reference:
            return
        context = {'time': t, 'pipe': pid, 'side': side, 'flux': flux}
        if not self.config.permissive_reversals:
            raise FlowReversalError(f"Flow reversed at the {side} of pipe {pid}", context)
        if (pid, side) not in self._reversals_reported:
            logger.warning(f"⚠️ Flow reversed at the {side} of pipe {pid} at t={t:.2f}s; "
                           f"nodal mixing assumes the original direction")
            self._reversals_reported.add((pid, side))

    def _endpoints(self, node_id: str, ratios: Dict[str, float], pressures: Dict[str, np.ndarray]) -> List[Endpoint]:
        endpoints = []
        for pid, side in self.links[node_id]:
            grid = self.plan.pipes[pid]
            pipe = self.state.pipes[pid]
            if side == START:
                psi_prev, cell, mu = pipe.phi[0], 0, ratios[pid]
            else:
                psi_prev, cell, mu = -pipe.phi[-1], grid.cells - 1, 1.0
            endpoints.append(Endpoint(pipe_id=pid, side=side, area=grid.area, diameter=grid.diameter,
                                      friction=grid.friction, h=grid.h, mu=mu, psi_prev=float(psi_prev),
                                      d_cell=pipe.d[:, cell], p_cell=float(pressures[pid][cell])))
        return endpoints

    def _node_inputs(self, node_id: str, t_sched: float, t_flow: float) -> _NodeInputs:
        node = self.nodes[node_id]
        supply_c = eval_composition(node, self.species_names, t_flow)
        if node.is_slack:
            return _NodeInputs(0.0, 0.0, supply_c, slack_pressure(node, self.eos, self.species_names, t_sched))
        supply, withdrawal = node_flows(node, t_flow)
        return _NodeInputs(supply, withdrawal, supply_c, None)

    def _apply_monitoring(self, node_id: str, inputs: _NodeInputs, endpoints: List[Endpoint], t: float):
        node = self.nodes[node_id]
        if not self.config.monitor or node.is_slack or not (node.max_fraction or node.min_pressure is not None):
            return inputs
        supply, withdrawal, events = apply_policies(node_id, t, endpoints, self.dt, inputs.supply,
                                                    inputs.withdrawal, inputs.supply_c, self.species_names,
                                                    node.max_fraction, node.min_pressure)
        active = {(e.node, e.policy) for e in events}
        for key in active - self._active_clamps:
            logger.warning(f"⚠️ Policy {key[1]} started clamping node {key[0]} at t={t:.2f}s")
        for key in {k for k in self._active_clamps if k[0] == node_id} - active:
            logger.info(f"Policy {key[1]} released node {key[0]} at t={t:.2f}s")
        self._active_clamps = {k for k in self._active_clamps if k[0] != node_id} | active
        self.events.extend(events)
        return _NodeInputs(supply, withdrawal, inputs.supply_c, inputs.slack_p)

    def _advance_pipe(self, pid: str, boundary: Tuple[float, float], c_start: np.ndarray, c_end: np.ndarray,
                      outer: Tuple[np.ndarray, np.ndarray]) -> PipeState:
        grid = self.plan.pipes[pid]
        pipe = self.state.pipes[pid]
        try:
            phi = update_fluxes(pipe, pipe.d, self.dt, self.eos, grid.diameter, grid.friction)
            phi[0], phi[-1] = boundary
            fluxes = species_fluxes(phi, pipe.d, c_start, c_end, self.config.density_floor)
            fluxes[:, 0], fluxes[:, -1] = outer
            fluxes = add_diffusive_flux(fluxes, pipe.d, self.eps, grid.dx)
            d_new = update_densities(pipe, fluxes, self.dt)
            d_new[:, 0] = update_boundary_densities(pipe.d[:, 0], fluxes[:, 0], fluxes[:, 1], START,
                                                    self.dt, grid.dx)
            d_new[:, -1] = update_boundary_densities(pipe.d[:, -1], fluxes[:, -1], fluxes[:, -2], END,
                                                     self.dt, grid.dx)
        except SimulationError as e:
            raise e.with_context(pipe=pid, time=self.state.t)
        return PipeState(d_new, phi, grid.dx)

    def step(self) -> StepRecord:
        """Advance the whole network by one time step."""
        state = self.state
        t = state.t
        t_sched, t_flow = self._schedule_times(t)
        ratios = {pid: compressor_ratio(self.network, pid, t_sched) for pid in self.plan.pipes}
        pressures = {}
        for pid, pipe in state.pipes.items():
            try:
                pressures[pid] = self.eos.pressure(pipe.d)
            except SimulationError as e:
                raise e.with_context(pipe=pid, time=t)

        junctions: Dict[str, JunctionResult] = {}
        endpoints_by_node: Dict[str, List[Endpoint]] = {}
        for node_id in self.links:
            endpoints = self._endpoints(node_id, ratios, pressures)
            inputs = self._node_inputs(node_id, t_sched, t_flow)
            inputs = self._apply_monitoring(node_id, inputs, endpoints, t_flow)
            try:
                junctions[node_id] = solve_junction(endpoints, self.eos, self.dt, state.nodes[node_id].c,
                                                    supply=inputs.supply, withdrawal=inputs.withdrawal,
                                                    supply_c=inputs.supply_c, slack_pressure=inputs.slack_p,
                                                    flow_floor=self.config.flow_floor)
            except SimulationError as e:
                raise e.with_context(node=node_id, time=t)
            endpoints_by_node[node_id] = endpoints

        boundary = {pid: [0.0, 0.0] for pid in self.plan.pipes}
        outer = {pid: [None, None] for pid in self.plan.pipes}
        external = np.zeros(len(self.species_names))
        for node_id, result in junctions.items():
            nodal_out = np.zeros(len(self.species_names))
            for endpoint, psi in zip(endpoints_by_node[node_id], result.psi):
                slot = 0 if endpoint.side == START else 1
                boundary[endpoint.pipe_id][slot] = endpoint.oriented(psi)
                self._check_reversal(endpoint.pipe_id, endpoint.side, endpoint.oriented(psi), t)
                component = boundary_component_flux(endpoint, psi, result.node.c)
                outer[endpoint.pipe_id][slot] = component
                nodal_out += endpoint.area * endpoint.oriented(component)
            injected = result.supply * np.asarray(result.supply_c) - split_withdrawal(result.withdrawal, result.node)
            scale = max(result.supply + result.withdrawal, self.config.flow_floor, 1.0)
            self.max_nodal_imbalance = max(self.max_nodal_imbalance,
                                           float(np.abs(nodal_out - injected).sum()) / scale)
            external += injected

        pids = list(self.plan.pipes)
        args = [(pid, tuple(boundary[pid]), junctions[self.plan.pipes[pid].from_node].node.c,
                 junctions[self.plan.pipes[pid].to_node].node.c, tuple(outer[pid])) for pid in pids]
        if self._executor is not None:
            advanced = list(self._executor.map(lambda a: self._advance_pipe(*a), args))
        else:
            advanced = [self._advance_pipe(*a) for a in args]

        record = StepRecord(
            t=t,
            node_pressure={nid: r.node.p for nid, r in junctions.items()},
            node_fractions={nid: r.node.c.copy() for nid, r in junctions.items()},
            node_densities={nid: r.node.d.copy() for nid, r in junctions.items()},
            node_net_flow={nid: r.net_outflow for nid, r in junctions.items()},
            flux_start={pid: boundary[pid][0] for pid in pids},
            flux_end={pid: boundary[pid][1] for pid in pids},
            density_start={pid: state.pipes[pid].d[:, 0].copy() for pid in pids},
            density_end={pid: state.pipes[pid].d[:, -1].copy() for pid in pids},
            inlet_pressure={pid: apply_compressor(ratios[pid], junctions[self.plan.pipes[pid].from_node].node.p)
                            for pid in pids}
        )

        self.state = NetworkState(
            t=t + self.dt,
            pipes=dict(zip(pids, advanced)),
            nodes={nid: r.node for nid, r in junctions.items()},
            step_index=state.step_index + 1,
            net_flows=record.node_net_flow
        )
        self.ledger.record(external, self.state.linepack(self.areas))
        return record

    def run(self, t_end: float, progress: Optional[Callable[[int], None]] = None) -> SimulationHistory:
        """Step until t_end, recording every output_every-th step and the final one."""
        steps = max(1, int(round((t_end - self.state.t) / self.dt)))
        history = SimulationHistory(species=list(self.species_names), node_ids=list(self.links),
                                    pipe_ids=list(self.plan.pipes), areas=dict(self.areas), ledger=self.ledger)
        logger.info(f"🚀 Simulating '{self.network.name}' for {steps} steps of {self.dt:.6g} s")
        every = self.config.output_every
        for index in range(steps):
            record = self.step()
            if index % every == 0 or index == steps - 1:
                history.records.append(record)
            if progress is not None:
                progress(1)
        history.events = list(self.events)
        history.max_nodal_imbalance = self.max_nodal_imbalance
        history.steps = steps
        logger.info(f"✅ Finished at t={self.state.t:.2f}s with {len(history.events)} policy events")
        return history

    def final_state(self) -> Dict:
        """Serializable end state with per-pipe peak sound speed and nodal volume fractions."""
        payload = self.state.to_dict(self.species_names)
        payload['species_constants'] = {s.name: s.to_dict() for s in self.eos.species}
        for pid, pipe in self.state.pipes.items():
            payload['pipes'][pid]['max_wave_speed'] = float(np.max(self.eos.wave_speed(pipe.d)))
        for nid, node in self.state.nodes.items():
            shares = volumetric_fractions(MixtureState(node.d, self.eos.temperature), self.eos.species, self.eos.mode)
            payload['nodes'][nid]['volume_fractions'] = {name: float(shares[k])
                                                         for k, name in enumerate(self.species_names)}
        return payload
