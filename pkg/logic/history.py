from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from logic.monitoring import PolicyEvent


@dataclass
class MassBalanceLedger:
    """Linepack per species after every step and the external flow applied in that step."""

    species: List[str]
    dt: float
    linepack: List[np.ndarray] = field(default_factory=list)
    external: List[np.ndarray] = field(default_factory=list)

    def start(self, linepack: np.ndarray):
        self.linepack = [np.array(linepack, dtype=float)]
        self.external = []

    def record(self, external: np.ndarray, linepack: np.ndarray):
        self.external.append(np.array(external, dtype=float))
        self.linepack.append(np.array(linepack, dtype=float))

    @property
    def steps(self) -> int:
        return len(self.external)

    def linepack_array(self) -> np.ndarray:
        return np.array(self.linepack).reshape(len(self.linepack), len(self.species))

    def external_array(self) -> np.ndarray:
        return np.array(self.external).reshape(len(self.external), len(self.species))


@dataclass
class StepRecord:
    """Quantities produced by one step, stamped with the step's start time t_n.

    Nodal pressures are at t_n; boundary fluxes, nodal fractions and net
    flows at t_n + dt/2; boundary-cell densities at t_n.
    """

    t: float
    node_pressure: Dict[str, float]
    node_fractions: Dict[str, np.ndarray]
    node_densities: Dict[str, np.ndarray]
    node_net_flow: Dict[str, float]
    flux_start: Dict[str, float]
    flux_end: Dict[str, float]
    density_start: Dict[str, np.ndarray]
    density_end: Dict[str, np.ndarray]
    inlet_pressure: Dict[str, float] = field(default_factory=dict)


@dataclass
class SimulationHistory:
    species: List[str]
    node_ids: List[str]
    pipe_ids: List[str]
    areas: Dict[str, float]
    ledger: MassBalanceLedger
    records: List[StepRecord] = field(default_factory=list)
    events: List[PolicyEvent] = field(default_factory=list)
    max_nodal_imbalance: float = 0.0
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([record.t for record in self.records])

    def node_series(self, node_id: str, quantity: str) -> np.ndarray:
        """'pressure', 'net_flow', 'fractions' or 'densities' for one node over the recorded times."""
        if quantity == 'pressure':
            return np.array([r.node_pressure[node_id] for r in self.records])
        if quantity == 'net_flow':
            return np.array([r.node_net_flow[node_id] for r in self.records])
        if quantity == 'fractions':
            return np.array([r.node_fractions[node_id] for r in self.records]).reshape(-1, len(self.species))
        if quantity == 'densities':
            return np.array([r.node_densities[node_id] for r in self.records]).reshape(-1, len(self.species))
        raise ValueError(f"Unknown node quantity '{quantity}'")

    def pipe_series(self, pipe_id: str, quantity: str) -> np.ndarray:
        """'flux_start', 'flux_end', 'inlet_pressure', 'density_start' or 'density_end' for one pipe."""
        if quantity in ('flux_start', 'flux_end', 'inlet_pressure'):
            return np.array([getattr(r, quantity)[pipe_id] for r in self.records])
        if quantity in ('density_start', 'density_end'):
            return np.array([getattr(r, quantity)[pipe_id] for r in self.records]).reshape(-1, len(self.species))
        raise ValueError(f"Unknown pipe quantity '{quantity}'")
