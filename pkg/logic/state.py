from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from logic.junction import NodeState
from logic.pipe_solver import PipeState


@dataclass
class NetworkState:
    """Whole-network state: densities at time t, boundary and interior fluxes at t - dt/2."""

    t: float
    pipes: Dict[str, PipeState]
    nodes: Dict[str, NodeState]
    step_index: int = 0
    net_flows: Dict[str, float] = field(default_factory=dict)

    def copy(self) -> "NetworkState":
        return NetworkState(
            t=self.t,
            pipes={pid: pipe.copy() for pid, pipe in self.pipes.items()},
            nodes={nid: node.copy() for nid, node in self.nodes.items()},
            step_index=self.step_index,
            net_flows=dict(self.net_flows)
        )

    def linepack(self, areas: Dict[str, float]) -> np.ndarray:
        """Stored mass per species (kg)."""
        total = None
        for pid, pipe in self.pipes.items():
            mass = pipe.d.sum(axis=1) * pipe.dx * areas[pid]
            total = mass if total is None else total + mass
        return total

    def max_relative_change(self, other: "NetworkState") -> float:
        """Largest relative difference of any state variable against another state."""
        worst = 0.0
        for pid, pipe in self.pipes.items():
            ref = other.pipes[pid]
            d_scale = max(float(np.abs(ref.d).max()), 1e-300)
            phi_scale = max(float(np.abs(ref.phi).max()), 1.0)
            worst = max(worst, float(np.abs(pipe.d - ref.d).max()) / d_scale,
                        float(np.abs(pipe.phi - ref.phi).max()) / phi_scale)
        for nid, node in self.nodes.items():
            worst = max(worst, abs(node.p - other.nodes[nid].p) / abs(other.nodes[nid].p))
        return worst

    def to_dict(self, species_names: List[str]) -> Dict[str, Any]:
        return {
            't': self.t,
            'step': self.step_index,
            'species': list(species_names),
            'pipes': {
                pid: {
                    'dx': pipe.dx,
                    'd': {name: pipe.d[k].tolist() for k, name in enumerate(species_names)},
                    'phi': pipe.phi.tolist()
                } for pid, pipe in self.pipes.items()
            },
            'nodes': {
                nid: {
                    'p': node.p,
                    'c': {name: float(node.c[k]) for k, name in enumerate(species_names)},
                    'd': {name: float(node.d[k]) for k, name in enumerate(species_names)}
                } for nid, node in self.nodes.items()
            }
        }
