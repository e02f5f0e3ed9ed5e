import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from logic.errors import CompressorRatioError, DegenerateStateError, NegativeDensityError
from logic.gas_core import EquationOfState
from logic.network import START

logger = logging.getLogger(__name__)

NEGATIVE_TOLERANCE = 1e-12


@dataclass
class NodeState:
    p: float
    d: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.c = np.asarray(self.c, dtype=float)

    def copy(self) -> "NodeState":
        return NodeState(self.p, self.d.copy(), self.c.copy())


@dataclass
class Endpoint:
    """One pipe end seen from a node, with the flux oriented out of the node.

    psi_prev is the previous boundary flux (positive when gas leaves the node
    into the pipe); d_cell/p_cell describe the pipe cell adjacent to the node
    and h is the spacing between the node and that cell's center.
    """

    pipe_id: str
    side: str
    area: float
    diameter: float
    friction: float
    h: float
    mu: float
    psi_prev: float
    d_cell: np.ndarray
    p_cell: float

    @property
    def c_cell(self) -> np.ndarray:
        return self.d_cell / self.d_cell.sum()

    def theta(self, dt: float) -> float:
        drag = dt * self.friction / (2.0 * self.diameter) * self.psi_prev * abs(self.psi_prev) / self.d_cell.sum()
        return self.psi_prev - drag - (dt / self.h) * self.p_cell

    def gain(self, dt: float) -> float:
        return self.mu * dt / self.h

    def oriented(self, psi: float) -> float:
        """Convert an outward flux back to the pipe's own orientation."""
        return psi if self.side == START else -psi


def apply_compressor(mu: float, p_node: float) -> float:
    """Discharge pressure mu * p_node of a compressor at a pipe inlet."""
    if mu < 1.0:
        raise CompressorRatioError(f"Compression ratio {mu} is below 1", {'ratio': mu})
    return mu * p_node


def nodal_pressure(endpoints: Sequence[Endpoint], supply: float, withdrawal: float, dt: float) -> float:
    """Pressure that closes the nodal mass balance for the next boundary fluxes.

    Returns:
        (F^s - F^d - sum S Theta) / sum S g with g = mu dt / h per endpoint
    """
    total_gain = sum(e.area * e.gain(dt) for e in endpoints)
    if total_gain <= 0:
        raise DegenerateStateError("Nodal pressure undefined without adjacent pipes")
    theta_sum = sum(e.area * e.theta(dt) for e in endpoints)
    return (supply - withdrawal - theta_sum) / total_gain


def boundary_flux(endpoint: Endpoint, p_node: float, dt: float) -> float:
    """Outward boundary flux at the next flux level for a given nodal pressure."""
    return endpoint.theta(dt) + endpoint.gain(dt) * p_node


def nodal_mixture(endpoints: Sequence[Endpoint], psi: Sequence[float], supply: float, supply_c: np.ndarray,
                  withdrawal: float, p_node: float, eos: EquationOfState, previous_c: np.ndarray,
                  flow_floor: float = 1e-9) -> NodeState:
    """Mass fractions and partial densities of the gas leaving the node.

    Endpoints with psi < 0 deliver gas with their adjacent cell's fractions;
    the mixture leaves through endpoints with psi > 0 and the withdrawal.
    Below flow_floor total throughflow the previous fractions are held.
    """
    carried = supply * np.asarray(supply_c, dtype=float)
    leaving = withdrawal
    for endpoint, flux in zip(endpoints, psi):
        if flux < 0:
            carried = carried + endpoint.area * (-flux) * endpoint.c_cell
        else:
            leaving += endpoint.area * flux
    if leaving < flow_floor or carried.sum() <= 0:
        c = np.asarray(previous_c, dtype=float).copy()
    else:
        c = carried / carried.sum()
    d = eos.densities_at_pressure(p_node, c)
    return NodeState(p=p_node, d=d, c=c)


def boundary_component_flux(endpoint: Endpoint, psi: float, node_c: np.ndarray) -> np.ndarray:
    """Per-species flux through the boundary edge, in the pipe's orientation."""
    source = node_c if psi >= 0 else endpoint.c_cell
    return endpoint.oriented(psi) * np.asarray(source, dtype=float)


def update_boundary_densities(d_cell: np.ndarray, outer_flux: np.ndarray, inner_flux: np.ndarray, side: str,
                              dt: float, dx: float) -> np.ndarray:
    """Advance the cell adjacent to a node.

    outer_flux is the component flux at the node edge and inner_flux the one
    at the opposite edge of the cell, both in the pipe's orientation.
    """
    if side == START:
        updated = d_cell - (dt / dx) * (inner_flux - outer_flux)
    else:
        updated = d_cell - (dt / dx) * (outer_flux - inner_flux)
    low = updated < -NEGATIVE_TOLERANCE
    if np.any(low):
        species = int(np.argmax(low))
        raise NegativeDensityError(f"Boundary partial density fell to {updated[species]:.3e}",
                                   {'species': species, 'side': side})
    return np.where(updated < 0, 0.0, updated)


def split_withdrawal(withdrawal: float, node: NodeState) -> np.ndarray:
    if withdrawal < 0:
        raise ValueError(f"Withdrawal must be non-negative, got {withdrawal}")
    total = float(node.d.sum())
    if total <= 0:
        raise DegenerateStateError("Cannot split a withdrawal at an empty node")
    return withdrawal * node.d / total


@dataclass
class JunctionResult:
    node: NodeState
    psi: List[float] = field(default_factory=list)
    supply: float = 0.0
    withdrawal: float = 0.0
    supply_c: Optional[np.ndarray] = None

    @property
    def net_outflow(self) -> float:
        return self.supply - self.withdrawal


def solve_junction(endpoints: Sequence[Endpoint], eos: EquationOfState, dt: float, previous_c: np.ndarray,
                   supply: float = 0.0, withdrawal: float = 0.0, supply_c: Optional[np.ndarray] = None,
                   slack_pressure: Optional[float] = None, flow_floor: float = 1e-9) -> JunctionResult:
    """Nodal pressure, outward boundary fluxes and mixing for one node.

    A slack node uses slack_pressure verbatim; its implied net outflow becomes
    the supply (or the withdrawal when negative) used for mixing.
    """
    if supply_c is None:
        supply_c = previous_c
    if slack_pressure is None:
        p_node = nodal_pressure(endpoints, supply, withdrawal, dt)
    else:
        p_node = slack_pressure
    psi = [boundary_flux(e, p_node, dt) for e in endpoints]
    if slack_pressure is not None:
        net = sum(e.area * flux for e, flux in zip(endpoints, psi))
        supply, withdrawal = (net, 0.0) if net >= 0 else (0.0, -net)
    node = nodal_mixture(endpoints, psi, supply, supply_c, withdrawal, p_node, eos, previous_c, flow_floor)
    return JunctionResult(node=node, psi=psi, supply=supply, withdrawal=withdrawal, supply_c=np.asarray(supply_c))
