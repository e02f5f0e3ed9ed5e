import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from logic.errors import DegenerateStateError
from logic.junction import Endpoint

logger = logging.getLogger(__name__)

MAX_FRACTION = 'max-fraction'
MIN_PRESSURE = 'min-pressure'
DEGENERATE_DENOMINATOR = 1e-14


@dataclass
class PolicyEvent:
    time: float
    node: str
    policy: str
    species: Optional[str]
    planned: float
    applied: float
    limit: float
    violation: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class PolicyInterval:
    """Consecutive steps in which one policy clamped the same node and species."""

    start: float
    end: float
    steps: int
    node: str
    policy: str
    species: Optional[str]
    planned: float
    applied: float
    limit: float
    violation: bool


def coalesce_events(events: Sequence[PolicyEvent], dt: float) -> List[PolicyInterval]:
    """Merge per-step events into intervals; a gap of more than one step starts a new interval.

    planned is the largest planned flow of the interval and applied the smallest applied flow.
    """
    intervals: List[PolicyInterval] = []
    open_intervals: Dict[Tuple[str, str, Optional[str]], PolicyInterval] = {}
    for event in events:
        key = (event.node, event.policy, event.species)
        current = open_intervals.get(key)
        if current is not None and event.time - current.end <= 1.5 * dt:
            current.end = event.time
            current.steps += 1
            current.planned = max(current.planned, event.planned)
            current.applied = min(current.applied, event.applied)
            current.violation = current.violation or event.violation
            continue
        current = PolicyInterval(start=event.time, end=event.time, steps=1, node=event.node, policy=event.policy,
                                 species=event.species, planned=event.planned, applied=event.applied,
                                 limit=event.limit, violation=event.violation)
        open_intervals[key] = current
        intervals.append(current)
    return intervals


@dataclass
class ThetaUpsilon:
    """Flow-dependence data of one node: psi_k(F) = theta_k + gain_k * (upsilon + F / total_gain)."""

    theta: np.ndarray
    gain: np.ndarray
    area: np.ndarray
    upsilon: float
    total_gain: float

    def intercepts(self) -> np.ndarray:
        return self.theta + self.gain * self.upsilon

    def slopes(self) -> np.ndarray:
        return self.gain / self.total_gain

    def fluxes(self, net_supply: float) -> np.ndarray:
        return self.intercepts() + self.slopes() * net_supply

    def pressure(self, net_supply: float) -> float:
        return self.upsilon + net_supply / self.total_gain


def theta_upsilon(endpoints: Sequence[Endpoint], dt: float) -> ThetaUpsilon:
    """Split each next boundary flux into a flow-independent part and a nodal-pressure part.

    upsilon is the nodal pressure the node would take with no injection or
    withdrawal this step.
    """
    theta = np.array([e.theta(dt) for e in endpoints])
    gain = np.array([e.gain(dt) for e in endpoints])
    area = np.array([e.area for e in endpoints])
    total_gain = float(np.dot(area, gain))
    if total_gain <= 0:
        raise DegenerateStateError("Monitoring needs at least one adjacent pipe")
    upsilon = -float(np.dot(area, theta)) / total_gain
    return ThetaUpsilon(theta=theta, gain=gain, area=area, upsilon=upsilon, total_gain=total_gain)


def max_injection(data: ThetaUpsilon, cell_fractions: np.ndarray, c_max: float, c_supply: float) -> float:
    """Largest injection keeping the next nodal fraction of one species at or below c_max.

    Args:
        data: node flow dependence from theta_upsilon
        cell_fractions: that species' fraction in the cell adjacent to each endpoint
        c_max: fraction cap
        c_supply: that species' fraction in the injected gas

    Returns:
        Injection flow (kg/s) floored at 0; +inf when c_supply <= c_max
    """
    if c_supply <= c_max:
        return math.inf
    cell_fractions = np.asarray(cell_fractions, dtype=float)
    intercepts = data.intercepts()
    slopes = data.slopes()
    outgoing = data.fluxes(0.0) >= 0
    for _ in range(len(intercepts) + 2):
        weight = np.where(outgoing, c_max, cell_fractions) * data.area
        numerator = -float(np.dot(weight, intercepts))
        denominator = float(np.dot(weight, slopes)) - c_supply
        if abs(denominator) < DEGENERATE_DENOMINATOR:
            raise DegenerateStateError("Injection limit has a vanishing denominator", {'c_max': c_max})
        flow = numerator / denominator
        reclassified = data.fluxes(flow) >= 0
        if np.array_equal(reclassified, outgoing):
            break
        outgoing = reclassified
    else:
        logger.warning(f"⚠️ Injection limit did not settle on a flow direction split after "
                       f"{len(intercepts) + 2} passes; using the last estimate {flow:.6g} kg/s")
    return max(0.0, flow)


def max_withdrawal(data: ThetaUpsilon, p_min: float) -> Tuple[float, bool]:
    """Withdrawal that puts the nodal pressure exactly at p_min.

    Returns:
        (flow floored at 0, True when the floor was needed)
    """
    flow = -float(np.dot(data.area, data.theta)) - data.total_gain * p_min
    if flow < 0:
        return 0.0, True
    return flow, False


def apply_policies(node_id: str, time: float, endpoints: Sequence[Endpoint], dt: float, supply: float,
                   withdrawal: float, supply_c: np.ndarray, species_names: Sequence[str],
                   max_fraction: Dict[str, float], min_pressure: Optional[float]) -> Tuple[float, float, List[PolicyEvent]]:
    """Clamp planned nodal flows to the node's limits for this step.

    Returns:
        (applied supply, applied withdrawal, events for every clamp or violation)
    """
    events: List[PolicyEvent] = []
    if not max_fraction and min_pressure is None:
        return supply, withdrawal, events
    data = theta_upsilon(endpoints, dt)

    if supply > 0 and max_fraction:
        applied = supply
        for name, cap in sorted(max_fraction.items()):
            index = list(species_names).index(name)
            fractions = np.array([e.c_cell[index] for e in endpoints])
            try:
                limit = max_injection(data, fractions, cap, float(supply_c[index]))
            except DegenerateStateError as e:
                logger.warning(f"Injection limit at {node_id} is degenerate at t={time:.3f}: {e}; injection stopped")
                limit = 0.0
            if limit < applied:
                events.append(PolicyEvent(time=time, node=node_id, policy=MAX_FRACTION, species=name,
                                          planned=supply, applied=limit, limit=cap))
                applied = limit
        supply = applied

    if withdrawal > 0 and min_pressure is not None:
        limit, violated = max_withdrawal(data, min_pressure)
        if limit < withdrawal:
            events.append(PolicyEvent(time=time, node=node_id, policy=MIN_PRESSURE, species=None,
                                      planned=withdrawal, applied=limit, limit=min_pressure, violation=violated))
            withdrawal = limit

    for event in events:
        logger.debug(f"Policy {event.policy} clamped {event.node} at t={event.time:.2f}s: "
                     f"{event.planned:.6g} -> {event.applied:.6g} kg/s")
    return supply, withdrawal, events
