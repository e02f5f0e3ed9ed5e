import json
import logging
import math
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import ValidationError

from logic.errors import CompressorRatioError, NetworkValidationError
from models.network import (
    ConstantSchedule,
    NetworkSpec,
    NodeSpec,
    PiecewiseLinearSchedule,
    ScenarioSpec,
    SinusoidSchedule,
    TanhRampSchedule,
)

logger = logging.getLogger(__name__)

COMPOSITION_TOLERANCE = 1e-9
DEFAULT_HORIZON = 86400.0
VALIDATION_SAMPLES = 2001

START = 'start'
END = 'end'


def eval_schedule(schedule, t: float) -> float:
    """Evaluate a schedule at time t >= 0 (wrapped modulo its period when set)."""
    if t < 0:
        raise ValueError(f"Schedules are defined for t >= 0, got {t}")
    if schedule.period is not None:
        t = math.fmod(t, schedule.period)
    if isinstance(schedule, ConstantSchedule):
        return schedule.value
    if isinstance(schedule, SinusoidSchedule):
        return schedule.base * (schedule.offset + schedule.amplitude * math.sin(schedule.omega * t + schedule.phase))
    if isinstance(schedule, PiecewiseLinearSchedule):
        times = [point[0] for point in schedule.points]
        values = [point[1] for point in schedule.points]
        return float(np.interp(t, times, values))
    if isinstance(schedule, TanhRampSchedule):
        return schedule.base + schedule.amplitude * math.tanh(schedule.rate * (t - schedule.center))
    raise TypeError(f"Unsupported schedule type {type(schedule).__name__}")


def schedule_breakpoints(schedule) -> List[float]:
    if isinstance(schedule, PiecewiseLinearSchedule):
        return [point[0] for point in schedule.points]
    return []


def eval_composition(node: NodeSpec, species_names: List[str], t: float) -> np.ndarray:
    """Supply mass fractions in species order; one omitted species takes the balance."""
    fractions = np.zeros(len(species_names))
    missing = []
    for position, name in enumerate(species_names):
        if name in node.composition:
            fractions[position] = eval_schedule(node.composition[name], t)
        else:
            missing.append(position)
    if len(species_names) == 1 and not node.composition:
        fractions[0] = 1.0
    elif len(missing) == 1:
        fractions[missing[0]] = 1.0 - fractions.sum()
    elif len(missing) > 1 and node.composition:
        raise ValueError(f"Node {node.id}: composition leaves {len(missing)} species unspecified")
    return fractions


@dataclass
class ValidationReport:
    violations: List[Dict[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, item: str, message: str):
        self.violations.append({'code': code, 'item': item, 'message': message})

    def codes(self) -> List[str]:
        return [v['code'] for v in self.violations]

    def to_dict(self) -> Dict[str, Any]:
        return {'ok': self.ok, 'violations': self.violations}

    def raise_for_violations(self):
        if not self.ok:
            summary = '; '.join(f"{v['code']} at {v['item']}" for v in self.violations)
            raise NetworkValidationError(f"Network failed validation: {summary}", self.violations)


def _sample_times(network: NetworkSpec) -> np.ndarray:
    horizon = network.horizon or DEFAULT_HORIZON
    times = set(np.linspace(0.0, horizon, VALIDATION_SAMPLES).tolist())
    schedules = []
    for node in network.nodes:
        schedules.extend(s for s in (node.pressure, node.density, node.withdrawal, node.injection) if s is not None)
        schedules.extend(node.composition.values())
    schedules.extend(c.ratio for c in network.compressors)
    for schedule in schedules:
        times.update(t for t in schedule_breakpoints(schedule) if 0 <= t <= horizon)
    return np.array(sorted(times))


def _components(network: NetworkSpec) -> List[List[str]]:
    neighbours = {node.id: set() for node in network.nodes}
    for pipe in network.pipes:
        if pipe.from_node in neighbours and pipe.to_node in neighbours:
            neighbours[pipe.from_node].add(pipe.to_node)
            neighbours[pipe.to_node].add(pipe.from_node)
    seen = set()
    components = []
    for node in network.nodes:
        if node.id in seen:
            continue
        component = []
        queue = deque([node.id])
        seen.add(node.id)
        while queue:
            current = queue.popleft()
            component.append(current)
            for other in sorted(neighbours[current]):
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
        components.append(component)
    return components


def validate(network: NetworkSpec) -> ValidationReport:
    """Check the well-posedness conditions of a parsed network.

    Returns:
        ValidationReport listing every violation found (empty when valid)
    """
    report = ValidationReport()
    node_ids = [node.id for node in network.nodes]
    pipe_ids = [pipe.id for pipe in network.pipes]
    species_names = network.species_names

    for label, ids in (('node', node_ids), ('pipe', pipe_ids), ('compressor', [c.id for c in network.compressors])):
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        for duplicate in duplicates:
            report.add('duplicate-id', duplicate, f"{label} id '{duplicate}' is used more than once")

    known_nodes = set(node_ids)
    for pipe in network.pipes:
        for end in (pipe.from_node, pipe.to_node):
            if end not in known_nodes:
                report.add('unknown-node', pipe.id, f"pipe {pipe.id} references unknown node '{end}'")
        if pipe.from_node == pipe.to_node:
            report.add('self-loop', pipe.id, f"pipe {pipe.id} starts and ends at {pipe.from_node}")

    if not network.nodes:
        report.add('empty-network', network.name, "network has no nodes")
        return report

    components = _components(network)
    if len(components) > 1:
        report.add('disconnected', network.name,
                   f"network splits into {len(components)} components: " +
                   ' | '.join(','.join(c) for c in components))
    slack_ids = {node.id for node in network.nodes if node.is_slack}
    for component in components:
        if not slack_ids.intersection(component):
            report.add('missing-slack', component[0],
                       f"no slack node in the component containing {','.join(component)}")

    adjacent = {node_id: 0 for node_id in node_ids}
    for pipe in network.pipes:
        for end in (pipe.from_node, pipe.to_node):
            if end in adjacent:
                adjacent[end] += 1
    for node_id, count in adjacent.items():
        if count == 0 and len(network.nodes) > 1:
            report.add('isolated-node', node_id, f"node {node_id} has no adjacent pipes")

    times = _sample_times(network)
    for node in network.nodes:
        _validate_node(node, species_names, times, report)

    compressed = []
    for compressor in network.compressors:
        if compressor.pipe not in set(pipe_ids):
            report.add('unknown-pipe', compressor.id,
                       f"compressor {compressor.id} boosts nonexistent pipe '{compressor.pipe}'")
            continue
        if compressor.pipe in compressed:
            report.add('duplicate-compressor', compressor.id, f"pipe {compressor.pipe} already has a compressor")
        compressed.append(compressor.pipe)
        ratios = np.array([eval_schedule(compressor.ratio, t) for t in times])
        if np.any(ratios < 1.0):
            worst = float(ratios.min())
            report.add('ratio-below-one', compressor.id,
                       f"compressor {compressor.id} ratio drops to {worst:.6g} < 1")

    if network.initial is not None:
        for pipe_id, row in network.initial.pipes.items():
            if pipe_id not in set(pipe_ids):
                report.add('unknown-pipe', pipe_id, f"initial data given for unknown pipe '{pipe_id}'")
            elif row.pressure_in is None and row.density_in is None:
                report.add('missing-initial', pipe_id, f"initial data for {pipe_id} needs pressure_in or density_in")
        unknown = set(network.initial.composition) - set(species_names)
        if unknown:
            report.add('unknown-species', 'initial', f"initial composition names unknown species {sorted(unknown)}")
        elif network.initial.composition:
            total = sum(network.initial.composition.values())
            if abs(total - 1.0) > COMPOSITION_TOLERANCE:
                report.add('composition-sum', 'initial', f"initial composition sums to {total:.12g}")

    return report


def _validate_node(node: NodeSpec, species_names: List[str], times: np.ndarray, report: ValidationReport):
    if node.is_slack:
        if (node.pressure is None) == (node.density is None):
            report.add('slack-boundary', node.id, f"slack node {node.id} needs exactly one of pressure or density")
        if node.withdrawal is not None or node.injection is not None:
            report.add('slack-boundary', node.id, f"slack node {node.id} cannot prescribe flows")
    else:
        if node.pressure is not None or node.density is not None:
            report.add('flow-boundary', node.id, f"flow node {node.id} cannot prescribe a pressure")
        withdrawal = np.array([eval_schedule(node.withdrawal, t) for t in times]) if node.withdrawal else None
        injection = np.array([eval_schedule(node.injection, t) for t in times]) if node.injection else None
        if withdrawal is not None and np.any(withdrawal < 0):
            report.add('negative-flow', node.id, f"withdrawal at {node.id} becomes negative")
        if injection is not None and np.any(injection < 0):
            report.add('negative-flow', node.id, f"injection at {node.id} becomes negative")
        if withdrawal is not None and injection is not None:
            both = (withdrawal > 0) & (injection > 0)
            if np.any(both):
                first = float(times[np.argmax(both)])
                report.add('complementarity', node.id,
                           f"node {node.id} both injects and withdraws at t={first:g} s")

    unknown = set(node.composition) - set(species_names)
    if unknown:
        report.add('unknown-species', node.id, f"composition at {node.id} names unknown species {sorted(unknown)}")
        return
    needs_composition = node.is_slack or node.injection is not None
    if needs_composition and len(species_names) > 1 and not node.composition:
        report.add('missing-composition', node.id, f"node {node.id} supplies gas without a composition")
    elif node.composition:
        omitted = len(species_names) - len(node.composition)
        if omitted > 1:
            report.add('composition-sum', node.id, f"composition at {node.id} leaves {omitted} species unspecified")
        else:
            sums = np.array([sum(eval_schedule(s, t) for s in node.composition.values()) for t in times])
            if omitted == 0 and np.any(np.abs(sums - 1.0) > COMPOSITION_TOLERANCE):
                worst = float(sums[np.argmax(np.abs(sums - 1.0))])
                report.add('composition-sum', node.id, f"composition at {node.id} sums to {worst:.12g}")
            elif omitted == 1 and np.any(sums > 1.0 + COMPOSITION_TOLERANCE):
                report.add('composition-sum', node.id, f"specified fractions at {node.id} exceed 1")
            lows = [eval_schedule(s, t) for s in node.composition.values() for t in times[:: max(1, len(times) // 50)]]
            if min(lows) < -COMPOSITION_TOLERANCE:
                report.add('composition-sum', node.id, f"composition at {node.id} has a negative fraction")

    for name, cap in node.max_fraction.items():
        if name not in species_names:
            report.add('unknown-species', node.id, f"fraction cap at {node.id} names unknown species '{name}'")
        elif not 0 < cap <= 1:
            report.add('monitoring-limit', node.id, f"fraction cap {cap} at {node.id} must lie in (0, 1]")
    if node.min_pressure is not None and node.min_pressure <= 0:
        report.add('monitoring-limit', node.id, f"pressure floor at {node.id} must be positive")


def adjacency(network: NetworkSpec) -> Dict[str, List[Tuple[str, str]]]:
    """Adjacent (pipe id, side) pairs per node, in file order."""
    links = {node.id: [] for node in network.nodes}
    for pipe in network.pipes:
        links[pipe.from_node].append((pipe.id, START))
        links[pipe.to_node].append((pipe.id, END))
    return links


def parse_network(payload: Dict[str, Any]) -> NetworkSpec:
    try:
        return NetworkSpec.model_validate(payload)
    except ValidationError as e:
        raise NetworkValidationError(f"Network file does not match the schema: {e.error_count()} error(s)",
                                     [{'code': 'schema', 'item': '.'.join(str(p) for p in err['loc']),
                                       'message': err['msg']} for err in e.errors()])


def parse_scenario(payload: Dict[str, Any]) -> ScenarioSpec:
    try:
        return ScenarioSpec.model_validate(payload)
    except ValidationError as e:
        raise NetworkValidationError(f"Scenario file does not match the schema: {e.error_count()} error(s)",
                                     [{'code': 'schema', 'item': '.'.join(str(p) for p in err['loc']),
                                       'message': err['msg']} for err in e.errors()])


def _read_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, 'r', encoding='utf-8') as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as e:
            raise NetworkValidationError(f"{path} is not valid JSON: {e}",
                                         [{'code': 'syntax', 'item': path, 'message': str(e)}])


def load_network(path: str) -> NetworkSpec:
    network = parse_network(_read_json(path))
    logger.info(f"Loaded network '{network.name}' from {path}: "
                f"{len(network.nodes)} nodes, {len(network.pipes)} pipes, {len(network.compressors)} compressors")
    return network


def load_scenario(path: str) -> ScenarioSpec:
    return parse_scenario(_read_json(path))


def canonical_roundtrip(network: NetworkSpec) -> bytes:
    return parse_network(json.loads(network.canonical_json())).canonical_json()


def compressor_ratio(network: NetworkSpec, pipe_id: str, t: float) -> float:
    compressor = network.compressor_for(pipe_id)
    if compressor is None:
        return 1.0
    ratio = eval_schedule(compressor.ratio, t)
    if ratio < 1.0:
        raise CompressorRatioError(f"Compressor {compressor.id} ratio {ratio:.6g} is below 1",
                                   {'compressor': compressor.id, 'time': t})
    return ratio


def node_flows(node: NodeSpec, t: float) -> Tuple[float, float]:
    """Scheduled (injection, withdrawal) of a flow node in kg/s."""
    supply = eval_schedule(node.injection, t) if node.injection is not None else 0.0
    withdrawal = eval_schedule(node.withdrawal, t) if node.withdrawal is not None else 0.0
    return supply, withdrawal


def slack_pressure(node: NodeSpec, eos, species_names: List[str], t: float) -> float:
    """Scheduled slack pressure; a density schedule is converted with the supply composition."""
    if node.pressure is not None:
        return eval_schedule(node.pressure, t)
    if node.density is None:
        raise ValueError(f"Node {node.id} has no pressure or density schedule")
    weights = eval_composition(node, species_names, t)
    return float(eos.pressure(eval_schedule(node.density, t) * weights))
