import copy
import json
import os

from logic.network import parse_network
from models.sim_config import SimConfig

ROOT = os.path.join(os.path.dirname(__file__), '..')
DATA_DIR = os.path.join(ROOT, 'data_files')
FIVE_NODE = os.path.join(DATA_DIR, 'five_node_network.json')
SINGLE_PIPE = os.path.join(DATA_DIR, 'single_pipe.json')
SCENARIOS = os.path.join(DATA_DIR, 'scenarios')


def scenario_path(name: str) -> str:
    return os.path.join(SCENARIOS, f'{name}.json')


def read_payload(path: str) -> dict:
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def config(**overrides) -> SimConfig:
    """Environment-independent configuration for tests."""
    values = {'monitor': True, 'output_dir': 'runs'}
    values.update(overrides)
    return SimConfig(**values)


def two_node_payload(pressure: float = 5e6, flow: float = 50.0, length: float = 10000.0, species=None) -> dict:
    """Slack inlet feeding one pipe into a withdrawal node, steady initial data included."""
    return {
        'name': 'two-node',
        'horizon': 3600,
        'species': species or [{'name': 'natural_gas', 'wave_speed': 377.9683}],
        'nodes': [
            {'id': 'A', 'kind': 'slack', 'pressure': {'kind': 'constant', 'value': pressure}},
            {'id': 'B', 'kind': 'flow', 'withdrawal': {'kind': 'constant', 'value': flow}}
        ],
        'pipes': [
            {'id': 'P', 'from_node': 'A', 'to_node': 'B', 'diameter': 0.5, 'length': length, 'friction': 0.011}
        ],
        'initial': {'pipes': {'P': {'flow': flow, 'pressure_in': pressure}}}
    }


def two_node_network(**kwargs):
    return parse_network(two_node_payload(**kwargs))


def modified(payload: dict, **changes) -> dict:
    result = copy.deepcopy(payload)
    result.update(changes)
    return result
