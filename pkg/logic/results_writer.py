import csv
import hashlib
import logging
import os
from importlib import metadata
from typing import Any, Dict, List, Optional

import orjson

from logic.diagnostics import MassBalanceReport
from logic.history import SimulationHistory
from logic.monitoring import PolicyEvent, coalesce_events

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
NODES_FILE = 'nodes.csv'
PIPES_FILE = 'pipes.csv'
MASS_BALANCE_FILE = 'mass_balance.csv'
POLICY_EVENTS_FILE = 'policy_events.csv'
MANIFEST_FILE = 'manifest.json'
FINAL_STATE_FILE = 'final_state.json'
ERROR_FILE = 'error.json'
TRACKED_PACKAGES = ('numpy', 'scipy', 'pydantic', 'orjson', 'matplotlib', 'SQLAlchemy')


def _fmt(value) -> str:
    return repr(float(value))


def dump_json(payload: Any) -> bytes:
    return orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)


def package_versions() -> Dict[str, Optional[str]]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


class ResultsWriter:
    """Writes the CSV time series and the manifest of one run into an output directory."""

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def _write_rows(self, filename: str, header: List[str], rows) -> str:
        file_path = self.path(filename)
        with open(file_path, 'w', encoding='utf-8', newline='') as csvfile:
            writer = csv.writer(csvfile, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow(row)
        return file_path

    def write_nodes(self, history: SimulationHistory) -> str:
        header = ['time_s']
        for node_id in history.node_ids:
            header.append(f'{node_id}_p_Pa')
            header.append(f'{node_id}_net_flow_kg_s')
            header.extend(f'{node_id}_c_{name}' for name in history.species)
            header.extend(f'{node_id}_d_{name}_kg_m3' for name in history.species)

        def rows():
            for record in history.records:
                row = [_fmt(record.t)]
                for node_id in history.node_ids:
                    row.append(_fmt(record.node_pressure[node_id]))
                    row.append(_fmt(record.node_net_flow[node_id]))
                    row.extend(_fmt(v) for v in record.node_fractions[node_id])
                    row.extend(_fmt(v) for v in record.node_densities[node_id])
                yield row

        return self._write_rows(NODES_FILE, header, rows())

    def write_pipes(self, history: SimulationHistory) -> str:
        header = ['time_s']
        for pipe_id in history.pipe_ids:
            header.extend([f'{pipe_id}_phi_start_kg_m2_s', f'{pipe_id}_phi_end_kg_m2_s', f'{pipe_id}_p_inlet_Pa'])
            header.extend(f'{pipe_id}_d_start_{name}_kg_m3' for name in history.species)
            header.extend(f'{pipe_id}_d_end_{name}_kg_m3' for name in history.species)

        def rows():
            for record in history.records:
                row = [_fmt(record.t)]
                for pipe_id in history.pipe_ids:
                    row.extend([_fmt(record.flux_start[pipe_id]), _fmt(record.flux_end[pipe_id]),
                                _fmt(record.inlet_pressure.get(pipe_id, float('nan')))])
                    row.extend(_fmt(v) for v in record.density_start[pipe_id])
                    row.extend(_fmt(v) for v in record.density_end[pipe_id])
                yield row

        return self._write_rows(PIPES_FILE, header, rows())

    def write_mass_balance(self, report: MassBalanceReport, dt: float, every: int = 1) -> str:
        header = ['time_s']
        for name in report.species + ['total']:
            header.extend([f'{name}_linepack_kg', f'{name}_external_kg_s', f'{name}_residual_kg_s'])
        header.append('relative_residual')

        def rows():
            steps = report.residual.shape[0]
            for step in range(steps):
                if step % every and step != steps - 1:
                    continue
                linepack = report.linepack[step + 1]
                external = report.external[step]
                residual = report.residual[step]
                row = [_fmt((step + 1) * dt)]
                for k in range(len(report.species)):
                    row.extend([_fmt(linepack[k]), _fmt(external[k]), _fmt(residual[k])])
                row.extend([_fmt(linepack.sum()), _fmt(external.sum()), _fmt(report.total[step])])
                row.append(_fmt(report.relative[step]))
                yield row

        return self._write_rows(MASS_BALANCE_FILE, header, rows())

    def write_policy_events(self, events: List[PolicyEvent], dt: float) -> str:
        """One row per run of consecutive steps that clamp the same node, policy and species."""
        header = ['time_s', 'end_time_s', 'steps', 'node', 'policy', 'species', 'planned_max_kg_s',
                  'applied_min_kg_s', 'limit', 'violation']
        rows = ([_fmt(i.start), _fmt(i.end), str(i.steps), i.node, i.policy, i.species or '', _fmt(i.planned),
                 _fmt(i.applied), _fmt(i.limit), str(i.violation).lower()] for i in coalesce_events(events, dt))
        return self._write_rows(POLICY_EVENTS_FILE, header, rows)

    def write_json(self, filename: str, payload: Any) -> str:
        file_path = self.path(filename)
        with open(file_path, 'wb') as handle:
            handle.write(dump_json(payload))
        return file_path

    def digest(self, file_path: str) -> str:
        sha = hashlib.sha256()
        with open(file_path, 'rb') as handle:
            for chunk in iter(lambda: handle.read(65536), b''):
                sha.update(chunk)
        return sha.hexdigest()

    def write_manifest(self, config: Dict[str, Any], network: Dict[str, Any], scenario: Optional[Dict[str, Any]],
                       files: List[str], summary: Optional[Dict[str, Any]] = None) -> str:
        manifest = {
            'schema_version': SCHEMA_VERSION,
            'config': config,
            'network': network,
            'scenario': scenario,
            'versions': package_versions(),
            'files': {os.path.basename(f): self.digest(f) for f in files},
            'summary': summary or {}
        }
        file_path = self.write_json(MANIFEST_FILE, manifest)
        logger.info(f"Wrote manifest with {len(files)} artifacts to {file_path}")
        return file_path

    def write_run(self, history: SimulationHistory, report: MassBalanceReport, dt: float, every: int,
                  final_state: Dict[str, Any]) -> List[str]:
        return [
            self.write_nodes(history),
            self.write_pipes(history),
            self.write_mass_balance(report, dt, every),
            self.write_policy_events(history.events, dt),
            self.write_json(FINAL_STATE_FILE, final_state),
        ]


def read_series(file_path: str) -> Dict[str, List[Any]]:
    """Columns of a results CSV; numeric columns as floats, the rest as strings."""
    if not os.path.exists(file_path):
        return {}
    with open(file_path, 'r', encoding='utf-8') as csvfile:
        reader = csv.DictReader(csvfile)
        columns: Dict[str, List[Any]] = {name: [] for name in (reader.fieldnames or [])}
        for row in reader:
            for name, value in row.items():
                try:
                    columns[name].append(float(value))
                except (TypeError, ValueError):
                    columns[name].append(value)
    return columns
