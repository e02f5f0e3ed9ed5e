import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from logic.results_writer import (  # noqa: E402
    MANIFEST_FILE,
    MASS_BALANCE_FILE,
    NODES_FILE,
    PIPES_FILE,
    POLICY_EVENTS_FILE,
    read_series,
)

logger = logging.getLogger(__name__)

Series = Tuple[str, List[float]]


def _hours(columns: Dict[str, list]) -> List[float]:
    return [t / 3600.0 for t in columns['time_s']]


def _save(figure, output_dir: str, filename: str) -> str:
    file_path = os.path.join(output_dir, filename)
    # fixed metadata keeps repeated renders byte-identical
    figure.savefig(file_path, format='svg', metadata={'Date': None})
    plt.close(figure)
    return file_path


def _line_chart(output_dir: str, filename: str, title: str, ylabel: str, hours: List[float],
                series: Sequence[Series]) -> Optional[str]:
    if not series:
        logger.warning(f"⚠️ No series for {filename}; chart skipped")
        return None
    figure, axis = plt.subplots(figsize=(8, 4.5))
    for label, values in series:
        axis.plot(hours, values, label=label, linewidth=1.2)
    axis.set_title(title)
    axis.set_xlabel('time (h)')
    axis.set_ylabel(ylabel)
    axis.grid(True, alpha=0.3)
    axis.legend(loc='best', fontsize=8)
    figure.tight_layout()
    return _save(figure, output_dir, filename)


def _panels(output_dir: str, filename: str, title: str, hours: List[float],
            panels: Sequence[Tuple[str, str, Sequence[Series]]]) -> Optional[str]:
    if any(not series for _, _, series in panels):
        logger.warning(f"⚠️ Missing panel data for {filename}; chart skipped")
        return None
    figure, axes = plt.subplots(len(panels), 1, figsize=(8, 2.6 * len(panels)), sharex=True)
    for axis, (panel_title, ylabel, series) in zip(axes, panels):
        for label, values in series:
            axis.plot(hours, values, label=label, linewidth=1.2)
        axis.set_title(panel_title, fontsize=10)
        axis.set_ylabel(ylabel)
        axis.grid(True, alpha=0.3)
        axis.legend(loc='best', fontsize=8)
    axes[-1].set_xlabel('time (h)')
    figure.suptitle(title)
    figure.tight_layout()
    return _save(figure, output_dir, filename)


def _columns(columns: Dict[str, list], prefix: str = '', suffix: str = '') -> List[Series]:
    return [(name, values) for name, values in columns.items()
            if name != 'time_s' and name.startswith(prefix) and name.endswith(suffix)]


def _read_manifest(csv_dir: str) -> Dict:
    file_path = os.path.join(csv_dir, MANIFEST_FILE)
    if not os.path.exists(file_path):
        return {}
    with open(file_path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def emit_plots(csv_dir: str, output_dir: Optional[str] = None) -> List[str]:
    """Render SVG charts for the series found in a run directory.

    Returns:
        Paths of the charts written; missing series are skipped with a warning
    """
    output_dir = output_dir or csv_dir
    nodes = read_series(os.path.join(csv_dir, NODES_FILE))
    pipes = read_series(os.path.join(csv_dir, PIPES_FILE))
    balance = read_series(os.path.join(csv_dir, MASS_BALANCE_FILE))
    events = read_series(os.path.join(csv_dir, POLICY_EVENTS_FILE))
    if not (nodes or pipes or balance):
        logger.warning(f"⚠️ No result files in {csv_dir}; nothing to plot")
        return []
    os.makedirs(output_dir, exist_ok=True)

    network = _read_manifest(csv_dir).get('network', {})
    node_ids = [n['id'] for n in network.get('nodes', [])]
    slack_ids = [n['id'] for n in network.get('nodes', []) if n.get('kind') == 'slack']
    capped_ids = [n['id'] for n in network.get('nodes', []) if n.get('max_fraction')]
    pipe_ids = [p['id'] for p in network.get('pipes', [])]
    species = [s['name'] for s in network.get('species', [])]
    written: List[Optional[str]] = []

    if nodes:
        hours = _hours(nodes)
        inflow_nodes = slack_ids or node_ids
        inflow = [(f'{nid} inflow', nodes[f'{nid}_net_flow_kg_s']) for nid in inflow_nodes
                  if f'{nid}_net_flow_kg_s' in nodes]
        written.append(_line_chart(output_dir, 'inflow.svg', 'Slack node inflow', 'kg/s', hours, inflow))
        outlet = node_ids[-1] if node_ids else None
        pressure = [(f'{outlet} pressure', [p / 1e6 for p in nodes[f'{outlet}_p_Pa']])] \
            if outlet and f'{outlet}_p_Pa' in nodes else []
        written.append(_line_chart(output_dir, 'outlet_pressure.svg', 'Outlet node pressure', 'MPa', hours,
                                   pressure))
        fractions = [(name, values) for name, values in _columns(nodes) if '_c_' in name
                     and not (species and name.endswith(f'_c_{species[0]}'))]
        written.append(_line_chart(output_dir, 'fractions.svg', 'Nodal mass fractions', '-', hours, fractions))

        if capped_ids and outlet:
            capped = capped_ids[0]
            extra = species[1:] or species
            written.append(_panels(output_dir, 'monitoring_panels.svg', 'Nodal monitoring', hours, [
                ('Inflow', 'kg/s', inflow),
                ('Outlet pressure', 'MPa', pressure),
                (f'Fractions at {capped}', '-', [(n, nodes[f'{capped}_c_{n}']) for n in extra
                                                 if f'{capped}_c_{n}' in nodes]),
                (f'Fractions at {outlet}', '-', [(n, nodes[f'{outlet}_c_{n}']) for n in extra
                                                 if f'{outlet}_c_{n}' in nodes]),
            ]))
        elif events.get('time_s'):
            logger.warning("⚠️ Policy events present but no capped node in the manifest; monitoring chart skipped")

    if pipes:
        hours = _hours(pipes)
        last = pipe_ids[-1] if pipe_ids else None
        densities = _columns(pipes, prefix=f'{last}_d_end_') if last else []
        written.append(_line_chart(output_dir, 'partial_densities.svg', 'Outlet partial densities', 'kg/m^3',
                                   hours, densities))
        if len(pipe_ids) == 1 and len(species) == 2:
            pid = pipe_ids[0]
            written.append(_panels(output_dir, 'single_pipe_panels.svg', 'Single pipe', hours, [
                ('Inlet flux', 'kg/m^2/s', _columns(pipes, prefix=f'{pid}_phi_start')),
                (f'Outlet {species[0]}', 'kg/m^3', _columns(pipes, prefix=f'{pid}_d_end_{species[0]}')),
                (f'Outlet {species[1]}', 'kg/m^3', _columns(pipes, prefix=f'{pid}_d_end_{species[1]}')),
            ]))

    if balance:
        residuals = _columns(balance, suffix='_residual_kg_s')
        written.append(_line_chart(output_dir, 'mass_residual.svg', 'Mass balance residual', 'kg/s',
                                   _hours(balance), residuals))

    charts = [path for path in written if path]
    logger.info(f"📈 Wrote {len(charts)} charts to {output_dir}")
    return charts
