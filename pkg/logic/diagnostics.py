import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from logic.engine import SimulationEngine, plan_grids
from logic.history import MassBalanceLedger, SimulationHistory
from models.network import NetworkSpec, ScenarioSpec
from models.sim_config import SimConfig

logger = logging.getLogger(__name__)


@dataclass
class MassBalanceReport:
    species: List[str]
    residual: np.ndarray
    total: np.ndarray
    relative: np.ndarray
    linepack: np.ndarray
    external: np.ndarray

    @property
    def max_relative(self) -> float:
        return float(self.relative.max()) if self.relative.size else 0.0


def mass_balance_residual(source) -> MassBalanceReport:
    """Per-species dM/dt - external inflow for every recorded step.

    Accepts a SimulationHistory or a MassBalanceLedger. The relative series is
    |residual| * dt summed over species divided by the total linepack.
    """
    ledger: MassBalanceLedger = source.ledger if isinstance(source, SimulationHistory) else source
    linepack = ledger.linepack_array()
    external = ledger.external_array()
    residual = np.diff(linepack, axis=0) / ledger.dt - external
    total = residual.sum(axis=1)
    stored = linepack[1:].sum(axis=1)
    relative = np.abs(residual).sum(axis=1) * ledger.dt / np.where(stored > 0, stored, 1.0)
    return MassBalanceReport(species=list(ledger.species), residual=residual, total=total, relative=relative,
                             linepack=linepack, external=external)


@dataclass
class ConvergenceReport:
    levels: List[Dict[str, float]] = field(default_factory=list)
    differences: List[float] = field(default_factory=list)
    orders: List[float] = field(default_factory=list)
    errors: List[float] = field(default_factory=list)
    declined: bool = False
    message: str = ''

    @property
    def observed_order(self) -> Optional[float]:
        return self.orders[-1] if self.orders else None

    def to_dict(self) -> Dict:
        return {
            'levels': self.levels,
            'differences': self.differences,
            'orders': self.orders,
            'errors': self.errors,
            'observed_order': self.observed_order,
            'declined': self.declined,
            'message': self.message
        }


def restrict(fine: np.ndarray, factor: int) -> np.ndarray:
    """Average groups of `factor` neighbouring cells onto the coarse grid."""
    n_species, cells = fine.shape
    if cells % factor:
        raise ValueError(f"{cells} cells cannot be restricted by a factor {factor}")
    return fine.reshape(n_species, cells // factor, factor).mean(axis=2)


def _l2(fields: Dict[str, np.ndarray], dx: Dict[str, float]) -> float:
    return math.sqrt(sum(float(np.sum(values ** 2)) * dx[pid] for pid, values in fields.items()))


def _refined(network: NetworkSpec, cells: Dict[str, int]) -> NetworkSpec:
    payload = network.to_payload()
    payload['pipes'] = [{**pipe, 'cells': cells[pipe['id']]} for pipe in payload['pipes']]
    return NetworkSpec.model_validate(payload)


def convergence_study(network: NetworkSpec, config: SimConfig, t_end: float, levels: int = 3,
                      base_cells: int = 50, base_dt: Optional[float] = None) -> ConvergenceReport:
    """Self-refinement study: halve dx and dt together and compare final densities.

    Orders are log2 of successive differences ||u_h - R u_h/2|| / ||u_h/2 - R u_h/4||
    with R the pairwise cell restriction.
    """
    report = ConvergenceReport()
    if levels < 3:
        report.declined = True
        report.message = f"At least 3 refinement levels are needed, got {levels}"
        logger.warning(report.message)
        return report

    results = []
    for level in range(levels):
        factor = 2 ** level
        cells = {pipe.id: base_cells * factor for pipe in network.pipes}
        refined = _refined(network, cells)
        if base_dt is None:
            base_dt = plan_grids(_refined(network, {p.id: base_cells for p in network.pipes}), config).dt
        engine = SimulationEngine(refined, config.merged(dt=base_dt / factor))
        try:
            engine.run(t_end)
        finally:
            engine.close()
        final = {pid: pipe.d for pid, pipe in engine.state.pipes.items()}
        dx = {pid: grid.dx for pid, grid in engine.plan.pipes.items()}
        results.append((final, dx))
        report.levels.append({'cells': base_cells * factor, 'dt': engine.dt})
        logger.info(f"Refinement level {level}: {base_cells * factor} cells per pipe, dt={engine.dt:.6g} s")

    for level in range(levels - 1):
        coarse, dx = results[level]
        fine, _ = results[level + 1]
        report.differences.append(_l2({pid: coarse[pid] - restrict(fine[pid], 2) for pid in coarse}, dx))
    finest, _ = results[-1]
    for level in range(levels - 1):
        coarse, dx = results[level]
        factor = 2 ** (levels - 1 - level)
        report.errors.append(_l2({pid: coarse[pid] - restrict(finest[pid], factor) for pid in coarse}, dx))
    for first, second in zip(report.differences, report.differences[1:]):
        report.orders.append(math.log2(first / second) if second > 0 else math.inf)
    logger.info(f"Observed orders: {', '.join(f'{o:.3f}' for o in report.orders)}")
    return report


@dataclass
class DiffusionReport:
    rows: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {'rows': self.rows}


def _with_diffusivity(network: NetworkSpec, eps: float) -> NetworkSpec:
    overrides = {name: {'diffusivity': eps} for name in network.species_names}
    return network.with_scenario(ScenarioSpec(name=f'diffusivity-{eps:g}', t_end=1.0, species_overrides=overrides))


def diffusion_study(network: NetworkSpec, config: SimConfig, t_end: float, eps_values: Sequence[float] = (0.1,),
                    inlet_pipe: Optional[str] = None, outlet_pipe: Optional[str] = None) -> DiffusionReport:
    """Relative L2 change of the inlet flux and outlet partial densities caused by diffusion."""
    inlet_pipe = inlet_pipe or network.pipes[0].id
    outlet_pipe = outlet_pipe or network.pipes[-1].id

    def traces(candidate: NetworkSpec):
        engine = SimulationEngine(candidate, config)
        try:
            history = engine.run(t_end)
        finally:
            engine.close()
        return history.pipe_series(inlet_pipe, 'flux_start'), history.pipe_series(outlet_pipe, 'density_end')

    base_flux, base_density = traces(_with_diffusivity(network, 0.0))
    report = DiffusionReport()
    for eps in eps_values:
        flux, density = traces(_with_diffusivity(network, eps))
        row = {
            'eps': eps,
            'flux_difference': float(np.linalg.norm(flux - base_flux) / max(np.linalg.norm(base_flux), 1e-300))
        }
        for k, name in enumerate(network.species_names):
            scale = max(float(np.linalg.norm(base_density[:, k])), 1e-300)
            row[f'{name}_difference'] = float(np.linalg.norm(density[:, k] - base_density[:, k]) / scale)
        report.rows.append(row)
        logger.info(f"Diffusivity {eps:g}: inlet flux changes by {row['flux_difference']:.3e} (relative L2)")
    return report


def steady_hold_drift(network: NetworkSpec, config: SimConfig, steps: int = 1000, reconcile: bool = True) -> float:
    """Largest relative change of any state variable after `steps` steps with schedules frozen at t = 0."""
    engine = SimulationEngine(network, config, reconcile=reconcile, freeze_time=0.0)
    initial = engine.state.copy()
    try:
        for _ in range(steps):
            engine.step()
    finally:
        engine.close()
    drift = engine.state.max_relative_change(initial)
    logger.info(f"Steady hold drift after {steps} steps: {drift:.3e}")
    return drift
