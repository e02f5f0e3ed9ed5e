import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

from logic.errors import StabilityError
from logic.gas_core import wave_speed_bound
from models.network import CompressorSpec, NetworkSpec
from models.sim_config import SimConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipeGrid:
    id: str
    from_node: str
    to_node: str
    cells: int
    dx: float
    h: float
    area: float
    diameter: float
    friction: float
    length: float
    compressor: Optional[CompressorSpec] = None

    def centers(self):
        return [(i + 0.5) * self.dx for i in range(self.cells)]


@dataclass(frozen=True)
class GridPlan:
    pipes: Dict[str, PipeGrid]
    dt: float
    dt_bound: float
    wave_speed: float

    @property
    def total_cells(self) -> int:
        return sum(grid.cells for grid in self.pipes.values())

    def to_dict(self) -> Dict:
        return {
            'dt': self.dt,
            'dt_bound': self.dt_bound,
            'wave_speed': self.wave_speed,
            'total_cells': self.total_cells,
            'pipes': {pid: {'cells': g.cells, 'dx': g.dx, 'h': g.h} for pid, g in self.pipes.items()}
        }


def plan_grids(network: NetworkSpec, config: SimConfig) -> GridPlan:
    """Cell counts per pipe and one global time step.

    The step is cfl_safety * min dx / wave speed bound unless config.dt is
    set; an explicit dt above that bound is refused unless allow_unsafe_dt.
    """
    temperature = config.temperature or network.temperature
    pipes = {}
    for pipe in network.pipes:
        cells = pipe.cells or max(2, math.ceil(pipe.length / config.dx_target - 1e-9))
        dx = pipe.length / cells
        pipes[pipe.id] = PipeGrid(
            id=pipe.id,
            from_node=pipe.from_node,
            to_node=pipe.to_node,
            cells=cells,
            dx=dx,
            h=dx * config.spacing_factor,
            area=pipe.cross_section,
            diameter=pipe.diameter,
            friction=pipe.friction,
            length=pipe.length,
            compressor=network.compressor_for(pipe.id)
        )
    if not pipes:
        raise ValueError("Cannot plan grids for a network without pipes")
    speed = wave_speed_bound(network.gas_species(), temperature, config.eos, config.p_max)
    dt_bound = config.cfl_safety * min(grid.dx for grid in pipes.values()) / speed
    if config.dt is None:
        dt = dt_bound
    else:
        dt = config.dt
        if dt > dt_bound * (1.0 + 1e-12):
            message = f"Time step {dt:g} s exceeds the stability bound {dt_bound:.6g} s"
            if not config.allow_unsafe_dt:
                raise StabilityError(message, {'dt': dt, 'dt_bound': dt_bound})
            logger.warning(f"⚠️ {message}; continuing because unsafe time steps are allowed")
    plan = GridPlan(pipes=pipes, dt=dt, dt_bound=dt_bound, wave_speed=speed)
    logger.info(f"Planned {len(pipes)} pipes, {plan.total_cells} cells, "
                f"dt={dt:.6g} s (bound {dt_bound:.6g} s, wave speed {speed:.6g} m/s)")
    return plan
