from .database import DatabaseManager, Base
from .simulation_run import SimulationRun, SimulationRunHelper
from .run_status import RunStatus, RunStatusHelper, RunStatusEnum
from .run_summary import RunSummary, RunSummaryHelper
from .sim_config import SimConfig

__all__ = [
    'DatabaseManager', 'Base',
    'SimulationRun', 'SimulationRunHelper',
    'RunStatus', 'RunStatusHelper', 'RunStatusEnum',
    'RunSummary', 'RunSummaryHelper',
    'SimConfig'
]
