import os
from typing import Any, Dict, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator

load_dotenv()


def _optional_float(name: str) -> Optional[float]:
    value = os.getenv(name)
    if value is None or value.strip() == '':
        return None
    return float(value)


def _flag(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('on', 'true', '1', 'yes'):
        return True
    if text in ('off', 'false', '0', 'no'):
        return False
    raise ValueError(f"Expected on/off, got '{value}'")


class SimConfig(BaseModel):
    """Numerical and runtime settings of one simulation run."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    temperature: Optional[float] = Field(default=None, gt=0,
                                         description="Gas temperature (K); None keeps the network file value")
    dx_target: float = Field(default=1000.0, gt=0, description="Target cell size (m)")
    dt: Optional[float] = Field(default=None, gt=0, description="Explicit time step (s); None sizes it from the CFL bound")
    cfl_safety: float = Field(default=0.8, gt=0, le=1, description="Fraction of the CFL limit used for dt")
    eos: Literal['ideal', 'linear-z'] = Field(default='ideal', description="Equation of state mode")
    monitor: bool = Field(default=True, description="Apply nodal monitoring policies")
    output_every: int = Field(default=1, ge=1, description="Record every k-th step")
    p_max: float = Field(default=10e6, gt=0, description="Pressure ceiling used by the wave speed bound (Pa)")
    density_floor: float = Field(default=1e-8, gt=0, description="Minimum upstream density for upwind ratios")
    flow_floor: float = Field(default=1e-9, ge=0, description="Nodal throughflow below which fractions are held (kg/s)")
    boundary_spacing: Literal['half-cell', 'full-cell'] = Field(default='half-cell',
                                                               description="Node to first-cell spacing")
    workers: int = Field(default=1, ge=1, description="Threads for the per-pipe stages")
    permissive_reversals: bool = Field(default=False, description="Warn instead of failing on flow reversal")
    allow_unsafe_dt: bool = Field(default=False, description="Accept a dt above the CFL bound")
    output_dir: str = Field(default='runs', description="Root directory for run artifacts")

    @field_validator('monitor', 'permissive_reversals', 'allow_unsafe_dt', mode='before')
    @classmethod
    def _parse_flag(cls, value):
        return _flag(value)

    @classmethod
    def from_env(cls, **overrides) -> "SimConfig":
        """Defaults from SIM_* environment variables; keyword overrides win (None is ignored)."""
        values: Dict[str, Any] = {
            'temperature': _optional_float('SIM_TEMPERATURE'),
            'dx_target': float(os.getenv('SIM_DX_TARGET', '1000')),
            'dt': _optional_float('SIM_DT'),
            'cfl_safety': float(os.getenv('SIM_CFL_SAFETY', '0.8')),
            'eos': os.getenv('SIM_EOS', 'ideal'),
            'monitor': os.getenv('SIM_MONITOR', 'on'),
            'output_every': int(os.getenv('SIM_OUTPUT_EVERY', '1')),
            'p_max': float(os.getenv('SIM_P_MAX', '10e6')),
            'density_floor': float(os.getenv('SIM_DENSITY_FLOOR', '1e-8')),
            'flow_floor': float(os.getenv('SIM_FLOW_FLOOR', '1e-9')),
            'boundary_spacing': os.getenv('SIM_BOUNDARY_SPACING', 'half-cell'),
            'workers': int(os.getenv('SIM_WORKERS', '1')),
            'output_dir': os.getenv('SIM_OUTPUT_DIR', 'runs'),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def merged(self, **overrides) -> "SimConfig":
        changes = {key: value for key, value in overrides.items() if value is not None}
        if not changes:
            return self
        return SimConfig(**{**self.model_dump(), **changes})

    def with_scenario(self, scenario) -> "SimConfig":
        """Scenario values fill in settings; explicit overrides applied later take precedence."""
        return self.merged(dt=scenario.dt, dx_target=scenario.dx, eos=scenario.eos, monitor=scenario.monitor,
                           output_every=scenario.output_every,
                           permissive_reversals=scenario.permissive_reversals)

    @property
    def spacing_factor(self) -> float:
        return 0.5 if self.boundary_spacing == 'half-cell' else 1.0
