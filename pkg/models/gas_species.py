import math
from dataclasses import dataclass, asdict
from typing import Dict, List


REFERENCE_TEMPERATURE = 298.15
NATURAL_GAS_WAVE_SPEED = 377.9683
HYDROGEN_WAVE_SPEED = 1320.0

# linear Z slopes used by the network comparison runs
NATURAL_GAS_SLOPE = -0.25e-7
HYDROGEN_SLOPE = 0.59e-8

DEFAULT_SLOPES = {
    'natural_gas': NATURAL_GAS_SLOPE,
    'natural-gas': NATURAL_GAS_SLOPE,
    'methane': NATURAL_GAS_SLOPE,
    'hydrogen': HYDROGEN_SLOPE,
    'h2': HYDROGEN_SLOPE,
}


def default_slope(name: str) -> float:
    """Linear Z slope for a species name; 0 (ideal) for names without a default."""
    return DEFAULT_SLOPES.get(name.lower(), 0.0)


@dataclass(frozen=True)
class GasSpecies:
    name: str
    R: float
    a: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if not self.name:
            raise ValueError("Species name must not be empty")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"Species {self.name}: gas constant must be positive, got {self.R}")
        if not math.isfinite(self.a):
            raise ValueError(f"Species {self.name}: compressibility slope must be finite")
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError(f"Species {self.name}: diffusion coefficient must be >= 0, got {self.eps}")

    @classmethod
    def from_wave_speed(cls, name: str, wave_speed: float, temperature: float = REFERENCE_TEMPERATURE,
                        a: float = 0.0, eps: float = 0.0) -> "GasSpecies":
        return cls(name=name, R=wave_speed ** 2 / temperature, a=a, eps=eps)

    def wave_speed(self, temperature: float) -> float:
        return math.sqrt(self.R * temperature)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def default_species(temperature: float = REFERENCE_TEMPERATURE) -> List[GasSpecies]:
    """Natural gas and hydrogen with the wave speeds and slopes of the benchmark runs."""
    return [
        GasSpecies.from_wave_speed(name, speed, temperature, a=default_slope(name))
        for name, speed in (('natural_gas', NATURAL_GAS_WAVE_SPEED), ('hydrogen', HYDROGEN_WAVE_SPEED))
    ]
