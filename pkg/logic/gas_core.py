import enum
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from logic.errors import (
    DegenerateStateError,
    NonPhysicalDensityError,
    NonPhysicalPressureError,
)
from models.gas_species import GasSpecies


ATM_TO_PA = 101325.0
PA_TO_PSI = 0.000145
KELVIN_TO_RANKINE = 1.8

# pressure (atm), compressibility factor; hydrogen at 298.15 K
HYDROGEN_Z_TABLE = (
    (83.731, 1.0503), (69.748, 1.0417), (52.613, 1.0312), (43.964, 1.0260),
    (33.291, 1.0196), (27.872, 1.0163), (21.155, 1.0123), (17.732, 1.0103),
    (13.478, 1.0078), (11.306, 1.0066), (8.6021, 1.0050), (7.2187, 1.0042),
    (5.4954, 1.0032), (4.6129, 1.0027), (3.5129, 1.0021),
)

ArrayLike = Union[float, np.ndarray]


class EOSMode(str, enum.Enum):
    IDEAL = "ideal"
    LINEAR_Z = "linear-z"

    @classmethod
    def parse(cls, value) -> "EOSMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"Unknown EOS mode '{value}', expected 'ideal' or 'linear-z'")


@dataclass(frozen=True)
class MixtureState:
    """Partial densities of every species, shape (n_species, ...), at one temperature."""

    d: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, 'd', np.asarray(self.d, dtype=float))

    @property
    def total_density(self) -> ArrayLike:
        return self.d.sum(axis=0)

    def mass_fractions(self) -> np.ndarray:
        total = self.total_density
        if np.any(total <= 0):
            raise DegenerateStateError("Mass fractions undefined for an empty mixture")
        return self.d / total


class EquationOfState:
    """Vectorized pressure/density closures for a fixed species set.

    In ideal mode the compressibility slopes are zeroed, so both modes share
    one code path and agree bit-for-bit when every slope is zero.
    """

    def __init__(self, species: Sequence[GasSpecies], temperature: float, mode=EOSMode.IDEAL):
        if not species:
            raise ValueError("Equation of state needs at least one species")
        if temperature <= 0:
            raise ValueError(f"Temperature must be positive, got {temperature}")
        self.species = list(species)
        self.temperature = float(temperature)
        self.mode = EOSMode.parse(mode)
        self.rt = np.array([s.R * self.temperature for s in self.species])
        slopes = np.array([s.a for s in self.species])
        if self.mode is EOSMode.IDEAL:
            slopes = np.zeros_like(slopes)
        self.slopes = slopes
        self.rta = self.rt * slopes

    @property
    def n_species(self) -> int:
        return len(self.species)

    def index(self, name: str) -> int:
        for position, s in enumerate(self.species):
            if s.name == name:
                return position
        raise KeyError(f"Unknown species '{name}'")

    def pressure(self, d) -> ArrayLike:
        d = np.asarray(d, dtype=float)
        if d.shape[0] != self.n_species:
            raise ValueError(f"Expected {self.n_species} partial densities, got {d.shape[0]}")
        total = d.sum(axis=0)
        if np.any(total <= 0):
            where = _first_index(total <= 0)
            raise DegenerateStateError("Pressure of an empty mixture is undefined", {'cell': where})
        numerator = np.tensordot(self.rt, d, axes=1)
        denominator = 1.0 - np.tensordot(self.rta, d, axes=1)
        if np.any(denominator <= 0):
            where = _first_index(denominator <= 0)
            raise NonPhysicalDensityError("Partial densities outside the admissible region (1 - sum d R T a <= 0)",
                                          {'cell': where})
        return numerator / denominator

    def individual_density(self, p: ArrayLike, index: int) -> ArrayLike:
        p = np.asarray(p, dtype=float)
        stretch = 1.0 + self.slopes[index] * p
        if np.any(p <= 0) or np.any(stretch <= 0):
            raise NonPhysicalPressureError(f"Pressure {p} is not admissible for species {self.species[index].name}")
        result = p / (self.rt[index] * stretch)
        return float(result) if result.ndim == 0 else result

    def densities_at_pressure(self, p: float, weights) -> np.ndarray:
        """Partial densities with mass proportions `weights` whose mixture pressure is p."""
        weights = np.asarray(weights, dtype=float)
        if p <= 0:
            raise NonPhysicalPressureError(f"Nodal pressure must be positive, got {p}")
        scale = float(np.dot(weights, self.rt * (1.0 + self.slopes * p)))
        if scale <= 0:
            raise DegenerateStateError("Cannot distribute densities over an empty composition")
        return p * weights / scale

    def compressibility(self, p: ArrayLike, index: int) -> ArrayLike:
        return 1.0 + self.slopes[index] * p

    def wave_speed(self, d) -> ArrayLike:
        """Mixture sound speed sqrt(dp/drho) along a fixed composition."""
        d = np.asarray(d, dtype=float)
        total = d.sum(axis=0)
        numerator = np.tensordot(self.rt, d, axes=1)
        denominator = 1.0 - np.tensordot(self.rta, d, axes=1)
        # p = total*A/(1 - total*B) with fixed fractions: dp/dtotal = A/(1 - total*B)^2
        return np.sqrt(numerator / total / denominator ** 2)


def _first_index(mask) -> object:
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return None
    hits = np.argwhere(mask)
    return tuple(int(v) for v in hits[0]) if len(hits) else None


def pressure(mix: MixtureState, species: Sequence[GasSpecies], mode=EOSMode.IDEAL) -> ArrayLike:
    """Mixture pressure (Pa) from partial densities.

    Args:
        mix: partial densities and temperature
        species: species in the same order as mix.d
        mode: 'ideal' or 'linear-z'

    Returns:
        (sum d R T) / (1 - sum d R T a), a treated as zero in ideal mode
    """
    eos = EquationOfState(species, mix.T, mode)
    result = eos.pressure(mix.d)
    return float(result) if np.ndim(result) == 0 else result


def individual_density(p: ArrayLike, s: GasSpecies, temperature: float, mode=EOSMode.LINEAR_Z) -> ArrayLike:
    return EquationOfState([s], temperature, mode).individual_density(p, 0)


def compressibility_factor(p: ArrayLike, s: GasSpecies) -> ArrayLike:
    return 1.0 + s.a * np.asarray(p, dtype=float)


def fit_linear_compressibility(samples: Iterable[Tuple[float, float]]) -> float:
    """Mean of (Z - 1)/p over (pressure Pa, Z) samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("At least one (pressure, Z) sample is required")
    slopes = []
    for p, z in samples:
        if p <= 0:
            raise ValueError(f"Sample pressures must be positive, got {p}")
        slopes.append((z - 1.0) / p)
    return float(np.mean(slopes))


def hydrogen_table_samples() -> List[Tuple[float, float]]:
    return [(p_atm * ATM_TO_PA, z) for p_atm, z in HYDROGEN_Z_TABLE]


def natural_gas_slope_from_gravity(gravity: float = 0.7, temperature: float = 298.15,
                                   z_reference: float = 0.7666, reduced_pressure: float = 2.0) -> float:
    """Linear Z slope (1/Pa) for natural gas from specific gravity.

    Uses the Sutton pseudo-critical correlations and one chart reading
    Z(P_pr) at the reduced temperature of interest.
    """
    t_pc = 169.2 + 349.5 * gravity - 74.0 * gravity ** 2
    p_pc = 756.8 - 131.07 * gravity - 3.6 * gravity ** 2
    if temperature * KELVIN_TO_RANKINE <= t_pc:
        raise ValueError("Temperature must exceed the pseudo-critical temperature")
    slope_reduced = (z_reference - 1.0) / reduced_pressure
    return slope_reduced / p_pc * PA_TO_PSI


def pseudo_reduced_temperature(gravity: float = 0.7, temperature: float = 298.15) -> float:
    t_pc = 169.2 + 349.5 * gravity - 74.0 * gravity ** 2
    return temperature * KELVIN_TO_RANKINE / t_pc


def wave_speed_bound(species: Sequence[GasSpecies], temperature: float, mode=EOSMode.IDEAL,
                     p_max: float = 10e6) -> float:
    """Upper bound on the sound speed, used only to size the time step."""
    if not species:
        raise ValueError("Wave speed bound needs at least one species")
    mode = EOSMode.parse(mode)
    bound = 0.0
    for s in species:
        z_cap = 1.0
        if mode is EOSMode.LINEAR_Z:
            z_cap = max(1.0, 1.0 + s.a * p_max)
        bound = max(bound, s.wave_speed(temperature) * math.sqrt(z_cap))
    return bound


def volumetric_fractions(mix: MixtureState, species: Sequence[GasSpecies], mode=EOSMode.IDEAL) -> np.ndarray:
    """Volume share gamma = d / rho(p) of each species; reporting only."""
    eos = EquationOfState(species, mix.T, mode)
    p = eos.pressure(mix.d)
    shares = np.array([mix.d[k] / eos.individual_density(p, k) for k in range(eos.n_species)])
    return shares
