import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from logic.errors import DegenerateStateError, NegativeDensityError
from logic.gas_core import EquationOfState, MixtureState

logger = logging.getLogger(__name__)

NEGATIVE_TOLERANCE = 1e-12
SERIES_THRESHOLD = 1e-8


@dataclass
class PipeState:
    """Partial densities d (n_species, N) at cell centers and total flux phi (N + 1) at edges."""

    d: np.ndarray
    phi: np.ndarray
    dx: float

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.d.ndim != 2:
            raise ValueError("Pipe densities must have shape (n_species, cells)")
        if self.phi.shape != (self.d.shape[1] + 1,):
            raise ValueError(f"Expected {self.d.shape[1] + 1} edge fluxes, got {self.phi.shape[0]}")
        if self.dx <= 0:
            raise ValueError(f"Cell size must be positive, got {self.dx}")

    @property
    def cells(self) -> int:
        return self.d.shape[1]

    def copy(self) -> "PipeState":
        return PipeState(self.d.copy(), self.phi.copy(), self.dx)


def mass_fractions(d: np.ndarray, density_floor: float) -> np.ndarray:
    total = d.sum(axis=0)
    if np.any(total < density_floor):
        where = np.argwhere(np.atleast_1d(total < density_floor))
        raise DegenerateStateError("Upstream total density below the floor",
                                   {'cell': int(where[0][0]) if np.ndim(total) else None})
    return d / total


def upwind_species_flux(phi: float, d_left: MixtureState, d_right: MixtureState, alpha: int,
                        density_floor: float = 1e-8) -> float:
    """Component flux phi * c^alpha taken from the upstream side of an edge."""
    upstream = d_left if phi >= 0 else d_right
    total = float(np.sum(upstream.d))
    if total < density_floor:
        raise DegenerateStateError(f"Upstream total density {total:.3e} is below the floor {density_floor:.1e}")
    return phi * float(upstream.d[alpha]) / total


def species_fluxes(phi: np.ndarray, d: np.ndarray, c_start: np.ndarray, c_end: np.ndarray,
                   density_floor: float = 1e-8) -> np.ndarray:
    """Component fluxes at every edge of a pipe, shape (n_species, N + 1).

    Interior edges are upwinded between neighbouring cells; the two boundary
    edges take the nodal fractions c_start/c_end whenever gas flows into the
    pipe there.
    """
    fractions = mass_fractions(d, density_floor)
    n_species, cells = d.shape
    upstream = np.empty((n_species, cells + 1))
    interior = phi[1:-1] >= 0
    upstream[:, 1:-1] = np.where(interior, fractions[:, :-1], fractions[:, 1:])
    upstream[:, 0] = c_start if phi[0] >= 0 else fractions[:, 0]
    upstream[:, -1] = fractions[:, -1] if phi[-1] >= 0 else c_end
    return phi * upstream


def add_diffusive_flux(fluxes: np.ndarray, d: np.ndarray, eps: Sequence[float], dx: float) -> np.ndarray:
    """Add -eps * grad(d) on interior edges; boundary edges stay closed to diffusion."""
    eps = np.asarray(eps, dtype=float)
    if not np.any(eps > 0):
        return fluxes
    fluxes = fluxes.copy()
    fluxes[:, 1:-1] -= eps[:, None] * (d[:, 1:] - d[:, :-1]) / dx
    return fluxes


def _checked(updated: np.ndarray, offset: int = 0) -> np.ndarray:
    low = updated < -NEGATIVE_TOLERANCE
    if np.any(low):
        species, cell = np.argwhere(low)[0]
        raise NegativeDensityError(f"Partial density fell to {updated[species, cell]:.3e}",
                                   {'species': int(species), 'cell': int(cell) + offset})
    return np.where(updated < 0, 0.0, updated)


def update_densities(state: PipeState, fluxes: np.ndarray, dt: float) -> np.ndarray:
    """Advance the interior cells 1..N-2 by one step of the mass balance.

    Returns:
        Copy of state.d with interior cells at the new level; boundary cells untouched
    """
    d_new = state.d.copy()
    if state.cells > 2:
        ratio = dt / state.dx
        d_new[:, 1:-1] = _checked(state.d[:, 1:-1] - ratio * (fluxes[:, 2:-1] - fluxes[:, 1:-2]), offset=1)
    return d_new


def solve_flux_quadratic(a, c):
    """Root of a*sign(phi)*phi**2 + phi - c = 0 with sign(phi) = sign(c).

    Evaluated as 2c / (1 + sqrt(1 + 4a|c|)), which equals the textbook
    sign(c)(-1 + sqrt(1 + 4a|c|))/(2a) without its cancellation; tiny 4a|c|
    falls back to the series c(1 - a|c| + 2(a|c|)^2).
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(a < 0):
        raise ValueError("Quadratic friction coefficient must be non-negative")
    x = 4.0 * a * np.abs(c)
    small = x < SERIES_THRESHOLD
    ac = a * np.abs(c)
    series = c * (1.0 - ac + 2.0 * ac * ac)
    exact = 2.0 * c / (1.0 + np.sqrt(1.0 + x))
    result = np.where(small, series, exact)
    return float(result) if result.ndim == 0 else result


def update_fluxes(state: PipeState, d_new: np.ndarray, dt: float, eos: EquationOfState,
                  diameter: float, friction: float) -> np.ndarray:
    """Interior edge fluxes at the next flux level from the densities flanking each edge."""
    pressures = eos.pressure(d_new)
    totals = d_new.sum(axis=0)
    pair = totals[1:] + totals[:-1]
    k = friction / (2.0 * diameter)
    phi_old = state.phi[1:-1]
    a = dt * k / pair
    c = phi_old - (dt / state.dx) * (pressures[1:] - pressures[:-1]) - dt * k * phi_old * np.abs(phi_old) / pair
    phi_new = state.phi.copy()
    phi_new[1:-1] = solve_flux_quadratic(a, c)
    return phi_new
