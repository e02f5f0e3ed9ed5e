import numpy as np
import pytest

from logic.errors import DegenerateStateError, NegativeDensityError
from logic.gas_core import EquationOfState, MixtureState
from logic.pipe_solver import (
    PipeState,
    add_diffusive_flux,
    solve_flux_quadratic,
    species_fluxes,
    update_densities,
    update_fluxes,
    upwind_species_flux,
)
from models.gas_species import default_species

T = 298.15


class TestPipeState:

    def test_shapes_are_checked(self):
        with pytest.raises(ValueError):
            PipeState(np.ones(4), np.zeros(5), 10.0)
        with pytest.raises(ValueError):
            PipeState(np.ones((2, 4)), np.zeros(4), 10.0)
        with pytest.raises(ValueError):
            PipeState(np.ones((2, 4)), np.zeros(5), 0.0)

    def test_copy_is_independent(self):
        state = PipeState(np.ones((2, 3)), np.zeros(4), 5.0)

        clone = state.copy()
        clone.d[0, 0] = 7.0

        assert state.d[0, 0] == 1.0
        assert state.cells == 3


class TestUpwinding:

    def setup_method(self):
        self.left = MixtureState(np.array([30.0, 10.0]), T)
        self.right = MixtureState(np.array([20.0, 0.0]), T)

    def test_positive_flux_takes_left_fraction(self):
        assert upwind_species_flux(8.0, self.left, self.right, 1) == pytest.approx(2.0)

    def test_negative_flux_takes_right_fraction(self):
        assert upwind_species_flux(-8.0, self.left, self.right, 1) == 0.0
        assert upwind_species_flux(-8.0, self.left, self.right, 0) == pytest.approx(-8.0)

    def test_empty_upstream_cell(self):
        with pytest.raises(DegenerateStateError):
            upwind_species_flux(1.0, MixtureState(np.zeros(2), T), self.right, 0)

    def test_boundary_edges_take_node_fractions_on_inflow(self):
        d = np.array([[30.0, 30.0, 30.0], [0.0, 0.0, 10.0]])
        phi = np.array([10.0, 10.0, -5.0, -5.0])
        c_start = np.array([0.5, 0.5])
        c_end = np.array([0.0, 1.0])

        fluxes = species_fluxes(phi, d, c_start, c_end)

        assert fluxes[:, 0] == pytest.approx([5.0, 5.0])
        assert fluxes[:, 1] == pytest.approx([10.0, 0.0])
        assert fluxes[:, 2] == pytest.approx([-3.75, -1.25])
        assert fluxes[:, 3] == pytest.approx([0.0, -5.0])

    def test_boundary_edges_take_cell_fractions_on_outflow(self):
        d = np.array([[30.0, 30.0], [10.0, 0.0]])
        phi = np.array([-4.0, 2.0, 6.0])

        fluxes = species_fluxes(phi, d, np.array([0.0, 1.0]), np.array([0.0, 1.0]))

        assert fluxes[:, 0] == pytest.approx([-3.0, -1.0])
        assert fluxes[:, 2] == pytest.approx([6.0, 0.0])

    def test_component_fluxes_sum_to_total(self):
        rng = np.random.default_rng(3)
        d = rng.uniform(1.0, 40.0, size=(2, 12))
        phi = rng.uniform(-50.0, 50.0, size=13)

        fluxes = species_fluxes(phi, d, np.array([0.9, 0.1]), np.array([0.8, 0.2]))

        assert fluxes.sum(axis=0) == pytest.approx(phi, rel=1e-13, abs=1e-12)


class TestDiffusion:

    def test_zero_coefficients_return_input(self):
        fluxes = np.ones((2, 4))
        assert add_diffusive_flux(fluxes, np.ones((2, 3)), [0.0, 0.0], 10.0) is fluxes

    def test_boundary_edges_are_closed(self):
        d = np.array([[1.0, 2.0, 4.0]])
        fluxes = np.zeros((1, 4))

        diffused = add_diffusive_flux(fluxes, d, [0.5], 2.0)

        assert diffused[0, 0] == 0.0
        assert diffused[0, -1] == 0.0
        assert diffused[0, 1:-1] == pytest.approx([-0.25, -0.5])
        assert np.all(fluxes == 0.0)


class TestDensityUpdate:

    def test_uniform_state_is_stationary(self):
        state = PipeState(np.full((2, 6), 20.0), np.full(7, 15.0), 100.0)
        fluxes = species_fluxes(state.phi, state.d, np.array([0.5, 0.5]), np.array([0.5, 0.5]))

        d_new = update_densities(state, fluxes, 0.1)

        assert np.array_equal(d_new, state.d)

    def test_boundary_cells_untouched(self):
        state = PipeState(np.array([[10.0, 10.0, 10.0, 10.0]]), np.zeros(5), 1.0)
        fluxes = np.array([[5.0, 4.0, 1.0, 3.0, 2.0]])

        d_new = update_densities(state, fluxes, 0.5)

        assert d_new[0, 0] == 10.0
        assert d_new[0, -1] == 10.0
        assert d_new[0, 1:3] == pytest.approx([11.5, 9.0])

    def test_interior_mass_changes_by_edge_fluxes(self):
        rng = np.random.default_rng(11)
        d = rng.uniform(20.0, 40.0, size=(2, 10))
        state = PipeState(d, rng.uniform(-5.0, 5.0, size=11), 500.0)
        fluxes = species_fluxes(state.phi, d, np.array([1.0, 0.0]), np.array([0.0, 1.0]))

        d_new = update_densities(state, fluxes, 0.5)

        change = (d_new[:, 1:-1] - d[:, 1:-1]).sum(axis=1) * state.dx
        assert change == pytest.approx(-(fluxes[:, -2] - fluxes[:, 1]) * 0.5, rel=1e-9, abs=1e-8)

    def test_negative_density_raises(self):
        state = PipeState(np.array([[40.0, 40.0, 1e-3, 40.0]]), np.zeros(5), 1.0)
        fluxes = np.array([[0.0, 0.0, 0.0, 100.0, 0.0]])

        with pytest.raises(NegativeDensityError) as error:
            update_densities(state, fluxes, 1.0)

        assert error.value.context['cell'] == 2


class TestFluxQuadratic:

    def test_residual_over_random_inputs(self):
        rng = np.random.default_rng(2024)
        a = 10.0 ** rng.uniform(-12.0, 2.0, size=100000)
        c = rng.uniform(-1e4, 1e4, size=100000)

        phi = solve_flux_quadratic(a, c)

        residual = np.abs(a * np.sign(phi) * phi ** 2 + phi - c)
        assert np.all(residual <= 1e-10 * np.maximum(1.0, np.abs(c)))
        assert np.all(np.sign(phi) == np.sign(c))

    def test_frictionless_returns_c(self):
        assert solve_flux_quadratic(0.0, 12.5) == 12.5

    def test_scalar_returns_float(self):
        assert isinstance(solve_flux_quadratic(1e-3, 4.0), float)

    def test_negative_coefficient_rejected(self):
        with pytest.raises(ValueError):
            solve_flux_quadratic(-1.0, 1.0)


class TestFluxUpdate:

    def setup_method(self):
        self.eos = EquationOfState(default_species(T), T, 'ideal')

    def test_no_gradient_no_flux(self):
        state = PipeState(np.array([[40.0] * 5, [0.0] * 5]), np.zeros(6), 1000.0)

        phi = update_fluxes(state, state.d, 0.5, self.eos, 0.9, 0.01)

        assert np.all(phi == 0.0)

    def test_pressure_gradient_drives_flow_downhill(self):
        d = np.array([[42.0, 41.0, 40.0, 39.0], [0.0, 0.0, 0.0, 0.0]])
        state = PipeState(d, np.zeros(5), 1000.0)

        phi = update_fluxes(state, d, 0.5, self.eos, 0.9, 0.01)

        assert np.all(phi[1:-1] > 0)
        assert phi[0] == 0.0 and phi[-1] == 0.0

    def test_friction_slows_flow(self):
        d = np.full((2, 4), 20.0)
        state = PipeState(d, np.full(5, 100.0), 1000.0)

        smooth = update_fluxes(state, d, 0.5, self.eos, 0.9, 1e-9)
        rough = update_fluxes(state, d, 0.5, self.eos, 0.9, 0.05)

        assert np.all(rough[1:-1] < smooth[1:-1])
        assert smooth[1:-1] == pytest.approx(100.0, rel=1e-6)
