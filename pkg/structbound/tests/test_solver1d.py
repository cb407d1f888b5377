import dataclasses

import numpy as np
import pytest
from scipy.integrate import trapezoid

from structbound.catalog import GaussianProfile
from structbound.config import ScenarioConfig
from structbound.core import lamb_parameters
from structbound.errors import InvalidSpec, NumericalBlowup
from structbound.kernels import KernelTerm, MemoryKernel, kernel_from_string_coupling
from structbound.model import BoundaryNodeSpec, InitialData, InteractionSpec, InteriorSpec1D, Scenario, \
    build_system, scenario_from_config
from structbound.solver1d import CoupledState1D, CoupledSystem, EndKind, FieldState1D, build_mtl, incoming_source, \
    integrate_reduced_boundary, integrate_reduced_boundary_picard, interface_force, interface_solve_residual, \
    interior_trace_response, lamb_analytic, massless_spring_boundary_decay, mismatch_forcing, outflow_far_boundary, \
    simulate, start_boundary, step_boundary, step_coupled, step_interior, telegrapher_fields, telegrapher_residual
from structbound.tests.conftest import CLOSED_TEXT, SCENARIO_DIR, scenario_from_text


def _load(name: str) -> Scenario:
    return scenario_from_config(ScenarioConfig.from_file(SCENARIO_DIR / f"{name}.conf"))


def _relative_sup(values, reference) -> float:
    return float(np.max(np.abs(np.asarray(values) - reference)) / np.max(np.abs(reference)))


def _lamb_error(scenario: Scenario) -> float:
    trajectory = simulate(build_system(scenario), with_ledger=False)
    times = np.array(trajectory.times)
    # the outgoing Gaussian has zero slope at the node, so the node starts at rest
    reference = lamb_analytic(m=1.0, T=1.0, a=1.0, k=1.0, psi0=1.0, v0=0.0, t=times)
    return _relative_sup(trajectory.boundary_series("b1"), reference)


class TestLamb:
    def test_coarse(self, lamb_scenario):
        assert _lamb_error(lamb_scenario) < 3e-2

    def test_acceptance_resolution(self):
        scenario = _load("lamb")
        assert scenario.interior.dz == pytest.approx(0.02)
        assert scenario.dt == pytest.approx(0.018)
        assert _lamb_error(scenario) < 1e-2

    @pytest.mark.slow
    def test_second_order(self):
        scenario = _load("lamb")
        errors = [_lamb_error(scenario.refined(factor)) for factor in (1, 2, 4)]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all((orders >= 1.8) & (orders <= 2.2)), orders

    def test_transmission_line_load(self):
        scenario = build_mtl(1.0, 1.0, 1.0, 1.0)
        assert scenario.interactions["b1"].kind.value == "rigid"
        assert _lamb_error(scenario) < 1e-2

    def test_lamb_parameters(self, lamb_scenario):
        lamb = lamb_parameters(lamb_scenario)
        assert (lamb.end, lamb.m, lamb.k, lamb.T, lamb.a, lamb.psi0) == ("b1", 1.0, 1.0, 1.0, 1.0, 1.0)
        assert abs(lamb.v0) < 1e-3

    def test_lamb_parameters_needs_one_open_end(self, closed_scenario):
        with pytest.raises(InvalidSpec):
            lamb_parameters(closed_scenario)


class TestRetardedCoupling:
    def test_full_system_matches_reduced_model(self):
        scenario = _load("retarded_lamb")
        lamb = lamb_parameters(scenario)
        trajectory = simulate(build_system(scenario), with_ledger=False)
        kernel = kernel_from_string_coupling(lamb.a, 2.0, lamb.T)
        reduced = integrate_reduced_boundary(lamb.m, lamb.k, kernel, lamb.psi0, scenario.t_end, scenario.dt, lamb.v0)
        times = np.array(trajectory.times)
        expected = np.interp(times, reduced.times, reduced.psi)
        assert _relative_sup(trajectory.boundary_series("b1"), expected) < 1e-2

    def test_rigid_limit_ladder(self):
        dt, t_end = 1e-3, 10.0
        times = dt * np.arange(int(round(t_end / dt)) + 1)
        reference = lamb_analytic(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, times)
        errors = []
        for k_tilde in (1.0, 10.0, 100.0, 1000.0):
            kernel = kernel_from_string_coupling(1.0, k_tilde, 1.0)
            reduced = integrate_reduced_boundary(1.0, 1.0, kernel, 1.0, t_end, dt)
            errors.append(_relative_sup(reduced.psi, reference))
        assert all(a > b for a, b in zip(errors, errors[1:]))
        assert errors[-1] < 1e-2

    def test_spring_rigid_switch(self, lamb_scenario):
        system = CoupledSystem(lamb_scenario.with_interaction("b1", InteractionSpec.spring(5.0)))
        assert system.ends["b1"].kind == EndKind.COUPLED
        assert CoupledSystem(lamb_scenario).ends["b1"].kind == EndKind.RIGID
        assert system.ends["b2"].kind == EndKind.OUTFLOW


class TestReducedModel:
    KERNEL = MemoryKernel((KernelTerm(c=2.0, decay=2.0),))

    def test_matches_picard_reference(self):
        dt, t_end = 1e-2, 2.0
        fast = integrate_reduced_boundary(1.0, 1.0, self.KERNEL, 1.0, t_end, dt)
        reference = integrate_reduced_boundary_picard(1.0, 1.0, self.KERNEL, 1.0, t_end, dt)
        np.testing.assert_allclose(fast.psi, reference.psi, atol=1e-3)

    @pytest.mark.slow
    def test_matches_picard_reference_fine(self):
        dt, t_end = 1e-3, 2.0
        fast = integrate_reduced_boundary(1.0, 1.0, self.KERNEL, 1.0, t_end, dt)
        reference = integrate_reduced_boundary_picard(1.0, 1.0, self.KERNEL, 1.0, t_end, dt)
        np.testing.assert_allclose(fast.psi, reference.psi, atol=1e-4)

    @pytest.mark.slow
    def test_string_coupling_kernel_matches_direct_quadrature(self):
        kernel = kernel_from_string_coupling(a=1.0, k_tilde=2.0, T=1.0)
        dt, t_end = 1e-4, 1.0
        fast = integrate_reduced_boundary(1.0, 1.0, kernel, 1.0, t_end, dt)
        reference = integrate_reduced_boundary_picard(1.0, 1.0, kernel, 1.0, t_end, dt)
        np.testing.assert_allclose(fast.psi, reference.psi, rtol=0, atol=1e-6)

    def test_instantaneous_friction_is_lamb(self):
        kernel = MemoryKernel((), alpha_inf=1.0)
        reduced = integrate_reduced_boundary(1.0, 1.0, kernel, 1.0, 10.0, 1e-3)
        np.testing.assert_allclose(reduced.psi, lamb_analytic(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, reduced.times), atol=1e-5)

    def test_forced_oscillator(self):
        # m psi'' + k psi = 1 from rest: psi = 1 - cos t
        reduced = integrate_reduced_boundary(1.0, 1.0, MemoryKernel(), 0.0, 5.0, 1e-3, force=lambda t: 1.0)
        np.testing.assert_allclose(reduced.psi, 1 - np.cos(reduced.times), atol=1e-5)

    def test_degenerate(self):
        with pytest.raises(InvalidSpec, match="degenerate"):
            integrate_reduced_boundary(0.0, 0.0, MemoryKernel(), 1.0, 1.0, 0.1)

    def test_mismatch_forcing(self):
        source = mismatch_forcing(a=1.0, k_tilde=2.0, T=1.0, psi_B0=0.5, psi_L0=0.1)
        assert source(0.0)[0] == pytest.approx(-0.8)
        assert source(1.0)[0] == pytest.approx(-0.8 * np.exp(-2.0))

    def test_interior_trace_response(self):
        dt = 0.01
        trace = interior_trace_response(1.0, 2.0, 1.0, 0.0, np.ones(301), dt)
        np.testing.assert_allclose(trace, 1 - np.exp(-2.0 * dt * np.arange(301)), atol=1e-12)

    def test_interior_trace_without_spring(self):
        np.testing.assert_array_equal(interior_trace_response(1.0, 0.0, 1.0, 0.3, np.ones(5), 0.1), np.full(5, 0.3))


class TestAnalytic:
    def test_lamb_initial_conditions(self):
        t = np.array([0.0, 1e-6])
        for T in (1.0, 2.0, 5.0):  # under-, critically and over-damped
            psi = lamb_analytic(1.0, T, 1.0, 1.0, 0.7, 0.2, t)
            assert psi[0] == pytest.approx(0.7)
            assert (psi[1] - psi[0]) / 1e-6 == pytest.approx(0.2, rel=1e-4)

    def test_lamb_critical_damping(self):
        t = np.linspace(0, 5, 11)
        expected = np.exp(-t) * (1.0 + 1.0 * t)
        np.testing.assert_allclose(lamb_analytic(1.0, 2.0, 1.0, 1.0, 1.0, 0.0, t), expected)

    def test_lamb_needs_mass(self):
        with pytest.raises(InvalidSpec):
            lamb_analytic(0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0)

    def test_massless_decay(self):
        t = np.linspace(0, 3, 7)
        np.testing.assert_allclose(massless_spring_boundary_decay(2.0, 1.5, 3.0, 0.4, t), 0.4 * np.exp(-t))

    def test_massless_decay_with_source(self):
        t = np.linspace(0, 3, 7)
        psi = massless_spring_boundary_decay(1.0, 2.0, 1.0, 1.0, t, source=lambda tau: np.ones_like(tau))
        np.testing.assert_allclose(psi, np.exp(-2 * t) + (1 - np.exp(-2 * t)) / 2, rtol=1e-5)

    def test_incoming_source(self):
        source = incoming_source(2.0, np.cos, np.sin)
        assert source(0.5) == pytest.approx(2 * np.cos(1.0) + np.sin(1.0))


class TestBoundaryConditions:
    def test_massless_spring_end(self):
        scenario = _load("spring_only")
        trajectory = simulate(build_system(scenario), with_ledger=False)
        times = np.array(trajectory.times)
        reference = massless_spring_boundary_decay(1.0, 1.0, 1.0, 1.0, times)
        assert _relative_sup(trajectory.boundary_series("b1"), reference) < 1e-3

    def test_clamped_end_stays_put(self):
        text = CLOSED_TEXT.replace("[boundary.b1]\nmass = 1.0\nhooke = 1.0", "[boundary.b1]\nclamped = true") \
            .replace("[interaction.b1]\nkind = spring\nk_tilde = 10.0", "")
        scenario = scenario_from_text(text, time__t_end=0.1)
        system = build_system(scenario)
        assert system.ends["b1"].kind == EndKind.CLAMPED
        trajectory = simulate(system, stride=1, with_ledger=False)
        assert np.all(trajectory.trace_series("b1") == 0.0)

    def test_rigid_node_follows_trace(self, lamb_scenario):
        trajectory = simulate(build_system(lamb_scenario), with_ledger=False)
        np.testing.assert_array_equal(trajectory.boundary_series("b1"), trajectory.trace_series("b1"))

    def test_outflow_only_on_semi_infinite_ends(self, lamb_scenario):
        system = build_system(lamb_scenario)
        state = system.initial_state()
        assert outflow_far_boundary(system, state.field, "b2").shape == (1,)
        with pytest.raises(InvalidSpec):
            outflow_far_boundary(system, state.field, "b1")

    def test_blowup_is_reported(self, lamb_scenario):
        unstable = dataclasses.replace(lamb_scenario, dt=5 * lamb_scenario.dt)
        with pytest.raises(NumericalBlowup) as info:
            simulate(CoupledSystem(unstable), with_ledger=False)
        assert info.value.exit_code == 3


PULSE_TEXT = """
[interior]
mass_matrix = 1.0
stiffness_matrix = 1.0
b1 = 0.0
b2 = 10.0
n_cells = 500

[boundary.b1]
clamped = true

[boundary.b2]
semi_infinite = true

[time]
t_end = 12.0

[initial]
field_kind = gaussian
field_center = 5.0
field_width = 1.0
outgoing = right

[output]
stride = 100
"""


def _snapshots(scenario: Scenario):
    system = build_system(scenario)
    trajectory = simulate(system, with_ledger=False, snapshots=2)
    return system.initial_state().field.grid, trajectory.snapshots


def _advance(scenario: Scenario, n_steps: int) -> CoupledState1D:
    system = build_system(scenario)
    state = system.initial_state()
    for _ in range(n_steps):
        state = system.step(state)
    return state


class TestWavePropagation:
    def test_outflow_reflection(self):
        _, snapshots = _snapshots(scenario_from_text(PULSE_TEXT))
        (_, incident), (_, remaining) = snapshots
        assert np.max(np.abs(remaining)) < 1e-3 * np.max(np.abs(incident))

    def test_pulse_speed(self):
        # a = sqrt(T / rho) = 2
        scenario = scenario_from_text(
            PULSE_TEXT, interior__stiffness_matrix=4.0, interior__b2=20.0, interior__n_cells=400, time__t_end=4.0
        )
        grid, ((t0, first), (t1, last)) = _snapshots(scenario)
        z = np.ravel(grid)

        def centroid(psi):
            psi = np.ravel(psi)
            return trapezoid(z * psi, z) / trapezoid(psi, z)

        speed = (centroid(last) - centroid(first)) / (t1 - t0)
        assert speed == pytest.approx(2.0, rel=5e-3)

    @pytest.mark.slow
    def test_standing_mode_second_order(self):
        text = PULSE_TEXT.replace("semi_infinite = true", "clamped = true")
        scenario = scenario_from_text(
            text, interior__b2=1.0, interior__n_cells=20, time__dt=0.025, time__t_end=0.5,
            initial__field_kind="sine_mode", initial__outgoing="false",
        )
        errors = []
        for factor in (1, 2, 4):
            grid, snapshots = _snapshots(scenario.refined(factor))
            t, psi = snapshots[-1]
            exact = np.sin(np.pi * np.ravel(grid)) * np.cos(np.pi * t)
            errors.append(float(np.max(np.abs(np.ravel(psi) - exact))))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all((orders >= 1.8) & (orders <= 2.2)), orders

    def test_halved_time_step(self, closed_scenario):
        # same grid, dt halved twice: the differences shrink at the scheme order
        scenario = closed_scenario.replace(initial=InitialData(field=GaussianProfile(center=0.5, width=0.1)))
        states = [_advance(scenario.replace(dt=dt), int(round(1.0 / dt))) for dt in (0.01, 0.005, 0.0025)]
        for values in ([s.field.psi for s in states], [s.boundaries["b1"].psi_B for s in states]):
            coarse, mid, fine = values
            order = np.log2(np.max(np.abs(coarse - mid)) / np.max(np.abs(mid - fine)))
            assert 1.8 <= order <= 2.2, order


class TestInterface:
    def test_discrete_balance_holds(self, closed_scenario):
        system = build_system(closed_scenario)
        states = [system.initial_state()]
        for _ in range(12):
            states.append(system.step(states[-1]))
        for end in ("b1", "b2"):
            residual = interface_solve_residual(system, *states[-3:], end)
            np.testing.assert_allclose(residual, 0.0, atol=1e-8)

    def test_interaction_force_signs(self, closed_scenario):
        system = build_system(closed_scenario)
        state = system.initial_state()
        state.boundaries["b1"].psi_B = state.field.psi[0] + 0.1
        forces = interface_force(system, state, "b1")
        np.testing.assert_allclose(forces.on_interior, [1.0])
        np.testing.assert_allclose(forces.on_boundary, [-1.0])
        np.testing.assert_allclose(forces.outward, -forces.flux)

    def test_lone_oscillator(self):
        node = BoundaryNodeSpec(mass=np.eye(1), hooke=np.eye(1))
        dt = 1e-3
        state = start_boundary(node, 1.0, 0.0, np.zeros(1), dt)
        n = int(round(2 * np.pi / dt))
        for step in range(n):
            state = step_boundary(node, state, np.zeros(1), step * dt, dt)
        assert state.psi_B[0] == pytest.approx(np.cos(n * dt), abs=1e-4)

    def test_massless_lone_node(self):
        node = BoundaryNodeSpec(mass=np.zeros((1, 1)), hooke=2 * np.eye(1))
        state = start_boundary(node, 0.0, 0.0, np.zeros(1), 0.1)
        state = step_boundary(node, state, np.array([3.0]), 0.0, 0.1)
        assert state.psi_B[0] == pytest.approx(1.5)

    def test_singular_massless_node(self):
        node = BoundaryNodeSpec(mass=np.zeros((1, 1)), hooke=np.zeros((1, 1)), label="b2")
        state = start_boundary(node, 0.0, 0.0, np.zeros(1), 0.1)
        with pytest.raises(InvalidSpec, match="boundary.b2: singular"):
            step_boundary(node, state, np.ones(1), 0.0, 0.1)


class TestTransmissionLines:
    def test_telegrapher_fields(self, closed_scenario):
        system = build_system(closed_scenario)
        grid = system.initial_state().field.grid
        psi = 2.0 * grid[:, None]
        voltage, current = telegrapher_fields(system, psi, psi, psi + 6.0 * system.dt)
        np.testing.assert_allclose(voltage, -2.0, atol=1e-9)
        np.testing.assert_allclose(current, 3.0)

    def test_telegrapher_equations(self):
        interior = InteriorSpec1D(
            mass_matrix=np.eye(2),
            stiffness_matrix=np.array([[1.0, -0.25], [-0.25, 1.0]]),
            b1=0.0,
            b2=20.0,
            n_cells=1000,
            semi_infinite=(True, True),
        )
        scenario = Scenario(
            interior=interior,
            boundaries={"b1": None, "b2": None},
            interactions={"b1": InteractionSpec.none(), "b2": InteractionSpec.none()},
            t_end=1.0,
            dt=0.9 * interior.dz / float(np.max(interior.wave_speeds())),
            initial=InitialData(field=GaussianProfile(amplitude=[1.0, 0.0], center=10.0, width=1.0)),
        )
        system = build_system(scenario)
        profiles = []
        simulate(system, with_ledger=False, on_step=lambda state, following: profiles.append(state.field.psi.copy()))
        assert telegrapher_residual(system, profiles[20:25]) < 1e-2
        with pytest.raises(InvalidSpec):
            telegrapher_residual(system, profiles[:4])

    def test_coupling_matrix(self):
        scenario = build_mtl(np.eye(2), np.eye(2), 1.0, np.eye(2), A=10 * np.eye(2))
        np.testing.assert_array_equal(scenario.boundaries["b1"].mass, np.eye(2))
        assert CoupledSystem(scenario).ends["b1"].kind == EndKind.COUPLED

    def test_singular_capacitance(self):
        with pytest.raises(InvalidSpec):
            build_mtl(1.0, 0.0, 1.0, 1.0)


class TestStepping:
    def test_linear_profile_is_static_inside(self, closed_scenario):
        system = build_system(closed_scenario)
        grid = system.initial_state().field.grid
        psi = np.repeat(grid[:, None], system.k, axis=1)
        new = step_interior(system, FieldState1D(grid, psi, psi.copy(), 0.0, system.dt))
        np.testing.assert_allclose(new.psi, psi, atol=1e-12)
        np.testing.assert_array_equal(new.psi_prev, psi)
        assert new.time == pytest.approx(system.dt)

    def test_rest_stays_at_rest(self, closed_scenario):
        system = build_system(closed_scenario.replace(initial=InitialData()))
        state = system.initial_state()
        for _ in range(5):
            state = step_coupled(system, state)
        np.testing.assert_array_equal(state.field.psi, 0.0)
        for end in ("b1", "b2"):
            np.testing.assert_array_equal(state.boundaries[end].psi_B, 0.0)
        assert state.time == pytest.approx(5 * system.dt)

    def test_displaced_node_pulls_the_string(self):
        scenario = scenario_from_text(CLOSED_TEXT, initial__field_kind="zero", initial__psi_B_b1=0.01)
        system = build_system(scenario)
        state = step_coupled(system, system.initial_state())
        assert state.field.psi[0, 0] > 0
        assert state.boundaries["b1"].psi_B[0] < 0.01
        np.testing.assert_array_equal(state.boundaries["b2"].psi_B, 0.0)
