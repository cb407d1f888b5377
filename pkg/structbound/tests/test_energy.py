import numpy as np
import pytest

from structbound.core import _max_increase
from structbound.energy import EnergyLedger, boundary_energy, conservation_report, detailed_balance_residual, \
    interior_energy, residual_norms, residual_orders, tracked_energy
from structbound.model import BoundaryNodeSpec, InteractionSpec, build_system
from structbound.solver1d import InterfaceForces, interface_force, simulate
from structbound.tests.conftest import CLOSED_TEXT, scenario_from_text


def _ledgers(scenario):
    return simulate(build_system(scenario)).ledgers


class TestEnergyTerms:
    def test_interior_energy_of_uniform_motion(self):
        psi = np.zeros((11, 1))
        total, density = interior_energy(np.eye(1) * 2.0, np.eye(1), 0.1, psi, np.ones((11, 1)))
        # 1/2 rho v^2 over a unit length
        assert total == pytest.approx(1.0)
        np.testing.assert_allclose(density, 1.0)

    def test_interior_strain_energy(self):
        z = np.linspace(0, 1, 21)
        psi = 3 * z[:, None]
        total, _ = interior_energy(np.eye(1), 2.0 * np.eye(1), 0.05, psi, np.zeros_like(psi))
        assert total == pytest.approx(0.5 * 2.0 * 9.0)

    def test_boundary_energy_includes_stretch(self):
        node = BoundaryNodeSpec(mass=np.eye(1), hooke=2.0 * np.eye(1))
        rigid = boundary_energy(node, InteractionSpec.rigid(), [1.0], [2.0], [0.5])
        spring = boundary_energy(node, InteractionSpec.spring(4.0), [1.0], [2.0], [0.5])
        assert rigid == pytest.approx(0.5 * 4 + 0.5 * 2)
        assert spring == pytest.approx(rigid + 0.5 * 4.0 * 0.25)

    def test_detailed_balance_residual(self):
        forces = InterfaceForces(flux=np.array([0.5]), outward=np.array([-0.5]), interaction=np.array([2.0]))
        assert detailed_balance_residual(forces, np.array([3.0])) == pytest.approx((2.0 + 0.5) * 3.0)
        assert detailed_balance_residual(forces, np.zeros(1)) == 0.0

    def test_detailed_balance_residual_of_a_state(self, closed_scenario):
        system = build_system(closed_scenario)
        state = system.initial_state()
        forces = interface_force(system, state, "b1")
        expected = float((forces.interaction - forces.outward) @ state.field.psi_dot[0])
        assert detailed_balance_residual(forces, state.field.psi_dot[0]) == pytest.approx(expected)


class TestConservation:
    def test_closed_string(self, closed_scenario):
        report = conservation_report(_ledgers(closed_scenario))
        assert report.initial_energy > 0
        assert report.max_drift < 1e-3

    @pytest.mark.slow
    def test_closed_string_fine_step(self):
        scenario = scenario_from_text(
            CLOSED_TEXT, time__dt=1e-4, interior__n_cells=100, time__t_end=20.0, output__stride=100,
        )
        assert conservation_report(_ledgers(scenario)).max_drift < 1e-5

    def test_closed_string_balance_residual_converges(self, closed_scenario):
        coarse = residual_norms(_ledgers(closed_scenario))
        fine = residual_norms(_ledgers(closed_scenario.refined(2)))
        orders = residual_orders(coarse, fine)
        assert set(orders) == {"b1", "b2"}
        assert all(order > 0.9 for order in orders.values())

    def test_lamb_energy_never_grows(self, lamb_scenario):
        ledgers = _ledgers(lamb_scenario)
        energy = tracked_energy(ledgers)
        assert _max_increase(ledgers) <= 1e-3 * energy[0]
        # the node hands its energy to the string
        assert ledgers[-1].H_B["b1"] < 0.1 * ledgers[0].H_B["b1"]
        assert all(ledger.radiated_power >= 0 for ledger in ledgers)

    def test_lamb_energy_balance(self, lamb_scenario):
        report = conservation_report(_ledgers(lamb_scenario))
        assert report.max_drift < 1e-2

    def test_at_rest(self):
        quiet = scenario_from_text(CLOSED_TEXT.replace("field_amplitude = 0.1", "field_amplitude = 0.0"))
        report = conservation_report(_ledgers(quiet))
        assert report.to_dict() == {
            "max_drift": 0.0,
            "rms_defect": 0.0,
            "max_defect": 0.0,
            "initial_energy": 0.0,
            "per_end_residual_order": {},
        }

    def test_external_work(self):
        forced = scenario_from_text(
            CLOSED_TEXT + "\n[boundary.b1]\nforce_kind = constant\nforce_value = 0.5\n",
            initial__field_amplitude=0.0,
        )
        ledgers = _ledgers(forced)
        assert tracked_energy(ledgers)[-1] > 0
        assert conservation_report(ledgers).max_drift < 1e-2


class TestReport:
    def test_drift_against_net_power(self):
        # E(t) = t with unit net power in: no drift
        ledgers = [EnergyLedger(time=t, H_D_total=t, external_power=1.0) for t in np.linspace(0, 1, 11)]
        report = conservation_report(ledgers)
        assert report.max_drift == pytest.approx(0.0, abs=1e-12)
        assert report.max_defect == pytest.approx(0.0, abs=1e-12)

    def test_drift_detects_leak(self):
        ledgers = [EnergyLedger(time=t, H_D_total=1.0 - 0.1 * t) for t in np.linspace(0, 1, 11)]
        assert conservation_report(ledgers).max_drift == pytest.approx(0.1)

    def test_single_row(self):
        report = conservation_report([EnergyLedger(time=0.0, H_D_total=2.0)])
        assert report.initial_energy == 2.0
        assert report.max_drift == 0.0

    def test_ledger_totals(self):
        ledger = EnergyLedger(
            time=0.0,
            H_D_total=1.0,
            H_B={"b1": 0.5, "b2": 0.25},
            balance_residual={"b1": 1e-3, "b2": -2e-3},
            external_power=3.0,
            radiated_power=1.0,
            friction_power=0.5,
        )
        assert ledger.total == pytest.approx(1.75)
        assert ledger.net_power == pytest.approx(1.5)
        assert ledger.balance_residual_total == pytest.approx(-1e-3)

    def test_residual_orders(self):
        orders = residual_orders({"b1": 4e-3, "b2": 0.0}, {"b1": 1e-3, "b2": 0.0})
        assert orders["b1"] == pytest.approx(2.0)
        assert orders["b2"] is None
