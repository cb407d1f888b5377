import dataclasses

import numpy as np
import pytest

from structbound.catalog import GaussianProfile
from structbound.config import ScenarioConfig
from structbound.errors import InvalidSpec
from structbound.kernels import KernelTerm, MemoryKernel
from structbound.model import BoundaryNodeSpec, DiskSpec, InitialData, InteractionKind, InteractionSpec, \
    InteriorSpec1D, Scenario, as_matrix, build_system, outgoing_gaussian, scenario_from_config, validate_scenario
from structbound.solver1d import CoupledSystem
from structbound.solver2d import MembraneSystem, membrane_cfl_limit
from structbound.tests.conftest import LAMB_TEXT, SCENARIO_DIR, scenario_from_text


def _violations(text: str, **overrides):
    with pytest.raises(InvalidSpec) as info:
        scenario_from_text(text, **overrides)
    return info.value.violations


class TestScenarioDocuments:
    @pytest.mark.parametrize("name", ["lamb", "retarded_lamb", "spring_only", "closed_string", "mtl", "membrane"])
    def test_shipped_scenarios_load(self, name):
        scenario = scenario_from_config(ScenarioConfig.from_file(SCENARIO_DIR / f"{name}.conf"))
        assert scenario.name == name
        assert scenario.dt > 0
        assert scenario is validate_scenario(scenario)

    def test_lamb_document(self, lamb_scenario):
        assert lamb_scenario.structured_ends() == ["b1"]
        assert lamb_scenario.interactions["b1"].kind == InteractionKind.RIGID
        assert lamb_scenario.initial.outgoing == "right"
        assert lamb_scenario.dt == pytest.approx(0.9 * 10.0 / 200)
        assert lamb_scenario.n_steps == round(6.0 / lamb_scenario.dt)

    def test_mtl_document_matrices(self):
        scenario = scenario_from_config(ScenarioConfig.from_file(SCENARIO_DIR / "mtl.conf"))
        assert scenario.k == 2
        node = scenario.boundaries["b1"]
        np.testing.assert_array_equal(node.mass, np.eye(2))
        np.testing.assert_array_equal(scenario.interactions["b1"].k_tilde, 10 * np.eye(2))

    def test_membrane_document(self):
        scenario = scenario_from_config(ScenarioConfig.from_file(SCENARIO_DIR / "membrane.conf"))
        assert scenario.is_disk
        assert scenario.interior.ring_k == 1.0
        assert scenario.dt == pytest.approx(0.9 * membrane_cfl_limit(scenario.interior))


class TestValidation:
    def test_collects_every_violation(self):
        violations = _violations(LAMB_TEXT, interior__n_cells=4, interior__b2=-1.0, time__t_end=-1)
        assert any("n_cells" in v for v in violations)
        assert any("b1 < b2" in v for v in violations)
        assert any("t_end" in v for v in violations)

    def test_malformed_values_are_violations(self):
        violations = _violations(LAMB_TEXT, interior__n_cells="many", interior__mass_matrix="[[1, 2]")
        assert any(v.startswith("interior.n_cells") for v in violations)
        assert any(v.startswith("interior.mass_matrix") for v in violations)

    def test_unknown_section(self):
        assert any("[wormhole]" in v for v in _violations(LAMB_TEXT + "\n[wormhole]\ndepth = 1\n"))

    def test_matrices_must_be_spd(self):
        violations = _violations(LAMB_TEXT, interior__stiffness_matrix="-1.0")
        assert any("not positive definite" in v for v in violations)

    def test_cfl(self):
        violations = _violations(LAMB_TEXT, time__dt=0.1)
        assert any("CFL" in v for v in violations)

    def test_spring_needs_positive_stiffness(self):
        text = LAMB_TEXT.replace("kind = rigid", "kind = spring\nk_tilde = -2")
        assert any("interaction stiffness" in v for v in _violations(text))

    def test_massless_node_without_interaction(self):
        text = LAMB_TEXT.replace("mass = 1.0\nhooke = 1.0", "mass = 0.0\nhooke = 0.0")
        text = text.replace("kind = rigid", "kind = none")
        assert any("massless node" in v for v in _violations(text))

    def test_kernel_on_massless_spring_node(self):
        text = LAMB_TEXT.replace("mass = 1.0\n", 'mass = 0.0\nkernel = [{"c": 1, "lambda": 1}]\n') \
            .replace("kind = rigid", "kind = spring\nk_tilde = 1")
        assert any("memory kernel" in v for v in _violations(text))

    def test_kernel_decay_must_be_positive(self):
        text = LAMB_TEXT.replace("mass = 1.0\n", 'mass = 1.0\nkernel = [{"c": 1, "lambda": -1}]\n')
        assert any("decay rate" in v for v in _violations(text))

    def test_rigid_initial_data_must_match_trace(self):
        assert any("rigid" in v for v in _violations(LAMB_TEXT, initial__psi_B_b1=0.5))

    def test_rigid_initial_data_checked_alongside_other_violations(self):
        violations = _violations(LAMB_TEXT, interior__n_cells=4, initial__psi_B_b1=0.5)
        assert any("n_cells" in v for v in violations)
        assert any("psi_B(0) = psi_L(0)" in v for v in violations)

    def test_node_initial_data_with_wrong_length(self):
        violations = _violations(LAMB_TEXT, initial__psi_B_b1="[1.0, 2.0]")
        assert any(v.startswith("initial.psi_B_b1: expected") for v in violations)

    def test_no_node_on_open_end(self):
        text = LAMB_TEXT + "\n[interaction.b2]\nkind = rigid\n"
        scenario = scenario_from_text(text)
        assert scenario.boundaries["b2"] is None
        assert scenario.interactions["b2"].kind == InteractionKind.NONE

    def test_semi_infinite_and_clamped_exclusive(self):
        violations = _violations(LAMB_TEXT.replace("semi_infinite = true", "semi_infinite = true\nclamped = true"))
        assert any("exclusive" in v for v in violations)

    def test_disk_invariants(self):
        disk = DiskSpec(radius=1.0, n_r=16, n_theta=15, ring_k=0.0, interaction=InteractionSpec.none())
        scenario = Scenario(interior=disk, boundaries={"b1": None, "b2": None}, interactions={}, t_end=1.0, dt=1e-3)
        with pytest.raises(InvalidSpec) as info:
            validate_scenario(scenario)
        assert any("n_theta" in v for v in info.value.violations)
        assert any("massless ring" in v for v in info.value.violations)

    def test_invalid_spec_payload(self):
        error = InvalidSpec(["a", "b"])
        assert error.exit_code == 2
        assert error.to_dict()["violations"] == ["a", "b"]


class TestInterior:
    def test_scalar_string(self):
        interior = InteriorSpec1D(mass_matrix=np.array([[4.0]]), stiffness_matrix=np.array([[9.0]]))
        np.testing.assert_allclose(interior.wave_speeds(), [1.5])
        np.testing.assert_allclose(interior.characteristic_impedance(), [[6.0]])

    def test_coupled_lines(self):
        L = np.diag([1.0, 2.0])
        C_inv = np.array([[2.0, -0.5], [-0.5, 1.0]])
        interior = InteriorSpec1D(mass_matrix=L, stiffness_matrix=C_inv)
        C = interior.speed_operator()
        np.testing.assert_allclose(C @ C, np.linalg.solve(L, C_inv), atol=1e-12)
        Z = interior.characteristic_impedance()
        np.testing.assert_allclose(Z, Z.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(Z) > 0)

    def test_as_matrix(self):
        np.testing.assert_array_equal(as_matrix(2.0, 2), 2 * np.eye(2))
        np.testing.assert_array_equal(as_matrix([1, 3], 2), np.diag([1.0, 3.0]))
        with pytest.raises(ValueError):
            as_matrix([1, 2, 3], 2)


class TestScenario:
    def test_refined_string(self, lamb_scenario):
        fine = lamb_scenario.refined(2)
        assert fine.interior.n_cells == 400
        assert fine.dt == pytest.approx(lamb_scenario.dt / 2)
        assert fine.output.stride == 2 * lamb_scenario.output.stride
        validate_scenario(fine)

    def test_refined_disk_keeps_output_times(self):
        scenario = scenario_from_config(ScenarioConfig.from_file(SCENARIO_DIR / "membrane.conf"))
        for factor in (2, 4):
            fine = scenario.refined(factor)
            validate_scenario(fine)
            assert fine.interior.n_r == factor * scenario.interior.n_r
            assert fine.dt * fine.output.stride == pytest.approx(scenario.dt * scenario.output.stride)

    def test_with_interaction(self, lamb_scenario):
        variant = lamb_scenario.with_interaction("b1", InteractionSpec.spring(5.0))
        assert variant.interactions["b1"].kind == InteractionKind.SPRING
        assert lamb_scenario.interactions["b1"].kind == InteractionKind.RIGID

    def test_build_system(self, lamb_scenario):
        assert isinstance(build_system(lamb_scenario), CoupledSystem)
        disk = DiskSpec(n_r=12, n_theta=16, ring_k=1.0)
        scenario = Scenario(
            interior=disk,
            boundaries={"b1": None, "b2": None},
            interactions={"b1": disk.interaction},
            t_end=1.0,
            dt=0.5 * membrane_cfl_limit(disk),
        )
        assert isinstance(build_system(scenario), MembraneSystem)

    def test_outgoing_gaussian_width(self):
        initial = outgoing_gaussian(m=4.0, k=1.0, a=0.5)
        assert isinstance(initial.field, GaussianProfile)
        assert initial.field.params["width"] == pytest.approx(1.0)
        assert initial.outgoing == "right"

    def test_boundary_force_needs_node(self, lamb_scenario):
        with pytest.raises(InvalidSpec):
            lamb_scenario.with_boundary_force("b2", None)

    def test_programmatic_scenario(self):
        node = BoundaryNodeSpec(
            mass=np.eye(1),
            hooke=np.eye(1),
            kernel=MemoryKernel((KernelTerm(c=1.0, decay=2.0),)),
        )
        interior = InteriorSpec1D(np.eye(1), np.eye(1), 0.0, 5.0, 50, semi_infinite=(False, True))
        scenario = Scenario(
            interior=interior,
            boundaries={"b1": node, "b2": None},
            interactions={"b1": InteractionSpec.none(), "b2": InteractionSpec.none()},
            t_end=1.0,
            dt=0.05,
            initial=InitialData(),
        )
        assert validate_scenario(scenario) is scenario
        with pytest.raises(InvalidSpec, match="CFL"):
            validate_scenario(dataclasses.replace(scenario, dt=0.5))
