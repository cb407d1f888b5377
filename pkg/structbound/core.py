#!/usr/bin/env python3

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from structbound.config import Config, ConfigListener, ScenarioConfig
from structbound.energy import EnergyLedger, conservation_report, residual_norms, residual_orders, \
    tracked_energy
from structbound.errors import InvalidSpec
from structbound.kernels import kernel_from_string_coupling
from structbound.model import InteractionKind, InteractionSpec, InteriorSpec1D, Scenario, build_system, \
    scenario_from_config
from structbound.output import admittance_table, error_table, ledger_table, ring_table, snapshot_table, \
    trajectory_table, write_json, write_table
from structbound.response import ComplexFrequencyGrid, admittance_operator, check_positive_definite_ae, \
    impedance_lamb, impedance_scalar_retarded, measure_admittance, reciprocity_defect
from structbound.solver1d import CoupledSystem, Trajectory1D, integrate_reduced_boundary, lamb_analytic, simulate
from structbound.solver2d import MembraneSystem, Trajectory2D, simulate_membrane
from structbound.utils import timer

logger = logging.getLogger(__name__)

Trajectory = Union[Trajectory1D, Trajectory2D]


@dataclass(frozen=True)
class LambParameters:
    """A single mass-spring node on a semi-infinite scalar string."""
    end: str
    m: float
    k: float
    T: float
    a: float
    psi0: float
    v0: float


def lamb_parameters(scenario: Scenario) -> LambParameters:
    """Raises InvalidSpec unless the scenario is a Lamb-type system."""
    interior = scenario.interior
    if not isinstance(interior, InteriorSpec1D) or interior.k != 1:
        raise InvalidSpec("Lamb reference needs a scalar string")
    ends = scenario.structured_ends()
    if len(ends) != 1:
        raise InvalidSpec(f"Lamb reference needs exactly one structured end (got {len(ends)})")
    end = ends[0]
    other = "b2" if end == "b1" else "b1"
    if not interior.is_semi_infinite(other):
        raise InvalidSpec(f"Lamb reference needs a semi-infinite {other}")
    node = scenario.boundaries[end]
    assert node is not None
    if node.massless:
        raise InvalidSpec("Lamb reference needs a massive boundary node")

    system = CoupledSystem(scenario)
    state = system.initial_state()
    following = system.step(state)
    boundary, after = state.boundaries[end], following.boundaries[end]
    v0 = float((after.psi_B[0] - boundary.psi_B_prev[0]) / (2 * system.dt))
    return LambParameters(
        end=end,
        m=float(node.mass[0, 0]),
        k=float(node.hooke[0, 0]),
        T=float(interior.stiffness_matrix[0, 0]),
        a=float(interior.wave_speeds()[0]),
        psi0=float(boundary.psi_B[0]),
        v0=v0,
    )


def _relative_sup(values: np.ndarray, reference: np.ndarray) -> float:
    scale = float(np.max(np.abs(reference)))
    error = float(np.max(np.abs(values - reference)))
    return error / scale if scale > 0 else error


def _sweep_member(job: Tuple[Scenario, float, LambParameters]) -> Tuple[float, float, float]:
    """(k_tilde, full-system error, reduced-model error) against the Lamb solution."""
    scenario, k_tilde, lamb = job
    interaction = InteractionSpec.rigid() if np.isinf(k_tilde) else InteractionSpec.spring(k_tilde)
    variant = scenario.with_interaction(lamb.end, interaction).replace(name=f"{scenario.name}_ktilde_{k_tilde:g}")
    trajectory = simulate(CoupledSystem(variant), with_ledger=False, snapshots=0)
    times = np.array(trajectory.times)
    reference = lamb_analytic(lamb.m, lamb.T, lamb.a, lamb.k, lamb.psi0, lamb.v0, times)
    full_error = _relative_sup(trajectory.boundary_series(lamb.end), reference)

    if np.isinf(k_tilde):
        return k_tilde, full_error, full_error
    kernel = kernel_from_string_coupling(lamb.a, k_tilde, lamb.T)
    reduced = integrate_reduced_boundary(lamb.m, lamb.k, kernel, lamb.psi0, scenario.t_end, scenario.dt, lamb.v0)
    reduced_reference = lamb_analytic(lamb.m, lamb.T, lamb.a, lamb.k, lamb.psi0, lamb.v0, reduced.times)
    return k_tilde, full_error, _relative_sup(reduced.psi, reduced_reference)


class Simulation(ConfigListener):
    _config: Config

    scenario: Scenario
    trajectory: Optional[Trajectory] = None

    def __init__(self, scenario: Scenario, config: Optional[Config] = None):
        if config is None:
            config = Config.from_default_files()
        config.add_listener(self)
        self._config = config
        self.scenario = scenario

    @classmethod
    def from_file(
        cls,
        file: Union[str, Path],
        config: Optional[Config] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> "Simulation":
        """
        Loads a scenario document. Run defaults fill in output and time
        settings the document leaves open; `overrides` ("section.key": value)
        win over both.
        """
        if config is None:
            config = Config.from_default_files()
        document = ScenarioConfig.from_file(file)
        if document.unknown_sections:
            logger.warning("Ignoring unknown sections: %s", ", ".join(document.unknown_sections))
        for section, key, value in (
            ("output", "stride", config.stride),
            ("output", "snapshots", config.snapshots),
            ("time", "cfl_factor", config.cfl_factor),
        ):
            if key not in document[section]:
                document[section].set(key, value)
        for dotted_key, value in (overrides or {}).items():
            if value is not None:
                document.override(dotted_key, value)
        return cls(scenario_from_config(document), config)

    ### PROPERTIES ############################################################

    @property
    def config(self) -> Config:
        return self._config

    @property
    def out_dir(self) -> Path:
        return Path(self.config.out) / self.scenario.name

    ### THE REST OF THE JAZZ ##################################################

    def config_changed(self, key, value):
        self.reset()

    def reset(self):
        self.trajectory = None

    @timer
    def simulate(self, scenario: Optional[Scenario] = None, with_ledger: bool = True) -> Trajectory:
        scenario = scenario or self.scenario
        system = build_system(scenario)
        if isinstance(system, MembraneSystem):
            return simulate_membrane(system, with_ledger=with_ledger)
        return simulate(system, with_ledger=with_ledger)

    def get_trajectory(self) -> Trajectory:
        if self.trajectory is None:
            self.trajectory = self.simulate()
        return self.trajectory

    def _write_snapshots(self, trajectory: Trajectory):
        if isinstance(trajectory, Trajectory2D):
            for idx, (t, psi) in enumerate(trajectory.snapshots):
                write_table(snapshot_table(psi, self._radii(), label="r"), self.out_dir / f"snapshot_{idx:03d}.csv")
                logger.debug("Snapshot %d at t=%g", idx, t)
            return
        grid = self.scenario.interior.grid  # type: ignore
        for idx, (t, psi) in enumerate(trajectory.snapshots):
            write_table(snapshot_table(psi, grid, label="z"), self.out_dir / f"snapshot_{idx:03d}.csv")
            logger.debug("Snapshot %d at t=%g", idx, t)

    def _radii(self) -> np.ndarray:
        return self.scenario.interior.radii  # type: ignore

    @timer
    def run(self) -> Dict[str, Any]:
        """Trajectory, ledger and snapshot CSVs plus a summary JSON."""
        trajectory = self.get_trajectory()
        if isinstance(trajectory, Trajectory2D):
            write_table(ring_table(trajectory), self.out_dir / "ring.csv")
        else:
            write_table(trajectory_table(trajectory), self.out_dir / "trajectory.csv")
        write_table(ledger_table(trajectory.ledgers), self.out_dir / "ledger.csv")
        self._write_snapshots(trajectory)
        report = conservation_report(trajectory.ledgers)
        summary = {
            "scenario": self.scenario.name,
            "command": "run",
            "seed": self.config.seed,
            "dt": self.scenario.dt,
            "t_end": self.scenario.t_end,
            "n_steps": self.scenario.n_steps,
            "conservation": report.to_dict(),
        }
        write_json(summary, self.out_dir / "summary.json")
        logger.info("Wrote run artifacts to %s", self.out_dir)
        return summary

    @timer
    def sweep(self, ktildes: Optional[List[float]] = None) -> Dict[str, Any]:
        """Spring stiffness ladder against the Lamb solution, one worker process per member."""
        ktildes = list(ktildes if ktildes is not None else self.config.ktilde)
        if any(not k_tilde > 0 for k_tilde in ktildes):
            raise InvalidSpec("k_tilde values must be > 0")
        lamb = lamb_parameters(self.scenario)
        jobs = [(self.scenario, float(k_tilde), lamb) for k_tilde in ktildes]
        workers = self.config.workers
        if workers == 1 or len(jobs) == 1:
            rows = [_sweep_member(job) for job in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                rows = list(executor.map(_sweep_member, jobs))
        for k_tilde, full_error, reduced_error in rows:
            logger.info("k_tilde=%g: full error %.3e, reduced error %.3e", k_tilde, full_error, reduced_error)

        write_table(
            error_table(rows, ["k_tilde", "full_error", "reduced_error"]),
            self.out_dir / "sweep.csv",
        )
        reduced_errors = [row[2] for row in rows]
        summary = {
            "scenario": self.scenario.name,
            "command": "sweep",
            "rows": [{"k_tilde": r[0], "full_error": r[1], "reduced_error": r[2]} for r in rows],
            "reduced_monotone": bool(all(a > b for a, b in zip(reduced_errors, reduced_errors[1:]))),
        }
        write_json(summary, self.out_dir / "sweep.json")
        return summary

    def _observable(self, trajectory: Trajectory) -> np.ndarray:
        if isinstance(trajectory, Trajectory2D):
            return trajectory.monitor_series("ring_mean")
        end = self.scenario.structured_ends()[0] if self.scenario.structured_ends() else "b1"
        return trajectory.boundary_series(end)

    @timer
    def converge(self, levels: Optional[int] = None) -> Dict[str, Any]:
        """
        Refinement ladder with grid and time step halved per level. Errors
        are taken against the Lamb solution when the scenario has one, and
        against the next finer level otherwise.
        """
        levels = levels or self.config.levels
        if levels < 2:
            raise InvalidSpec("a refinement ladder needs at least 2 levels")
        try:
            lamb: Optional[LambParameters] = lamb_parameters(self.scenario)
        except InvalidSpec:
            lamb = None
        observables, scenarios = [], []
        for level in range(levels):
            scenario = self.scenario.refined(2 ** level)
            trajectory = self.simulate(scenario, with_ledger=False)
            observables.append((np.array(trajectory.times), self._observable(trajectory)))
            scenarios.append(scenario)
            logger.info("Level %d: dt=%g done", level, scenario.dt)

        errors: List[float] = []
        if lamb is not None:
            for times, values in observables:
                reference = lamb_analytic(lamb.m, lamb.T, lamb.a, lamb.k, lamb.psi0, lamb.v0, times)
                errors.append(_relative_sup(values, reference))
        else:
            for (_, coarse), (_, fine) in zip(observables, observables[1:]):
                n = min(len(coarse), len(fine))
                errors.append(_relative_sup(coarse[:n], fine[:n]))
        orders: List[Optional[float]] = [None]
        for coarse_error, fine_error in zip(errors, errors[1:]):
            orders.append(float(np.log2(coarse_error / fine_error)) if coarse_error > 0 and fine_error > 0 else None)

        rows = [
            (level, scenarios[level].dt, error, np.nan if order is None else order)
            for level, (error, order) in enumerate(zip(errors, orders))
        ]
        write_table(error_table(rows, ["level", "dt", "error", "order"]), self.out_dir / "converge.csv")
        summary = {
            "scenario": self.scenario.name,
            "command": "converge",
            "reference": "lamb_analytic" if lamb is not None else "next_level",
            "errors": errors,
            "orders": orders,
        }
        write_json(summary, self.out_dir / "converge.json")
        return summary

    def analytic_admittance(self, grid: ComplexFrequencyGrid) -> Optional[np.ndarray]:
        """1/Z for Lamb-type scenarios (rigid or spring-coupled), None otherwise."""
        try:
            lamb = lamb_parameters(self.scenario)
        except InvalidSpec:
            return None
        interaction = self.scenario.interactions[lamb.end]
        node = self.scenario.boundaries[lamb.end]
        if node is not None and node.kernel is not None:
            return None
        if interaction.kind == InteractionKind.RIGID:
            impedance = impedance_lamb(lamb.m, lamb.T, lamb.a, lamb.k, grid.s)
        elif interaction.kind == InteractionKind.SPRING:
            kernel = kernel_from_string_coupling(lamb.a, float(interaction.stiffness(1)[0, 0]), lamb.T)
            impedance = impedance_scalar_retarded(lamb.m, lamb.k, kernel, grid.s)
        else:
            return None
        return np.array([admittance_operator(z) for z in np.atleast_1d(impedance)])

    @timer
    def respond(self, grid: Optional[ComplexFrequencyGrid] = None) -> Dict[str, Any]:
        grid = grid or ComplexFrequencyGrid.rectangle()
        ends = self.scenario.structured_ends()
        end = ends[0] if ends else "b1"
        table = measure_admittance(self.scenario, grid, end, tolerance=self.config.transform_tolerance)
        write_table(admittance_table(table), self.out_dir / "admittance.csv")
        summary: Dict[str, Any] = {
            "scenario": self.scenario.name,
            "command": "respond",
            "end": end,
            "max_error_bound": float(np.max(table.error_bound)),
        }
        positivity = {}
        for structured_end in ends:
            node = self.scenario.boundaries[structured_end]
            if node is not None and node.kernel is not None:
                positivity[structured_end] = check_positive_definite_ae(node.kernel, seed=self.config.seed).to_dict()
        if positivity:
            summary["kernel_positivity"] = positivity
        reference = self.analytic_admittance(grid)
        if reference is not None:
            summary["max_relative_error"] = float(np.max(table.relative_error(reference)))
            summary["reciprocity_defect"] = float(max(
                reciprocity_defect(1 / y, y) for y in reference
            ))
        write_json(summary, self.out_dir / "respond.json")
        return summary

    @timer
    def energy_audit(self) -> Dict[str, Any]:
        """Conservation report at the scenario's resolution, residual orders from one refinement."""
        trajectory = self.get_trajectory()
        fine = self.simulate(self.scenario.refined(2))
        orders = residual_orders(residual_norms(trajectory.ledgers), residual_norms(fine.ledgers))
        report = conservation_report(trajectory.ledgers, orders)
        write_table(ledger_table(trajectory.ledgers), self.out_dir / "ledger.csv")
        summary = {
            "scenario": self.scenario.name,
            "command": "energy-audit",
            **report.to_dict(),
            "max_energy_increase": _max_increase(trajectory.ledgers),
        }
        write_json(summary, self.out_dir / "energy.json")
        return summary


def _max_increase(ledgers: List[EnergyLedger]) -> float:
    """Largest step-to-step rise of the tracked energy beyond the external work done in that step."""
    energy = tracked_energy(ledgers)
    if len(energy) < 2:
        return 0.0
    times = np.array([ledger.time for ledger in ledgers])
    external = np.array([ledger.external_power for ledger in ledgers])
    work = (external[1:] + external[:-1]) / 2 * np.diff(times)
    return float(max(0.0, np.max(np.diff(energy) - work)))
