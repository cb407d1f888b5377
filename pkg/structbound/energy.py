"""
Energy bookkeeping

H_D is the interior energy, the integral of 1/2 psi_t^T M psi_t + 1/2 psi_z^T K psi_z.
H_B is the energy of a boundary node and includes the whole interface
spring: 1/2 m psi_B_t^2 + 1/2 k psi_B^2 + 1/2 k_tilde (psi_B - psi_L)^2.
Velocities are whole-step values, the average of the two staggered
half-step velocities around the step, so a ledger row for step n needs the
states at n and n + 1.
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from structbound.model import ENDS, BoundaryNodeSpec, InteractionKind, InteractionSpec

if TYPE_CHECKING:
    from structbound.solver1d import CoupledState1D, CoupledSystem, InterfaceForces
    from structbound.solver2d import MembraneState, MembraneSystem

logger = logging.getLogger(__name__)


@dataclass
class EnergyLedger:
    time: float
    H_D_total: float
    H_B: Dict[str, float] = field(default_factory=dict)
    S_D: Dict[str, float] = field(default_factory=dict)
    interaction_power: Dict[str, float] = field(default_factory=dict)
    balance_residual: Dict[str, float] = field(default_factory=dict)
    external_power: float = 0.0
    radiated_power: float = 0.0
    friction_power: float = 0.0

    @property
    def net_power(self) -> float:
        """Power put into the tracked system: external work minus radiation and friction losses."""
        return self.external_power - self.radiated_power - self.friction_power

    @property
    def H_B_total(self) -> float:
        return float(sum(self.H_B.values()))

    @property
    def total(self) -> float:
        return self.H_D_total + self.H_B_total

    @property
    def balance_residual_total(self) -> float:
        return float(sum(self.balance_residual.values()))


@dataclass
class ConservationReport:
    max_drift: float
    rms_defect: float
    max_defect: float
    initial_energy: float
    per_end_residual_order: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "max_drift": self.max_drift,
            "rms_defect": self.rms_defect,
            "max_defect": self.max_defect,
            "initial_energy": self.initial_energy,
            "per_end_residual_order": self.per_end_residual_order,
        }


def _quadratic(vectors: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Row-wise v^T A v."""
    return np.einsum("ij,jk,ik->i", np.atleast_2d(vectors), matrix, np.atleast_2d(vectors))


def interior_energy(
    mass_matrix: np.ndarray,
    stiffness_matrix: np.ndarray,
    dz: float,
    psi: np.ndarray,
    psi_dot: np.ndarray,
) -> Tuple[float, np.ndarray]:
    """
    Returns H_D and the nodal energy density. Kinetic energy uses trapezoid
    weights (half cells at the ends), strain energy the cell differences.
    """
    kinetic = 0.5 * _quadratic(psi_dot, mass_matrix)
    strain_cells = 0.5 * _quadratic(np.diff(psi, axis=0) / dz, stiffness_matrix)
    strain = np.zeros_like(kinetic)
    strain[:-1] += strain_cells / 2
    strain[1:] += strain_cells / 2
    strain[0] *= 2
    strain[-1] *= 2
    density = kinetic + strain
    weights = np.full(len(psi), dz)
    weights[0] = weights[-1] = dz / 2
    total = float(np.sum(weights * kinetic) + dz * np.sum(strain_cells))
    return total, density


def boundary_energy(
    boundary: BoundaryNodeSpec,
    interaction: InteractionSpec,
    psi_B: np.ndarray,
    psi_B_dot: np.ndarray,
    psi_L: np.ndarray,
) -> float:
    k = boundary.k
    psi_B, psi_B_dot, psi_L = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (psi_B, psi_B_dot, psi_L))
    energy = 0.5 * psi_B_dot @ boundary.mass @ psi_B_dot + 0.5 * psi_B @ boundary.hooke @ psi_B
    if interaction.kind == InteractionKind.SPRING:
        stretch = psi_B - psi_L
        energy += 0.5 * stretch @ interaction.stiffness(k) @ stretch
    return float(energy)


def detailed_balance_residual(forces: "InterfaceForces", psi_L_dot: np.ndarray) -> float:
    """
    (k_tilde (psi_B - psi_L) - n K psi_z) . psi_L_t: the mismatch between the
    power the interface spring delivers to the interior and the energy flux
    the interior carries out through its end. Zero for exact solutions.
    """
    return float(forces.residual @ np.atleast_1d(psi_L_dot))


def ledger_1d(system: "CoupledSystem", state: "CoupledState1D", following: "CoupledState1D") -> EnergyLedger:
    from structbound.kernels import retarded_force
    from structbound.solver1d import EndKind, interface_force

    dt, t = system.dt, state.time
    psi = state.field.psi
    psi_dot = (following.field.psi - state.field.psi_prev) / (2 * dt)
    H_D, _ = interior_energy(system.M, system.K, system.dz, psi, psi_dot)

    weights = np.full(len(psi), system.dz)
    weights[0] = weights[-1] = system.dz / 2
    external = float(np.sum(weights * (psi_dot @ system.interior_force(t))))
    ledger = EnergyLedger(time=t, H_D_total=H_D)

    for end, block in system.ends.items():
        if block.kind == EndKind.CLAMPED:
            continue
        forces = interface_force(system, state, end)
        v_L = psi_dot[block.node]
        ledger.S_D[end] = float(-forces.outward @ v_L)
        if block.kind == EndKind.OUTFLOW:
            ledger.radiated_power += float(v_L @ system.Z @ v_L)
            continue
        boundary = state.boundaries.get(end)
        if boundary is None or block.boundary is None:
            continue
        v_B = (following.boundaries[end].psi_B - boundary.psi_B_prev) / (2 * dt)
        ledger.H_B[end] = boundary_energy(block.boundary, block.interaction, boundary.psi_B, v_B, psi[block.node])
        external += float(block.boundary.external_force(t) @ v_B)
        if block.kernel is not None and boundary.kernel_state is not None:
            friction = retarded_force(block.kernel, boundary.kernel_state.aux) + block.kernel.alpha_inf * v_B
            ledger.friction_power += float(friction @ v_B)
        if block.interaction.kind == InteractionKind.SPRING:
            ledger.interaction_power[end] = float(forces.on_interior @ v_L)
            ledger.balance_residual[end] = detailed_balance_residual(forces, v_L)
        else:
            ledger.interaction_power[end] = 0.0
            ledger.balance_residual[end] = 0.0
    ledger.external_power = external
    return ledger


def membrane_energy(system: "MembraneSystem", psi: np.ndarray, psi_dot: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    H_D of the disk and the energy per polar cell. The strain part is the
    discrete form whose gradient is exactly the membrane force, so the
    leapfrog scheme keeps it in balance.
    """
    grid, T = system.grid, system.T
    dtheta = grid.dtheta
    kinetic = 0.5 * system.mass_rows[:, None] * psi_dot ** 2 * dtheta
    radial = 0.5 * T * grid.face_radii[:, None] * np.diff(psi, axis=0) ** 2 / grid.dr * dtheta
    angular = 0.5 * T * grid.theta_weights[:, None] * (np.roll(psi, -1, axis=1) - psi) ** 2 / dtheta
    cells = kinetic + angular
    cells[:-1] += radial / 2
    cells[1:] += radial / 2
    return float(np.sum(cells)), cells


def ledger_2d(system: "MembraneSystem", state: "MembraneState", following: "MembraneState") -> EnergyLedger:
    from structbound.solver2d import apply_ring_interaction

    dt, t = system.dt, state.time
    disk = system.disk
    psi = state.field.psi
    psi_dot = (following.field.psi - state.field.psi_prev) / (2 * dt)
    H_D, _ = membrane_energy(system, psi, psi_dot)

    ring, weights = state.ring, system.ring_weights
    v_B = (following.ring.psi_B - ring.psi_B_prev) / (2 * dt)
    v_L = psi_dot[-1]
    ring_density = 0.5 * disk.ring_lambda * v_B ** 2 + 0.5 * disk.ring_k * ring.psi_B ** 2
    spring = disk.interaction.kind == InteractionKind.SPRING
    if spring:
        ring_density = ring_density + 0.5 * system.k_tilde * (ring.psi_B - psi[-1]) ** 2

    forces = apply_ring_interaction(system, state)
    ledger = EnergyLedger(time=t, H_D_total=H_D)
    ledger.H_B["b1"] = float(np.sum(weights * ring_density))
    ledger.S_D["b1"] = float(-np.sum(weights * forces.flux * v_L))
    if spring:
        ledger.interaction_power["b1"] = float(np.sum(weights * forces.on_membrane * v_L))
        ledger.balance_residual["b1"] = float(np.sum(weights * forces.residual * v_L))
    else:
        ledger.interaction_power["b1"] = 0.0
        ledger.balance_residual["b1"] = 0.0
    area_power = np.sum(system.area_force(t)[:, None] * psi_dot) * system.grid.dtheta
    ring_power = np.sum(weights * system.ring_force(t) * v_B)
    ledger.external_power = float(area_power + ring_power)
    return ledger


def conservation_report(
    ledgers: Sequence[EnergyLedger],
    per_end_residual_order: Optional[Dict[str, Optional[float]]] = None,
) -> ConservationReport:
    """
    Compares the total energy against the work done on the system. Drift is
    |E(t) - E(0) - W(t)| relative to the largest energy seen, with
    W the time integral of the net power; the defect is the pointwise
    version, dE/dt - net power.
    """
    if len(ledgers) < 2:
        return ConservationReport(0.0, 0.0, 0.0, ledgers[0].total if ledgers else 0.0, per_end_residual_order or {})
    times = np.array([ledger.time for ledger in ledgers])
    energy = np.array([ledger.total for ledger in ledgers])
    net_power = np.array([ledger.net_power for ledger in ledgers])
    work = cumulative_trapezoid(net_power, times, initial=0.0)
    scale = float(np.max(np.abs(energy)))
    mismatch = energy - energy[0] - work
    drift = float(np.max(np.abs(mismatch)) / scale) if scale > 0 else 0.0
    defect = np.gradient(energy, times) - net_power
    return ConservationReport(
        max_drift=drift,
        rms_defect=float(np.sqrt(np.mean(defect ** 2))),
        max_defect=float(np.max(np.abs(defect))),
        initial_energy=float(energy[0]),
        per_end_residual_order=per_end_residual_order or {},
    )


def residual_norms(ledgers: Sequence[EnergyLedger]) -> Dict[str, float]:
    """Largest |balance residual| per end over a run."""
    result: Dict[str, float] = {}
    for end in ENDS:
        values = [abs(ledger.balance_residual[end]) for ledger in ledgers if end in ledger.balance_residual]
        if values:
            result[end] = float(max(values))
    return result


def residual_orders(
    coarse: Dict[str, float], fine: Dict[str, float], ratio: float = 2.0
) -> Dict[str, Optional[float]]:
    """Observed order log(r_coarse / r_fine) / log(ratio) per end; None where the residual vanishes."""
    orders: Dict[str, Optional[float]] = {}
    for end, value in coarse.items():
        fine_value = fine.get(end, 0.0)
        if value > 0 and fine_value > 0:
            orders[end] = float(np.log(value / fine_value) / np.log(ratio))
        else:
            orders[end] = None
    return orders


def tracked_energy(ledgers: List[EnergyLedger]) -> np.ndarray:
    return np.array([ledger.total for ledger in ledgers])
