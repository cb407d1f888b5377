"""
Coupled 1D interior/boundary time integration

The interior is a node-major array psi of shape (n_cells + 1, k) advanced by
leapfrog with M psi_tt = K psi_zz + F_D. End nodes carry half-cell masses
M dz / 2, which is the ghost-node form of the interface balance. Each end is
closed by a small linear system (the end's "block") whose unknowns are the
end node and, when the boundary node is massive and not rigidly attached,
the boundary node itself:

    (Mass / dt^2 + S / 4 + D / (2 dt)) x^{n+1}
        = f^n + Mass (2 x^n - x^{n-1}) / dt^2 - S (2 x^n + x^{n-1}) / 4 + D x^{n-1} / (2 dt)

S holds the interface and support springs (time averaged), D the outflow
impedance and instantaneous friction (centred), f the explicit forces: the
interior flux K (psi_nb - psi_e) / dz, external forces and retarded friction.
Each block is factorized once per run.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import block_diag, lu_factor, lu_solve

from structbound.catalog import BaseForcing, as_forcing, no_forcing
from structbound.errors import ConvergenceFailure, InvalidSpec, NumericalBlowup
from structbound.kernels import KernelState, MemoryKernel, advance_kernel_state, convolve_direct, \
    retarded_force
from structbound.model import ENDS, NORMALS, BoundaryNodeSpec, InitialData, InteractionKind, InteractionSpec, \
    InteriorSpec1D, OutputPlan, Scenario, outgoing_gaussian, validate_scenario
from structbound.utils import guard, timer

logger = logging.getLogger(__name__)


class EndKind(Enum):
    CLAMPED = "clamped"
    OUTFLOW = "outflow"
    FREE = "free"
    COUPLED = "coupled"
    ELIMINATED = "eliminated"
    RIGID = "rigid"


@dataclass
class FieldState1D:
    grid: np.ndarray
    psi: np.ndarray
    psi_prev: np.ndarray
    time: float
    dt: float

    @property
    def psi_dot(self) -> np.ndarray:
        """Staggered half-step velocity (psi^n - psi^{n-1}) / dt."""
        return (self.psi - self.psi_prev) / self.dt

    @property
    def psi_L(self) -> Dict[str, np.ndarray]:
        return {"b1": self.psi[0], "b2": self.psi[-1]}

    def copy(self) -> "FieldState1D":
        return FieldState1D(self.grid, self.psi.copy(), self.psi_prev.copy(), self.time, self.dt)


@dataclass
class BoundaryState:
    psi_B: np.ndarray
    psi_B_prev: np.ndarray
    dt: float
    kernel_state: Optional[KernelState] = None

    @property
    def psi_B_dot(self) -> np.ndarray:
        return (self.psi_B - self.psi_B_prev) / self.dt


@dataclass
class CoupledState1D:
    field: FieldState1D
    boundaries: Dict[str, BoundaryState] = dataclasses.field(default_factory=dict)

    @property
    def time(self) -> float:
        return self.field.time


@dataclass
class EndBlock:
    end: str
    kind: EndKind
    node: int
    neighbor: int
    normal: int
    mass: np.ndarray
    stiff: np.ndarray
    damp: np.ndarray
    lu: Optional[Tuple[np.ndarray, np.ndarray]] = None
    boundary: Optional[BoundaryNodeSpec] = None
    interaction: InteractionSpec = field(default_factory=InteractionSpec.none)
    # (hooke + k_tilde)^-1 for ELIMINATED ends
    elimination: Optional[np.ndarray] = None

    @property
    def kernel(self) -> Optional[MemoryKernel]:
        return self.boundary.kernel if self.boundary is not None else None

    @property
    def has_node(self) -> bool:
        return self.boundary is not None


@dataclass
class InterfaceForces:
    """
    `flux` is G_D = K psi_z at the end (one-sided, second order), `outward`
    is n G_D with the outward normal n. `interaction` is k_tilde (psi_B - psi_L):
    it acts with + on the interior and with - on the boundary node.
    """
    flux: np.ndarray
    outward: np.ndarray
    interaction: np.ndarray

    @property
    def on_interior(self) -> np.ndarray:
        return self.interaction

    @property
    def on_boundary(self) -> np.ndarray:
        return -self.interaction

    @property
    def residual(self) -> np.ndarray:
        return self.interaction - self.outward


class CoupledSystem:
    """Assembled operators for a validated 1D scenario."""
    def __init__(self, scenario: Scenario):
        interior = scenario.interior
        assert isinstance(interior, InteriorSpec1D)
        self.scenario = scenario
        self.interior = interior
        self.k = interior.k
        self.dt = scenario.dt
        self.dz = interior.dz
        self.n_nodes = interior.n_cells + 1
        self.grid = interior.grid
        self.M = interior.mass_matrix
        self.K = interior.stiffness_matrix
        self.M_inv = np.linalg.inv(self.M)
        # Row-vector form: psi_zz @ A_T == (M^-1 K psi_zz^T)^T
        self.A_T = (self.M_inv @ self.K).T
        self.Z = interior.characteristic_impedance()
        self.end_mass = self.M * self.dz / 2
        self.ends: Dict[str, EndBlock] = {end: self._assemble_end(end) for end in ENDS}

    def _assemble_end(self, end: str) -> EndBlock:
        k, zeros = self.k, np.zeros((self.k, self.k))
        node = 0 if end == "b1" else self.n_nodes - 1
        neighbor = 1 if end == "b1" else self.n_nodes - 2
        common = dict(end=end, node=node, neighbor=neighbor, normal=NORMALS[end])
        boundary = self.scenario.boundaries.get(end)
        interaction = self.scenario.interactions.get(end, InteractionSpec.none())

        if self.interior.is_clamped(end):
            return EndBlock(kind=EndKind.CLAMPED, mass=zeros, stiff=zeros, damp=zeros, **common)  # type: ignore
        if self.interior.is_semi_infinite(end):
            block = EndBlock(  # type: ignore
                kind=EndKind.OUTFLOW, mass=self.end_mass, stiff=zeros, damp=self.Z, **common
            )
        elif boundary is None:
            block = EndBlock(kind=EndKind.FREE, mass=self.end_mass, stiff=zeros, damp=zeros, **common)  # type: ignore
        else:
            alpha = boundary.kernel.alpha_inf if boundary.kernel is not None else 0.0
            if interaction.kind == InteractionKind.RIGID:
                block = EndBlock(
                    kind=EndKind.RIGID,
                    mass=self.end_mass + boundary.mass,
                    stiff=boundary.hooke,
                    damp=alpha * np.eye(k),
                    boundary=boundary,
                    interaction=interaction,
                    **common,  # type: ignore
                )
            else:
                k_tilde = interaction.stiffness(k)
                if boundary.massless:
                    elimination = np.linalg.inv(boundary.hooke + k_tilde)
                    block = EndBlock(
                        kind=EndKind.ELIMINATED,
                        mass=self.end_mass,
                        stiff=k_tilde - k_tilde @ elimination @ k_tilde,
                        damp=zeros,
                        boundary=boundary,
                        interaction=interaction,
                        elimination=elimination,
                        **common,  # type: ignore
                    )
                else:
                    block = EndBlock(
                        kind=EndKind.COUPLED,
                        mass=block_diag(self.end_mass, boundary.mass),
                        stiff=np.block([[k_tilde, -k_tilde], [-k_tilde, k_tilde + boundary.hooke]]),
                        damp=block_diag(zeros, alpha * np.eye(k)),
                        boundary=boundary,
                        interaction=interaction,
                        **common,  # type: ignore
                    )
        dt = self.dt
        block.lu = lu_factor(block.mass / dt ** 2 + block.stiff / 4 + block.damp / (2 * dt))
        return block

    ### FORCES ################################################################

    def interior_force(self, t: float) -> np.ndarray:
        """F_D(t), uniform in z."""
        return self.interior.force(t)

    def end_flux(self, psi: np.ndarray, block: EndBlock) -> np.ndarray:
        """Force of the adjacent interior cell on the end node, K (psi_nb - psi_e) / dz."""
        return (psi[block.neighbor] - psi[block.node]) @ self.K / self.dz

    def explicit_block_force(self, block: EndBlock, psi: np.ndarray, boundary: Optional[BoundaryState], t: float):
        f_end = self.end_flux(psi, block) + self.interior_force(t) * self.dz / 2
        if block.kind in (EndKind.OUTFLOW, EndKind.FREE):
            return f_end
        assert block.boundary is not None
        f_node = block.boundary.external_force(t)
        if boundary is not None and boundary.kernel_state is not None and block.kernel is not None:
            f_node = f_node - retarded_force(block.kernel, boundary.kernel_state.aux)
        if block.kind == EndKind.RIGID:
            return f_end + f_node
        if block.kind == EndKind.ELIMINATED:
            k_tilde = block.interaction.stiffness(self.k)
            return f_end + k_tilde @ block.elimination @ block.boundary.external_force(t)
        return np.concatenate([f_end, f_node])

    def block_unknowns(self, block: EndBlock, psi: np.ndarray, boundary: Optional[BoundaryState]) -> np.ndarray:
        if block.kind == EndKind.COUPLED:
            assert boundary is not None
            return np.concatenate([psi[block.node], boundary.psi_B])
        return psi[block.node].copy()

    def eliminated_psi_B(self, block: EndBlock, psi_end: np.ndarray, t: float) -> np.ndarray:
        assert block.boundary is not None and block.elimination is not None
        k_tilde = block.interaction.stiffness(self.k)
        return block.elimination @ (k_tilde @ psi_end + block.boundary.external_force(t))

    ### INITIAL DATA ##########################################################

    def initial_state(self) -> CoupledState1D:
        """
        psi^{-1} = psi^0 - dt v^0 + dt^2 / 2 a^0, with a^0 from the
        semi-discrete equations at t = 0.
        """
        s, dt, k = self.scenario, self.dt, self.k
        initial = s.initial
        psi0 = np.asarray(initial.field.evaluate(self.grid, k), dtype=float)
        if initial.outgoing is not None:
            direction = -1.0 if initial.outgoing == "right" else 1.0
            slope = np.gradient(psi0, self.dz, axis=0, edge_order=2)
            v0 = direction * slope @ self.interior.speed_operator().T
        else:
            v0 = np.asarray(initial.velocity.evaluate(self.grid, k), dtype=float)
        for end, block in self.ends.items():
            if block.kind == EndKind.CLAMPED:
                psi0[block.node] = 0.0
                v0[block.node] = 0.0

        boundaries: Dict[str, BoundaryState] = {}
        psi_B0: Dict[str, np.ndarray] = {}
        v_B0: Dict[str, np.ndarray] = {}
        for end, block in self.ends.items():
            if not block.has_node:
                continue
            if block.kind == EndKind.RIGID:
                psi_B0[end], v_B0[end] = psi0[block.node].copy(), v0[block.node].copy()
            elif block.kind == EndKind.ELIMINATED:
                psi_B0[end], v_B0[end] = self.eliminated_psi_B(block, psi0[block.node], 0.0), np.zeros(k)
            else:
                given, given_dot = initial.psi_B.get(end), initial.psi_B_dot.get(end)
                psi_B0[end] = psi0[block.node].copy() if given is None else np.array(given, dtype=float)
                v_B0[end] = v0[block.node].copy() if given_dot is None else np.array(given_dot, dtype=float)
            kernel_state = KernelState.at_rest(block.kernel, k, v_B0[end]) if block.kernel is not None else None
            boundaries[end] = BoundaryState(psi_B0[end], psi_B0[end], dt, kernel_state)

        acc = np.zeros_like(psi0)
        acc[1:-1] = self._laplacian(psi0) @ self.A_T + self.interior_force(0.0) @ self.M_inv.T
        for end, block in self.ends.items():
            if block.kind == EndKind.CLAMPED:
                continue
            boundary = boundaries.get(end)
            x = self.block_unknowns(block, psi0, boundary)
            v = np.concatenate([v0[block.node], v_B0[end]]) if block.kind == EndKind.COUPLED else v0[block.node]
            f = self.explicit_block_force(block, psi0, boundary, 0.0)
            a = np.linalg.solve(block.mass, f - block.stiff @ x - block.damp @ v)
            acc[block.node] = a[:k]
            if block.kind == EndKind.COUPLED:
                assert boundary is not None
                boundary.psi_B_prev = psi_B0[end] - dt * v_B0[end] + dt ** 2 / 2 * a[k:]

        psi_prev = psi0 - dt * v0 + dt ** 2 / 2 * acc
        for end, block in self.ends.items():
            boundary = boundaries.get(end)
            if boundary is None:
                continue
            if block.kind == EndKind.RIGID:
                boundary.psi_B_prev = psi_prev[block.node].copy()
            elif block.kind == EndKind.ELIMINATED:
                boundary.psi_B_prev = self.eliminated_psi_B(block, psi_prev[block.node], 0.0)
        field_state = FieldState1D(self.grid, psi0, psi_prev, 0.0, dt)
        return CoupledState1D(field_state, boundaries)

    def _laplacian(self, psi: np.ndarray) -> np.ndarray:
        return (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / self.dz ** 2

    def step(self, state: CoupledState1D) -> CoupledState1D:
        return step_coupled(self, state)


### OPERATIONS ################################################################

def step_interior(system: CoupledSystem, state: FieldState1D) -> FieldState1D:
    """
    One leapfrog step on the interior nodes. End rows are carried over
    unchanged; the end blocks close them.
    """
    dt = system.dt
    psi, psi_prev = state.psi, state.psi_prev
    psi_new = psi.copy()
    acc = system._laplacian(psi) @ system.A_T + system.interior_force(state.time) @ system.M_inv.T
    psi_new[1:-1] = 2 * psi[1:-1] - psi_prev[1:-1] + dt ** 2 * acc
    return FieldState1D(state.grid, psi_new, psi.copy(), state.time + dt, dt)


def _solve_block(system: CoupledSystem, block: EndBlock, x: np.ndarray, x_prev: np.ndarray, f: np.ndarray):
    dt = system.dt
    rhs = f + block.mass @ (2 * x - x_prev) / dt ** 2 - block.stiff @ (2 * x + x_prev) / 4 \
        + block.damp @ x_prev / (2 * dt)
    assert block.lu is not None
    return lu_solve(block.lu, rhs)


def outflow_far_boundary(system: CoupledSystem, state: FieldState1D, end: str) -> np.ndarray:
    """
    New value of a semi-infinite end node: the half cell at the truncation
    point loses energy through the characteristic impedance,
    m_e psi_tt = K (psi_nb - psi_e) / dz - Z psi_t, so rightward waves leave
    through b2 (leftward through b1) without an incoming characteristic.
    """
    block = system.ends[end]
    if block.kind != EndKind.OUTFLOW:
        raise InvalidSpec(f"{end} is not a semi-infinite end")
    f = system.explicit_block_force(block, state.psi, None, state.time)
    return _solve_block(system, block, state.psi[block.node], state.psi_prev[block.node], f)


def _solve_node(node: BoundaryNodeSpec, matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError:
        raise InvalidSpec(f"boundary.{node.label}: singular node matrix, cannot advance the node") from None


def step_boundary(
    node: BoundaryNodeSpec,
    state: BoundaryState,
    interface_force: np.ndarray,
    t: float,
    dt: float,
) -> BoundaryState:
    """
    Advances a lone boundary node, m psi_B'' + k psi_B = interface_force + F_B,
    with the support spring averaged over three levels. Massless nodes solve
    k psi_B = interface_force + F_B instead.
    """
    force = interface_force + node.external_force(t)
    if node.massless:
        return BoundaryState(_solve_node(node, node.hooke, force), state.psi_B.copy(), dt, state.kernel_state)
    x, x_prev = state.psi_B, state.psi_B_prev
    lhs = node.mass / dt ** 2 + node.hooke / 4
    rhs = force + node.mass @ (2 * x - x_prev) / dt ** 2 - node.hooke @ (2 * x + x_prev) / 4
    return BoundaryState(_solve_node(node, lhs, rhs), x.copy(), dt, state.kernel_state)


def start_boundary(node: BoundaryNodeSpec, psi_B0, psi_B_dot0, interface_force, dt: float) -> BoundaryState:
    """Initial BoundaryState for `step_boundary`, using a Taylor start."""
    psi_B0 = np.atleast_1d(np.asarray(psi_B0, dtype=float))
    v0 = np.atleast_1d(np.asarray(psi_B_dot0, dtype=float))
    if node.massless:
        return BoundaryState(psi_B0, psi_B0.copy(), dt)
    a0 = _solve_node(node, node.mass, interface_force + node.external_force(0.0) - node.hooke @ psi_B0)
    return BoundaryState(psi_B0, psi_B0 - dt * v0 + dt ** 2 / 2 * a0, dt)


def one_sided_gradient(psi: np.ndarray, dz: float, end: str) -> np.ndarray:
    if end == "b1":
        return (-3 * psi[0] + 4 * psi[1] - psi[2]) / (2 * dz)
    return (3 * psi[-1] - 4 * psi[-2] + psi[-3]) / (2 * dz)


def interface_force(system: CoupledSystem, state: CoupledState1D, end: str) -> InterfaceForces:
    block = system.ends[end]
    psi = state.field.psi
    flux = one_sided_gradient(psi, system.dz, end) @ system.K
    interaction = np.zeros(system.k)
    boundary = state.boundaries.get(end)
    if boundary is not None and block.interaction.kind == InteractionKind.SPRING:
        interaction = (boundary.psi_B - psi[block.node]) @ block.interaction.stiffness(system.k)
    return InterfaceForces(flux=flux, outward=block.normal * flux, interaction=interaction)


def interface_solve_residual(
    system: CoupledSystem,
    previous: CoupledState1D,
    current: CoupledState1D,
    following: CoupledState1D,
    end: str,
) -> np.ndarray:
    """Residual of the discrete end-node balance (the discrete IEL) across three consecutive states."""
    block = system.ends[end]
    if block.kind == EndKind.CLAMPED:
        return np.zeros(system.k)
    dt = system.dt
    x_prev = system.block_unknowns(block, previous.field.psi, previous.boundaries.get(end))
    x = system.block_unknowns(block, current.field.psi, current.boundaries.get(end))
    x_next = system.block_unknowns(block, following.field.psi, following.boundaries.get(end))
    f = system.explicit_block_force(block, current.field.psi, current.boundaries.get(end), current.time)
    residual = block.mass @ (x_next - 2 * x + x_prev) / dt ** 2 + block.stiff @ (x_next + 2 * x + x_prev) / 4 \
        + block.damp @ (x_next - x_prev) / (2 * dt) - f
    return residual[:system.k]


@timer
def step_coupled(system: CoupledSystem, state: CoupledState1D) -> CoupledState1D:
    t, dt, k = state.time, system.dt, system.k
    new_field = step_interior(system, state.field)
    boundaries: Dict[str, BoundaryState] = {}

    for end, block in system.ends.items():
        node = block.node
        boundary = state.boundaries.get(end)
        if block.kind == EndKind.CLAMPED:
            new_field.psi[node] = 0.0
            continue
        if block.kind == EndKind.OUTFLOW:
            new_field.psi[node] = outflow_far_boundary(system, state.field, end)
            continue
        x = system.block_unknowns(block, state.field.psi, boundary)
        if block.kind == EndKind.COUPLED:
            assert boundary is not None
            x_prev = np.concatenate([state.field.psi_prev[node], boundary.psi_B_prev])
        else:
            x_prev = state.field.psi_prev[node]
        f = system.explicit_block_force(block, state.field.psi, boundary, t)
        x_new = _solve_block(system, block, x, x_prev, f)
        new_field.psi[node] = x_new[:k]
        if boundary is None:
            continue

        if block.kind == EndKind.COUPLED:
            psi_B = x_new[k:]
        elif block.kind == EndKind.RIGID:
            psi_B = x_new.copy()
        else:
            psi_B = system.eliminated_psi_B(block, x_new, t + dt)
        kernel_state = boundary.kernel_state
        if kernel_state is not None and block.kernel is not None:
            v_mid = (psi_B - boundary.psi_B) / dt
            kernel_state, _ = advance_kernel_state(kernel_state, block.kernel, v_mid, dt, midpoint=v_mid)
        boundaries[end] = BoundaryState(psi_B, boundary.psi_B.copy(), dt, kernel_state)

    try:
        guard(t + dt, new_field.psi, *(b.psi_B for b in boundaries.values()))
    except NumericalBlowup as e:
        logger.error("Blowup at t=%g in %s: %s", t + dt, system.scenario.name, e.message)
        raise
    return CoupledState1D(new_field, boundaries)


### TRAJECTORIES ##############################################################

@dataclass
class Trajectory1D:
    times: List[float] = field(default_factory=list)
    psi_B: Dict[str, List[np.ndarray]] = field(default_factory=dict)
    psi_L: Dict[str, List[np.ndarray]] = field(default_factory=dict)
    ledgers: list = field(default_factory=list)
    snapshots: List[Tuple[float, np.ndarray]] = field(default_factory=list)

    def boundary_series(self, end: str, component: int = 0) -> np.ndarray:
        return np.array([row[component] for row in self.psi_B[end]])

    def trace_series(self, end: str, component: int = 0) -> np.ndarray:
        return np.array([row[component] for row in self.psi_L[end]])


@timer
def simulate(
    system: CoupledSystem,
    stride: Optional[int] = None,
    t_end: Optional[float] = None,
    with_ledger: bool = True,
    snapshots: Optional[int] = None,
    on_step: Optional[Callable[[CoupledState1D, CoupledState1D], None]] = None,
) -> Trajectory1D:
    """
    Runs the system from its initial state and records every `stride`-th
    step. Ledger rows at step n need step n + 1, so one step past t_end is
    taken.
    """
    from structbound.energy import ledger_1d

    scenario = system.scenario
    stride = stride or scenario.output.stride
    n_steps = int(round((t_end if t_end is not None else scenario.t_end) / system.dt))
    n_snapshots = scenario.output.snapshots if snapshots is None else snapshots
    snapshot_steps = set(np.linspace(0, n_steps, n_snapshots).round().astype(int)) if n_snapshots else set()
    trajectory = Trajectory1D(
        psi_B={end: [] for end in system.ends},
        psi_L={end: [] for end in system.ends},
    )

    logger.info("Running %s: %d steps, dt=%g, %d nodes", scenario.name, n_steps, system.dt, system.n_nodes)
    state = system.initial_state()
    for n in range(n_steps + 1):
        following = step_coupled(system, state)
        if on_step is not None:
            on_step(state, following)
        if n % stride == 0 or n == n_steps:
            trajectory.times.append(state.time)
            for end in system.ends:
                boundary = state.boundaries.get(end)
                trace = state.field.psi_L[end]
                trajectory.psi_B[end].append(boundary.psi_B.copy() if boundary is not None else trace.copy())
                trajectory.psi_L[end].append(trace.copy())
            if with_ledger:
                trajectory.ledgers.append(ledger_1d(system, state, following))
        if n in snapshot_steps:
            trajectory.snapshots.append((state.time, state.field.psi.copy()))
        state = following
    logger.info("Finished %s at t=%g", scenario.name, trajectory.times[-1] if trajectory.times else 0.0)
    return trajectory


### REDUCED BOUNDARY MODEL ####################################################

@dataclass
class ReducedTrajectory:
    times: np.ndarray
    psi: np.ndarray
    psi_dot: np.ndarray


def _reduced_checks(m: float, k: float, dt: float, t_end: float, denominator: float):
    violations = []
    if m < 0 or k < 0:
        violations.append("mass and stiffness must be >= 0")
    if dt <= 0 or t_end <= 0:
        violations.append("dt and t_end must be > 0")
    if not denominator > 0:
        violations.append("reduced model is degenerate (no mass, stiffness or friction)")
    if violations:
        raise InvalidSpec(violations)


@timer
def integrate_reduced_boundary(
    m: float,
    k: float,
    kernel: MemoryKernel,
    psi0: float,
    t_end: float,
    dt: float,
    v0: float = 0.0,
    force: Optional[BaseForcing] = None,
) -> ReducedTrajectory:
    """
    Integrates m psi'' + k psi + int_0^t kappa(t - tau) psi'(tau) dtau
    + alpha_inf psi' = F(t), with the system at rest for t < 0.

    Each step solves for the mean velocity w over the step:

        w (2m/dt + k dt/2 + alpha + B) = 2m v_n/dt - k psi_n - A0 + F(t_n + dt/2)

    where A0 + B w is the retarded force averaged over the step, exact for
    velocity held at w. Then v_{n+1} = 2w - v_n and psi_{n+1} = psi_n + dt w.
    m = 0 is allowed as long as something else keeps the system determinate.
    """
    force = as_forcing(force)
    n_steps = int(round(t_end / dt))
    if kernel.terms:
        mu = np.array([term.mu for term in kernel.terms])
        E = np.exp(mu * dt)
        phi = (E - 1) / mu
        c = np.array([term.c for term in kernel.terms])
        cos_terms = np.array([term.phase == "cos" for term in kernel.terms])
        B = float(np.sum(c * np.where(cos_terms, phi.real, phi.imag)) / 2)
    else:
        mu = E = phi = c = np.zeros(0)
        cos_terms = np.zeros(0, dtype=bool)
        B = 0.0
    denominator = 2 * m / dt + k * dt / 2 + kernel.alpha_inf + B
    _reduced_checks(m, k, dt, t_end, denominator)

    psi = np.zeros(n_steps + 1)
    v = np.zeros(n_steps + 1)
    psi[0], v[0] = psi0, v0
    z = np.zeros(len(kernel.terms), dtype=complex)
    for n in range(n_steps):
        t = n * dt
        averaged = z * (1 + E) / 2
        A0 = float(np.sum(c * np.where(cos_terms, averaged.real, averaged.imag)))
        F_mid = float(force(t + dt / 2)[0])
        w = (2 * m * v[n] / dt - k * psi[n] - A0 + F_mid) / denominator
        z = E * z + phi * w
        v[n + 1] = 2 * w - v[n]
        psi[n + 1] = psi[n] + dt * w
        if not (np.isfinite(psi[n + 1]) and abs(psi[n + 1]) < 1e12):
            raise NumericalBlowup(time=t + dt, max_abs=float(abs(psi[n + 1])))
    return ReducedTrajectory(dt * np.arange(n_steps + 1), psi, v)


@timer
def integrate_reduced_boundary_picard(
    m: float,
    k: float,
    kernel: MemoryKernel,
    psi0: float,
    t_end: float,
    dt: float,
    v0: float = 0.0,
    force: Optional[BaseForcing] = None,
    tolerance: float = 1e-11,
    max_iterations: int = 200,
) -> ReducedTrajectory:
    """
    Reference solution of the same equation: Picard iteration on the velocity
    history, with the friction integral evaluated by `convolve_direct`.
    """
    force = as_forcing(force)
    n_steps = int(round(t_end / dt))
    regular = MemoryKernel(kernel.terms)
    denominator = 2 * m / dt + k * dt / 2 + kernel.alpha_inf
    _reduced_checks(m, k, dt, t_end, denominator)
    F_mid = np.array([force(n * dt + dt / 2)[0] for n in range(n_steps)])

    v = np.zeros(n_steps + 1)
    psi = np.zeros(n_steps + 1)
    for iteration in range(max_iterations):
        friction = convolve_direct(regular, v, dt)
        psi_new = np.zeros(n_steps + 1)
        v_new = np.zeros(n_steps + 1)
        psi_new[0], v_new[0] = psi0, v0
        for n in range(n_steps):
            g = F_mid[n] - (friction[n] + friction[n + 1]) / 2
            w = (2 * m * v_new[n] / dt - k * psi_new[n] + g) / denominator
            v_new[n + 1] = 2 * w - v_new[n]
            psi_new[n + 1] = psi_new[n] + dt * w
        change = float(np.max(np.abs(v_new - v)))
        v, psi = v_new, psi_new
        if change < tolerance * max(1.0, float(np.max(np.abs(v)))):
            logger.debug("Picard iteration converged after %d iterations", iteration + 1)
            return ReducedTrajectory(dt * np.arange(n_steps + 1), psi, v)
    raise ConvergenceFailure(f"Picard iteration did not converge in {max_iterations} iterations (change {change:.3g})")


def mismatch_forcing(a: float, k_tilde: float, T: float, psi_B0: float, psi_L0: float) -> BaseForcing:
    """
    Source -k_tilde (psi_B(0) - psi_L(0)) exp(-(a k_tilde / T) t) that the
    reduced model carries when the interface spring starts stretched.
    """
    rate = a * k_tilde / T
    amplitude = -k_tilde * (psi_B0 - psi_L0)
    return as_forcing(lambda t: amplitude * np.exp(-rate * t))


def interior_trace_response(
    a: float,
    k_tilde: float,
    T: float,
    psi_L0: float,
    psi_B_samples: np.ndarray,
    dt: float,
) -> np.ndarray:
    """
    Trace psi_L(t) of a semi-infinite string driven through a spring by a
    given boundary motion: psi_L' = b (psi_B - psi_L), b = a k_tilde / T.
    Integrated exactly for piecewise-linear psi_B.
    """
    psi_B = np.asarray(psi_B_samples, dtype=float)
    b = a * k_tilde / T
    out = np.empty_like(psi_B)
    out[0] = psi_L0
    if b == 0:
        out[:] = psi_L0
        return out
    E = np.exp(-b * dt)
    # weights of the exact integral for linear interpolation between samples
    w0 = (1 - E) / (b * dt) - E
    w1 = 1 - (1 - E) / (b * dt)
    for n in range(len(psi_B) - 1):
        out[n + 1] = E * out[n] + w0 * psi_B[n] + w1 * psi_B[n + 1]
    return out


### ANALYTIC REFERENCES #######################################################

def lamb_analytic(m: float, T: float, a: float, k: float, psi0: float, v0: float, t) -> np.ndarray:
    """
    Closed-form solution of m psi'' + (T/a) psi' + k psi = 0, the Lamb model.
    """
    if not m > 0:
        raise InvalidSpec(f"Lamb model needs m > 0 (got {m})")
    if not a > 0 or T < 0 or k < 0:
        raise InvalidSpec("Lamb model needs a > 0, T >= 0, k >= 0")
    t = np.asarray(t, dtype=float)
    c = T / a
    gamma = c / (2 * m)
    disc = c ** 2 - 4 * m * k
    scale = max(c ** 2, 4 * m * k, 1e-300)
    if abs(disc) <= 1e-12 * scale:
        return np.exp(-gamma * t) * (psi0 + (v0 + gamma * psi0) * t)
    if disc < 0:
        omega = np.sqrt(-disc) / (2 * m)
        return np.exp(-gamma * t) * (psi0 * np.cos(omega * t) + (v0 + gamma * psi0) / omega * np.sin(omega * t))
    root = np.sqrt(disc)
    r1, r2 = (-c + root) / (2 * m), (-c - root) / (2 * m)
    A = (v0 - r2 * psi0) / (r1 - r2)
    return A * np.exp(r1 * t) + (psi0 - A) * np.exp(r2 * t)


def massless_spring_boundary_decay(
    a: float,
    k: float,
    T: float,
    psi0: float,
    t,
    source: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    resolution: int = 4096,
) -> np.ndarray:
    """
    psi_B' + (a k / T) psi_B = s(t). Without a source this is pure exponential
    decay; `incoming_source` builds s(t) = a g'(a t) + h(a t) for initial data
    (g, h) that carries an incoming wave.
    """
    if not T > 0:
        raise InvalidSpec(f"tension must be > 0 (got {T})")
    t = np.asarray(t, dtype=float)
    rate = a * k / T
    decay = psi0 * np.exp(-rate * t)
    if source is None:
        return decay
    t_flat = np.atleast_1d(t)
    forced = np.empty_like(t_flat)
    for i, ti in enumerate(t_flat):
        tau = np.linspace(0.0, ti, resolution)
        integrand = np.exp(-rate * (ti - tau)) * source(tau)
        forced[i] = trapezoid(integrand, tau) if ti > 0 else 0.0
    return decay + forced.reshape(t.shape)


def incoming_source(a: float, g_prime: Callable, h: Callable) -> Callable[[np.ndarray], np.ndarray]:
    return lambda tau: a * g_prime(a * tau) + h(a * tau)


### TRANSMISSION LINES ########################################################

def build_mtl(
    L,
    C,
    L_load,
    C_load,
    A=None,
    length: float = 20.0,
    n_cells: int = 1000,
    t_end: float = 10.0,
    dt: Optional[float] = None,
    initial: Optional[InitialData] = None,
    source: Optional[BaseForcing] = None,
    cfl_factor: float = 0.9,
) -> Scenario:
    """
    A semi-infinite multi-conductor line (inductance L, capacitance C per
    unit length) ending in an LC load at b1. The line maps onto the string
    with mass_matrix = L and stiffness_matrix = C^-1, the load onto a boundary
    node with mass L_load and hooke C_load^-1, and the coupling onto
    Spring(A), or Rigid when A is None. In the rigid case the line acts on
    the load as the resistance sqrt(L C^-1).
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    k = L.shape[0]
    C = np.atleast_2d(np.asarray(C, dtype=float))
    L_load = np.atleast_2d(np.asarray(L_load, dtype=float))
    C_load = np.atleast_2d(np.asarray(C_load, dtype=float))
    try:
        C_inv, C_load_inv = np.linalg.inv(C), np.linalg.inv(C_load)
    except np.linalg.LinAlgError as e:
        raise InvalidSpec(f"capacitance matrices must be invertible ({e})") from e
    if L_load.shape == (1, 1) and k > 1:
        L_load = L_load[0, 0] * np.eye(k)
    interaction = InteractionSpec.rigid() if A is None else InteractionSpec.spring(A)
    interior = InteriorSpec1D(
        mass_matrix=L,
        stiffness_matrix=C_inv,
        b1=0.0,
        b2=length,
        n_cells=n_cells,
        semi_infinite=(False, True),
    )
    load = BoundaryNodeSpec(
        mass=L_load,
        hooke=C_load_inv,
        external_force=source if source is not None else no_forcing(k),
        label="b1",
    )
    if initial is None:
        if k == 1 and A is None:
            speed = float(np.sqrt(C_inv[0, 0] / L[0, 0]))
            initial = outgoing_gaussian(float(L_load[0, 0]), float(C_load_inv[0, 0]), speed)
        else:
            initial = InitialData()
    if dt is None:
        try:
            dt = cfl_factor * interior.dz / float(np.max(interior.wave_speeds()))
        except (np.linalg.LinAlgError, ValueError) as e:
            raise InvalidSpec(f"line matrices are not admissible ({e})") from e
    scenario = Scenario(
        interior=interior,
        boundaries={"b1": load, "b2": None},
        interactions={"b1": interaction, "b2": InteractionSpec.none()},
        t_end=t_end,
        dt=dt,
        initial=initial,
        output=OutputPlan(),
        cfl_factor=cfl_factor,
        name="mtl",
    )
    return validate_scenario(scenario)


def telegrapher_fields(system: CoupledSystem, previous: np.ndarray, psi: np.ndarray, following: np.ndarray):
    """
    Voltage and current from three consecutive charge profiles:
    I = psi_t (centred), V = -C^-1 psi_z.
    """
    current = (following - previous) / (2 * system.dt)
    voltage = -np.gradient(psi, system.dz, axis=0, edge_order=2) @ system.K
    return voltage, current


def telegrapher_residual(system: CoupledSystem, snapshots: List[np.ndarray]) -> float:
    """
    Largest residual of L I_t + V_z = 0 and V_t + C^-1 I_z = 0 over interior
    nodes, from five consecutive charge profiles.
    """
    if len(snapshots) < 5:
        raise InvalidSpec("telegrapher residual needs five consecutive snapshots")
    dt = system.dt
    V0, I0 = telegrapher_fields(system, *snapshots[0:3])
    V1, I1 = telegrapher_fields(system, *snapshots[1:4])
    V2, I2 = telegrapher_fields(system, *snapshots[2:5])
    I_t = (I2 - I0) / (2 * dt)
    V_t = (V2 - V0) / (2 * dt)
    V_z = np.gradient(V1, system.dz, axis=0, edge_order=2)
    I_z = np.gradient(I1, system.dz, axis=0, edge_order=2)
    first = I_t @ system.M + V_z
    second = V_t + I_z @ system.K
    inner = slice(3, -3)
    return float(max(np.max(np.abs(first[inner])), np.max(np.abs(second[inner]))))
