"""
Circular membrane with a structured ring

The disk is sampled on a polar grid with half-offset radii
r_i = (i + 1/2) dr, dr = R / (n_r - 1/2), so there is no node at the origin
and the last node sits on the ring r = R. Every node owns an annular cell;
the flux-form Laplacian then needs no special origin equation. All forces
are per unit angle:

    sigma A_i psi_tt = T [rho_{i+1/2} (psi_{i+1} - psi_i) - rho_{i-1/2} (psi_i - psi_{i-1})] / dr
                       + T w_i (psi_{j+1} - 2 psi_j + psi_{j-1}) / dtheta^2 + A_i F_D

with cell areas A_i, face radii rho and angular weights w_i ~ dr / r_i.
Interior rows are advanced by leapfrog. The ring row is closed by a small
block per theta node, exactly like the end blocks of the 1D solver: the
ring itself when rigidly attached, membrane edge and ring when they are
joined by a spring, or the edge alone when a massless ring is eliminated.
Ring quantities are per unit length and scale with the ring's arc-length
density sqrt(g) = R, which is taken from the induced metric of the ring.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import bisect
from scipy.special import j0, j1

from structbound.catalog import BesselProfile
from structbound.errors import ConvergenceFailure, InvalidSpec, NumericalBlowup
from structbound.geometry import circle, induced_metric
from structbound.model import DiskSpec, InteractionKind, Scenario
from structbound.utils import guard, timer

logger = logging.getLogger(__name__)

ROBIN_SCAN_START = 0.01
ROBIN_SCAN_STEP = 0.01
ROBIN_SCAN_END = 10.0
ROBIN_TOLERANCE = 1e-10


class RingKind(Enum):
    RIGID = "rigid"
    COUPLED = "coupled"
    ELIMINATED = "eliminated"


@dataclass(frozen=True, eq=False)
class PolarGrid:
    r: np.ndarray
    theta: np.ndarray
    dr: float
    dtheta: float
    areas: np.ndarray
    face_radii: np.ndarray
    theta_weights: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.r), len(self.theta)


def polar_grid(disk: DiskSpec) -> PolarGrid:
    dr, R = disk.dr, disk.radius
    r = disk.radii
    areas = r * dr
    areas[-1] = (R ** 2 - (R - dr / 2) ** 2) / 2
    theta_weights = dr / r
    theta_weights[-1] = (dr / 2) / (R - dr / 4)
    return PolarGrid(
        r=r,
        theta=disk.thetas,
        dr=dr,
        dtheta=2 * np.pi / disk.n_theta,
        areas=areas,
        face_radii=(np.arange(1, disk.n_r)) * dr,
        theta_weights=theta_weights,
    )


def membrane_cfl_limit(disk: DiskSpec) -> float:
    """
    2 / sqrt(lambda_max), with lambda_max the Gershgorin bound of the
    mass-weighted membrane operator. A rigidly attached ring adds its mass to
    the edge row.
    """
    grid = polar_grid(disk)
    T = disk.tension
    radial = np.zeros(len(grid.r))
    radial[:-1] += grid.face_radii
    radial[1:] += grid.face_radii
    diagonal = T * radial / grid.dr + 2 * T * grid.theta_weights / grid.dtheta ** 2
    mass = disk.sigma * grid.areas
    if disk.interaction.kind == InteractionKind.RIGID:
        mass[-1] += disk.ring_lambda * disk.radius
    return float(2 / np.sqrt(np.max(2 * diagonal / mass)))


@dataclass
class FieldState2D:
    """Membrane deflection on the polar grid, shape (n_r, n_theta); the last row is the trace psi_L."""
    psi: np.ndarray
    psi_prev: np.ndarray
    time: float
    dt: float

    @property
    def psi_dot(self) -> np.ndarray:
        return (self.psi - self.psi_prev) / self.dt

    @property
    def psi_L(self) -> np.ndarray:
        return self.psi[-1]

    def copy(self) -> "FieldState2D":
        return FieldState2D(self.psi.copy(), self.psi_prev.copy(), self.time, self.dt)


@dataclass
class RingState:
    psi_B: np.ndarray
    psi_B_prev: np.ndarray
    dt: float

    @property
    def psi_B_dot(self) -> np.ndarray:
        return (self.psi_B - self.psi_B_prev) / self.dt


@dataclass
class MembraneState:
    field: FieldState2D
    ring: RingState

    @property
    def time(self) -> float:
        return self.field.time


@dataclass
class RingForces:
    """
    `flux` is T dpsi/dn at the edge (outward normal, one-sided second order),
    `interaction` is k_tilde (psi_B - psi_L), acting with + on the membrane.
    """
    flux: np.ndarray
    interaction: np.ndarray

    @property
    def on_membrane(self) -> np.ndarray:
        return self.interaction

    @property
    def on_ring(self) -> np.ndarray:
        return -self.interaction

    @property
    def residual(self) -> np.ndarray:
        return self.interaction - self.flux


class MembraneSystem:
    """Assembled operators for a validated disk scenario."""
    def __init__(self, scenario: Scenario):
        disk = scenario.interior
        assert isinstance(disk, DiskSpec)
        self.scenario = scenario
        self.disk = disk
        self.dt = scenario.dt
        self.grid = polar_grid(disk)
        self.T, self.sigma = disk.tension, disk.sigma
        self.mass_rows = disk.sigma * self.grid.areas

        ring_metric = induced_metric(circle(disk.radius, disk.n_theta))
        spread = float(np.ptp(ring_metric.sqrt_g))
        if spread > 1e-9 * disk.radius:
            raise InvalidSpec(f"ring metric is not constant (spread {spread:.3g})")
        # arc length per unit angle
        self.arc = float(np.mean(ring_metric.sqrt_g))
        self.ring_weights = ring_metric.sqrt_g * self.grid.dtheta

        self.k_tilde = disk.k_tilde
        lam, k, k_tilde, arc = disk.ring_lambda, disk.ring_k, self.k_tilde, self.arc
        edge_mass = self.mass_rows[-1]
        if disk.interaction.kind == InteractionKind.RIGID:
            self.kind = RingKind.RIGID
            self.block_mass = np.array([[edge_mass + lam * arc]])
            self.block_stiff = np.array([[k * arc]])
        elif lam > 0:
            self.kind = RingKind.COUPLED
            self.block_mass = np.diag([edge_mass, lam * arc])
            self.block_stiff = arc * np.array([[k_tilde, -k_tilde], [-k_tilde, k_tilde + k]])
        else:
            self.kind = RingKind.ELIMINATED
            self.block_mass = np.array([[edge_mass]])
            self.block_stiff = np.array([[arc * (k_tilde - k_tilde ** 2 / (k + k_tilde))]])
        self.block_lu = lu_factor(self.block_mass / self.dt ** 2 + self.block_stiff / 4)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    ### FORCES ################################################################

    def membrane_force(self, psi: np.ndarray) -> np.ndarray:
        """Elastic force per unit angle on every row, the edge row without its ring interaction."""
        g, T = self.grid, self.T
        radial_flux = T * g.face_radii[:, None] * (psi[1:] - psi[:-1]) / g.dr
        force = np.zeros_like(psi)
        force[:-1] += radial_flux
        force[1:] -= radial_flux
        neighbors = np.roll(psi, -1, axis=1) - 2 * psi + np.roll(psi, 1, axis=1)
        force += T * g.theta_weights[:, None] * neighbors / g.dtheta ** 2
        return force

    def area_force(self, t: float) -> np.ndarray:
        """A_i F_D(t) per row."""
        return self.grid.areas * float(self.disk.force(t)[0])

    def ring_force(self, t: float) -> float:
        return float(self.disk.ring_force(t)[0])

    def normal_flux(self, psi: np.ndarray) -> np.ndarray:
        """T dpsi/dn at the edge, one-sided second order."""
        return self.T * (3 * psi[-1] - 4 * psi[-2] + psi[-3]) / (2 * self.grid.dr)

    def eliminated_psi_B(self, psi_edge: np.ndarray, t: float) -> np.ndarray:
        k, k_tilde = self.disk.ring_k, self.k_tilde
        return (k_tilde * psi_edge + self.ring_force(t)) / (k + k_tilde)

    def explicit_block_force(self, psi: np.ndarray, t: float) -> np.ndarray:
        """Right-hand side of the ring block, shape (block size, n_theta)."""
        f_edge = self.membrane_force(psi)[-1] + self.area_force(t)[-1]
        ring = self.arc * self.ring_force(t)
        if self.kind == RingKind.RIGID:
            return (f_edge + ring)[None, :]
        if self.kind == RingKind.ELIMINATED:
            k, k_tilde = self.disk.ring_k, self.k_tilde
            return (f_edge + k_tilde / (k + k_tilde) * ring)[None, :]
        return np.vstack([f_edge, np.full_like(f_edge, ring)])

    def block_unknowns(self, psi: np.ndarray, ring: RingState, previous: bool = False) -> np.ndarray:
        edge = psi[-1]
        if self.kind == RingKind.COUPLED:
            return np.vstack([edge, ring.psi_B_prev if previous else ring.psi_B])
        return edge[None, :].copy()

    def ring_from_block(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.kind == RingKind.COUPLED:
            return x[1].copy()
        if self.kind == RingKind.RIGID:
            return x[0].copy()
        return self.eliminated_psi_B(x[0], t)

    ### INITIAL DATA ##########################################################

    def bessel_beta(self) -> float:
        """Radial wavenumber of the fundamental Robin mode, using the ring's effective support stiffness."""
        disk = self.disk
        k = disk.ring_k
        if self.kind == RingKind.ELIMINATED and k + self.k_tilde > 0:
            k = k * self.k_tilde / (k + self.k_tilde)
        return robin_eigenvalue_oracle(k, disk.tension, disk.radius)

    def initial_state(self) -> MembraneState:
        s, dt, g = self.scenario, self.dt, self.grid
        profile = s.initial.field
        if isinstance(profile, BesselProfile) and profile.params.get("beta") is None:
            profile = BesselProfile(profile.amplitude, beta=self.bessel_beta())
        psi0 = np.asarray(profile.evaluate_polar(g.r, g.theta), dtype=float)
        v0 = np.asarray(s.initial.velocity.evaluate_polar(g.r, g.theta), dtype=float)

        n_theta = len(g.theta)
        if self.kind == RingKind.RIGID:
            psi_B0, v_B0 = psi0[-1].copy(), v0[-1].copy()
        elif self.kind == RingKind.ELIMINATED:
            psi_B0, v_B0 = self.eliminated_psi_B(psi0[-1], 0.0), np.zeros(n_theta)
        else:
            given, given_dot = s.initial.psi_B.get("b1"), s.initial.psi_B_dot.get("b1")
            psi_B0 = psi0[-1].copy() if given is None else np.broadcast_to(np.asarray(given, float), n_theta).copy()
            v_B0 = v0[-1].copy() if given_dot is None \
                else np.broadcast_to(np.asarray(given_dot, float), n_theta).copy()

        acc = (self.membrane_force(psi0) + self.area_force(0.0)[:, None]) / self.mass_rows[:, None]
        ring = RingState(psi_B0, psi_B0.copy(), dt)
        x = self.block_unknowns(psi0, ring)
        f = self.explicit_block_force(psi0, 0.0)
        a = np.linalg.solve(self.block_mass, f - self.block_stiff @ x)
        acc[-1] = a[0]
        psi_prev = psi0 - dt * v0 + dt ** 2 / 2 * acc
        if self.kind == RingKind.COUPLED:
            ring.psi_B_prev = psi_B0 - dt * v_B0 + dt ** 2 / 2 * a[1]
        elif self.kind == RingKind.RIGID:
            ring.psi_B_prev = psi_prev[-1].copy()
        else:
            ring.psi_B_prev = self.eliminated_psi_B(psi_prev[-1], 0.0)
        return MembraneState(FieldState2D(psi0, psi_prev, 0.0, dt), ring)

    def step(self, state: MembraneState) -> MembraneState:
        return step_membrane(self, state)


### OPERATIONS ################################################################

@timer
def step_membrane(system: MembraneSystem, state: MembraneState) -> MembraneState:
    """One leapfrog step of the interior rows followed by the ring block solve."""
    t, dt = state.time, system.dt
    psi, psi_prev = state.field.psi, state.field.psi_prev
    acc = (system.membrane_force(psi) + system.area_force(t)[:, None]) / system.mass_rows[:, None]
    psi_new = 2 * psi - psi_prev + dt ** 2 * acc

    x = system.block_unknowns(psi, state.ring)
    x_prev = system.block_unknowns(psi_prev, state.ring, previous=True)
    rhs = system.explicit_block_force(psi, t) + system.block_mass @ (2 * x - x_prev) / dt ** 2 \
        - system.block_stiff @ (2 * x + x_prev) / 4
    x_new = lu_solve(system.block_lu, rhs)
    psi_new[-1] = x_new[0]
    ring = RingState(system.ring_from_block(x_new, t + dt), state.ring.psi_B.copy(), dt)

    try:
        guard(t + dt, psi_new, ring.psi_B)
    except NumericalBlowup as e:
        logger.error("Blowup at t=%g in %s: %s", t + dt, system.scenario.name, e.message)
        raise
    return MembraneState(FieldState2D(psi_new, psi.copy(), t + dt, dt), ring)


def step_ring(
    disk: DiskSpec,
    ring: RingState,
    near_rows: Tuple[np.ndarray, np.ndarray],
    dt: float,
    t: float = 0.0,
) -> RingState:
    """
    Advances a ring that is rigidly attached to the membrane edge, given the
    membrane rows at R - dr and R - 2 dr. With ring mass lambda > 0,

        lambda psi_B'' + k psi_B + T dpsi/dn = F,

    with the support spring averaged over three levels and the normal flux
    taken explicitly. A massless ring solves the Robin relation
    k psi_B + T dpsi/dn = F together with the one-sided derivative.
    """
    lam, k, T, dr = disk.ring_lambda, disk.ring_k, disk.tension, disk.dr
    near, next_near = (np.asarray(row, dtype=float) for row in near_rows)
    force = float(disk.ring_force(t)[0])
    if lam == 0:
        psi_B = (force + T * (4 * near - next_near) / (2 * dr)) / (k + 3 * T / (2 * dr))
        return RingState(psi_B, ring.psi_B.copy(), dt)
    x, x_prev = ring.psi_B, ring.psi_B_prev
    flux = T * (3 * x - 4 * near + next_near) / (2 * dr)
    rhs = force - flux + lam * (2 * x - x_prev) / dt ** 2 - k * (2 * x + x_prev) / 4
    psi_B = rhs / (lam / dt ** 2 + k / 4)
    guard(t + dt, psi_B)
    return RingState(psi_B, x.copy(), dt)


def apply_ring_interaction(system: MembraneSystem, state: MembraneState) -> RingForces:
    psi = state.field.psi
    interaction = np.zeros(psi.shape[1])
    if system.disk.interaction.kind == InteractionKind.SPRING:
        interaction = system.k_tilde * (state.ring.psi_B - psi[-1])
    return RingForces(flux=system.normal_flux(psi), interaction=interaction)


def ring_solve_residual(
    system: MembraneSystem,
    previous: MembraneState,
    current: MembraneState,
    following: MembraneState,
) -> np.ndarray:
    """Residual of the discrete edge-row balance across three consecutive states, per theta node."""
    dt = system.dt
    x_prev = system.block_unknowns(previous.field.psi, previous.ring)
    x = system.block_unknowns(current.field.psi, current.ring)
    x_next = system.block_unknowns(following.field.psi, following.ring)
    f = system.explicit_block_force(current.field.psi, current.time)
    residual = system.block_mass @ (x_next - 2 * x + x_prev) / dt ** 2 \
        + system.block_stiff @ (x_next + 2 * x + x_prev) / 4 - f
    return residual[0]


def robin_eigenvalue_oracle(k: float, T: float, R: float) -> float:
    """
    Radial wavenumber beta of the fundamental axisymmetric mode J0(beta r)
    under k psi + T dpsi/dr = 0 at r = R, i.e. the smallest positive root of
    k J0(x) - (T / R) x J1(x) with x = beta R. For k = 0 the constant mode
    (beta = 0) is excluded and the first root of J1 is returned.
    """
    violations = []
    if not k >= 0:
        violations.append(f"ring stiffness must be >= 0 (got {k})")
    if not T > 0:
        violations.append(f"tension must be > 0 (got {T})")
    if not R > 0:
        violations.append(f"radius must be > 0 (got {R})")
    if violations:
        raise InvalidSpec(violations)

    scale = k + T / R

    def condition(x: float) -> float:
        return float((k * j0(x) - (T / R) * x * j1(x)) / scale)

    x_lo = ROBIN_SCAN_START
    f_lo = condition(x_lo)
    while x_lo < ROBIN_SCAN_END:
        x_hi = x_lo + ROBIN_SCAN_STEP
        f_hi = condition(x_hi)
        if f_lo == 0:
            root = x_lo
            break
        if f_lo * f_hi < 0:
            root = bisect(condition, x_lo, x_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            break
        x_lo, f_lo = x_hi, f_hi
    else:
        raise ConvergenceFailure(f"no Robin root below x = {ROBIN_SCAN_END} (k={k}, T={T}, R={R})")

    residual = abs(condition(root))
    if residual >= ROBIN_TOLERANCE:
        raise ConvergenceFailure(f"Robin root residual {residual:.3g} above {ROBIN_TOLERANCE:.0e}")
    return float(root / R)


def dominant_frequency(signal: np.ndarray, dt: float, padding: int = 8) -> float:
    """
    Frequency (cycles per unit time) of the strongest non-zero spectral
    peak: mean removed, Hann window, zero padding, then a parabola through
    the peak bin and its neighbours.
    """
    x = np.asarray(signal, dtype=float)
    if len(x) < 4:
        raise ValueError("need at least 4 samples")
    x = (x - x.mean()) * np.hanning(len(x))
    n_fft = padding * int(2 ** np.ceil(np.log2(len(x))))
    spectrum = np.abs(np.fft.rfft(x, n=n_fft))
    peak = int(np.argmax(spectrum[1:-1])) + 1
    a, b, c = spectrum[peak - 1], spectrum[peak], spectrum[peak + 1]
    denominator = a - 2 * b + c
    offset = 0.5 * (a - c) / denominator if denominator != 0 else 0.0
    return float((peak + offset) / (n_fft * dt))


### TRAJECTORIES ##############################################################

MONITORS = ("ring_mean", "center", "edge_mean")


def monitor_value(state: MembraneState, monitor: str) -> float:
    if monitor == "ring_mean":
        return float(np.mean(state.ring.psi_B))
    if monitor == "center":
        return float(np.mean(state.field.psi[0]))
    if monitor == "edge_mean":
        return float(np.mean(state.field.psi_L))
    raise ValueError(f"unknown monitor '{monitor}' (choose from {', '.join(MONITORS)})")


@dataclass
class Trajectory2D:
    times: List[float] = field(default_factory=list)
    psi_B: List[np.ndarray] = field(default_factory=list)
    monitors: dict = field(default_factory=lambda: {monitor: [] for monitor in MONITORS})
    ledgers: list = field(default_factory=list)
    snapshots: List[Tuple[float, np.ndarray]] = field(default_factory=list)

    def monitor_series(self, monitor: str) -> np.ndarray:
        return np.array(self.monitors[monitor])

    def ring_series(self, node: int = 0) -> np.ndarray:
        return np.array([row[node] for row in self.psi_B])


@timer
def simulate_membrane(
    system: MembraneSystem,
    stride: Optional[int] = None,
    t_end: Optional[float] = None,
    with_ledger: bool = True,
    snapshots: Optional[int] = None,
    on_step: Optional[Callable[[MembraneState, MembraneState], None]] = None,
) -> Trajectory2D:
    from structbound.energy import ledger_2d

    scenario = system.scenario
    stride = stride or scenario.output.stride
    n_steps = int(round((t_end if t_end is not None else scenario.t_end) / system.dt))
    n_snapshots = scenario.output.snapshots if snapshots is None else snapshots
    snapshot_steps = set(np.linspace(0, n_steps, n_snapshots).round().astype(int)) if n_snapshots else set()
    trajectory = Trajectory2D()

    logger.info(
        "Running %s: %d steps, dt=%g, %dx%d polar grid, ring %s",
        scenario.name, n_steps, system.dt, *system.shape, system.kind.value,
    )
    state = system.initial_state()
    for n in range(n_steps + 1):
        following = step_membrane(system, state)
        if on_step is not None:
            on_step(state, following)
        if n % stride == 0 or n == n_steps:
            trajectory.times.append(state.time)
            trajectory.psi_B.append(state.ring.psi_B.copy())
            for monitor in MONITORS:
                trajectory.monitors[monitor].append(monitor_value(state, monitor))
            if with_ledger:
                trajectory.ledgers.append(ledger_2d(system, state, following))
        if n in snapshot_steps:
            trajectory.snapshots.append((state.time, state.field.psi.copy()))
        state = following
    logger.info("Finished %s at t=%g", scenario.name, trajectory.times[-1] if trajectory.times else 0.0)
    return trajectory

