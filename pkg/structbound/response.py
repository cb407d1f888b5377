"""
Linear response in the Laplace domain

Transforms are taken with the convention u_hat(zeta) = int_0^inf u(t)
exp(i zeta t) dt on the upper half-plane Im zeta > 0; the usual Laplace
variable is s = -i zeta. Impedances map velocity transforms to force
transforms, admittances are their inverses.
"""
import logging
from dataclasses import dataclass
from typing import Any, Iterator, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from structbound.catalog import PulseForcing
from structbound.errors import InvalidSpec, PoleAtZero, TailNotConverged
from structbound.kernels import MemoryKernel, convolve_direct
from structbound.model import InitialData, Scenario, build_system
from structbound.utils import timer

logger = logging.getLogger(__name__)

DEFAULT_ETA = (0.2, 1.0)
DEFAULT_OMEGA = (-5.0, 5.0)
DEFAULT_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class ComplexFrequencyGrid:
    zeta: np.ndarray

    def __post_init__(self):
        zeta = np.atleast_1d(np.asarray(self.zeta, dtype=complex))
        if zeta.size == 0:
            raise InvalidSpec("frequency grid is empty")
        if not np.all(np.isfinite(zeta)):
            raise InvalidSpec("frequency grid has non-finite samples")
        if np.any(zeta.imag <= 0):
            raise InvalidSpec(f"frequency grid must lie in the upper half-plane (min Im = {zeta.imag.min():.3g})")
        object.__setattr__(self, "zeta", zeta)

    def __len__(self) -> int:
        return len(self.zeta)

    def __iter__(self) -> Iterator[complex]:
        return iter(self.zeta)

    @property
    def eta_min(self) -> float:
        return float(self.zeta.imag.min())

    @property
    def s(self) -> np.ndarray:
        return -1j * self.zeta

    @classmethod
    def rectangle(
        cls,
        eta: Tuple[float, float] = DEFAULT_ETA,
        omega: Tuple[float, float] = DEFAULT_OMEGA,
        n_eta: int = 5,
        n_omega: int = 21,
    ) -> "ComplexFrequencyGrid":
        etas = np.linspace(eta[0], eta[1], n_eta)
        omegas = np.linspace(omega[0], omega[1], n_omega)
        return cls((omegas[None, :] + 1j * etas[:, None]).ravel())

    def required_duration(self, amplitude: float = 1.0, tolerance: float = DEFAULT_TOLERANCE) -> float:
        """Signal length after which amplitude exp(-eta_min T) / eta_min drops below `tolerance`."""
        eta = self.eta_min
        return float(max(np.log(amplitude / (tolerance * eta)), 0.0) / eta)


@dataclass
class TransformResult:
    grid: ComplexFrequencyGrid
    values: np.ndarray
    error_bound: float


@dataclass
class AdmittanceTable:
    """Sampled response function; rows are `re_zeta, im_zeta, re_val, im_val, err_bound`."""
    grid: ComplexFrequencyGrid
    values: np.ndarray
    error_bound: np.ndarray

    def rows(self) -> List[Tuple[float, float, float, float, float]]:
        return [
            (float(z.real), float(z.imag), float(v.real), float(v.imag), float(e))
            for z, v, e in zip(self.grid.zeta, self.values, self.error_bound)
        ]

    def relative_error(self, reference: np.ndarray) -> np.ndarray:
        reference = np.asarray(reference, dtype=complex)
        return np.abs(self.values - reference) / np.abs(reference)


### TRANSFORMS ################################################################

@timer
def laplace_transform(
    signal: Any,
    dt: float,
    grid: ComplexFrequencyGrid,
    tolerance: float = DEFAULT_TOLERANCE,
) -> TransformResult:
    """
    Trapezoid quadrature of int_0^T u(t) exp(i zeta t) dt for samples
    u(n dt). The neglected tail is bounded by max|u| exp(-eta_min T) / eta_min,
    assuming the signal stays within its observed range.
    """
    u = np.asarray(signal, dtype=float)
    if dt <= 0:
        raise InvalidSpec(f"dt must be > 0 (got {dt})")
    if not np.all(np.isfinite(u)):
        raise InvalidSpec("signal contains non-finite samples")
    t = dt * np.arange(len(u))
    duration = t[-1] if len(t) else 0.0
    amplitude = float(np.max(np.abs(u))) if len(u) else 0.0
    bound = amplitude * np.exp(-grid.eta_min * duration) / grid.eta_min
    if bound > tolerance:
        raise TailNotConverged(bound=float(bound), tolerance=tolerance)
    values = np.array([trapezoid(u * np.exp(1j * zeta * t), dx=dt) for zeta in grid.zeta])
    return TransformResult(grid, values, float(bound))


### ANALYTIC IMPEDANCES #######################################################

def _nonzero(s: Any) -> np.ndarray:
    s = np.asarray(s, dtype=complex)
    if np.any(s == 0):
        raise PoleAtZero("impedance has a pole at s = 0")
    return s


def _unwrap(values: np.ndarray) -> Any:
    return complex(values) if values.ndim == 0 else values


def impedance_damped_oscillator(k: float, a_damp: float, s: Any) -> Any:
    """Z(s) = k/s + 2 a + s for the unit-mass oscillator psi'' + 2 a psi' + k psi."""
    s = _nonzero(s)
    return _unwrap(k / s + 2 * a_damp + s)


def impedance_lamb(m: float, T: float, a: float, k: float, s: Any) -> Any:
    """m s + T/a + k/s: a mass-spring node on a semi-infinite string."""
    s = _nonzero(s)
    return _unwrap(m * s + T / a + k / s)


def impedance_rlc(R: float, L: float, C: float, s: Any) -> Any:
    s = _nonzero(s)
    return _unwrap(R + L * s + 1 / (C * s))


def impedance_scalar_retarded(m: float, k: float, kernel: MemoryKernel, s: Any) -> Any:
    """m s + k/s + kernel_hat(i s)."""
    s = _nonzero(s)
    return _unwrap(m * s + k / s + kernel.transform(1j * s))


def impedance_operator_retarded(k: float, k_tilde: float, a: float, T: float, zeta: complex) -> np.ndarray:
    """
    -i [zeta Id - A + i a_hat(zeta)] for the first-order form of a spring
    node with retarded string friction, unknowns (sqrt(k) psi, psi'):
    A = [[0, i sqrt(k)], [-i sqrt(k), 0]] and a_hat = diag(0, k_tilde / (b - i zeta)),
    b = a k_tilde / T.
    """
    zeta = complex(zeta)
    if zeta.imag <= 0:
        raise InvalidSpec(f"zeta must lie in the upper half-plane (got {zeta})")
    root = np.sqrt(k)
    A = np.array([[0, 1j * root], [-1j * root, 0]], dtype=complex)
    friction = 0.0 if k_tilde == 0 else k_tilde / (a * k_tilde / T - 1j * zeta)
    a_hat = np.diag([0.0, friction]).astype(complex)
    return -1j * (zeta * np.eye(2) - A + 1j * a_hat)


def scalar_reduction(Z: np.ndarray) -> complex:
    """Schur complement onto the velocity component: Z22 - Z21 Z12 / Z11."""
    if Z[0, 0] == 0:
        raise PoleAtZero("position block vanishes at s = 0")
    return complex(Z[1, 1] - Z[1, 0] * Z[0, 1] / Z[0, 0])


def admittance_operator(Z: Any) -> Any:
    Z = np.asarray(Z, dtype=complex)
    if Z.ndim == 0:
        return complex(1 / Z)
    return np.linalg.inv(Z)


def reciprocity_defect(Z: Any, A: Any) -> float:
    """max |Z A - Id|."""
    Z, A = np.asarray(Z, dtype=complex), np.asarray(A, dtype=complex)
    if Z.ndim == 0:
        return float(abs(Z * A - 1))
    return float(np.max(np.abs(Z @ A - np.eye(Z.shape[0]))))


### MEASUREMENT ###############################################################

def _centred_velocity(psi: np.ndarray, dt: float) -> np.ndarray:
    v = np.zeros_like(psi)
    v[1:-1] = (psi[2:] - psi[:-2]) / (2 * dt)
    return v[:-1]


@timer
def measure_admittance(
    scenario: Scenario,
    grid: Optional[ComplexFrequencyGrid] = None,
    end: str = "b1",
    tolerance: float = DEFAULT_TOLERANCE,
    amplitude: float = 1.0,
) -> AdmittanceTable:
    """
    Kicks the boundary node at `end` of a system at rest with a one-step
    pulse of integral `amplitude` and returns v_hat / f_hat of its velocity.
    The pulse is active only at step 1 of the leapfrog scheme, so f_hat is
    the exact transform of a rectangle of width dt centred on t = dt.
    """
    from structbound.solver1d import simulate
    from structbound.solver2d import simulate_membrane

    grid = grid or ComplexFrequencyGrid.rectangle()
    dt = scenario.dt
    t_end = max(scenario.t_end, grid.required_duration(amplitude, tolerance) + 2 * dt)
    pulse = PulseForcing(value=amplitude / dt, k=scenario.k, t0=dt / 2, duration=dt)
    kicked = scenario.with_boundary_force(end, pulse).replace(initial=InitialData(), t_end=t_end)
    system = build_system(kicked)
    logger.info("Measuring admittance of %s at %s over t in [0, %g]", scenario.name, end, t_end)
    if kicked.is_disk:
        trajectory = simulate_membrane(system, stride=1, with_ledger=False, snapshots=0)  # type: ignore
        psi = trajectory.monitor_series("ring_mean")
    else:
        trajectory = simulate(system, stride=1, with_ledger=False, snapshots=0)  # type: ignore
        psi = trajectory.boundary_series(end)
    velocity = _centred_velocity(psi, dt)
    transform = laplace_transform(velocity, dt, grid, tolerance)
    x = grid.zeta * dt / 2
    f_hat = amplitude * np.exp(1j * grid.zeta * dt) * np.sinc(x / np.pi)
    values = transform.values / f_hat
    return AdmittanceTable(grid, values, np.full(len(grid), transform.error_bound) / np.abs(f_hat))


@timer
def measure_reduced_admittance(
    m: float,
    k: float,
    kernel: MemoryKernel,
    dt: float,
    grid: Optional[ComplexFrequencyGrid] = None,
    tolerance: float = DEFAULT_TOLERANCE,
) -> AdmittanceTable:
    """Same measurement on the reduced boundary equation, kicked by a pulse on [0, dt)."""
    from structbound.solver1d import integrate_reduced_boundary

    grid = grid or ComplexFrequencyGrid.rectangle()
    t_end = grid.required_duration(1.0 / max(m, 1e-12) if m > 0 else 1.0, tolerance) + dt
    pulse = PulseForcing(value=1 / dt, k=1, t0=0.0, duration=dt)
    trajectory = integrate_reduced_boundary(m, k, kernel, 0.0, t_end, dt, force=pulse)
    transform = laplace_transform(trajectory.psi_dot, dt, grid, tolerance)
    zdt = grid.zeta * dt
    f_hat = (np.exp(1j * zdt) - 1) / (1j * zdt)
    return AdmittanceTable(grid, transform.values / f_hat, np.full(len(grid), transform.error_bound) / np.abs(f_hat))


### POSITIVITY ################################################################

@dataclass
class PositivityVerdict:
    passed: bool
    worst_value: float
    witness: Optional[complex]
    worst_work: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_value": self.worst_value,
            "witness": None if self.witness is None else [self.witness.real, self.witness.imag],
            "worst_work": self.worst_work,
        }


def _test_signal(rng: np.random.Generator, t: np.ndarray) -> np.ndarray:
    n_modes = 4
    amplitudes = rng.normal(size=n_modes)
    omegas = rng.uniform(0.1, 5.0, size=n_modes)
    phases = rng.uniform(0, 2 * np.pi, size=n_modes)
    return np.sum(amplitudes[:, None] * np.sin(omegas[:, None] * t[None, :] + phases[:, None]), axis=0)


@timer
def check_positive_definite_ae(
    kernel: MemoryKernel,
    grid: Optional[ComplexFrequencyGrid] = None,
    n_signals: int = 8,
    seed: int = 0,
    t_end: float = 10.0,
    dt: float = 0.025,
    tolerance: float = 1e-12,
) -> PositivityVerdict:
    """
    Dissipativity of a friction kernel: passes when Re kernel_hat(zeta) >= 0
    on the upper half-plane grid, and carries the grid point where Re
    kernel_hat is most negative as witness otherwise. The work
    int v (kappa * v) dt over random test velocities is reported as
    worst_work but does not decide the verdict.
    """
    grid = grid or ComplexFrequencyGrid.rectangle(n_eta=9, n_omega=81)
    if kernel.is_empty:
        return PositivityVerdict(True, 0.0, None, 0.0)
    real_parts = np.real(kernel.transform(grid.zeta))
    worst_idx = int(np.argmin(real_parts))
    worst_value = float(real_parts[worst_idx])

    rng = np.random.default_rng(seed)
    t = dt * np.arange(int(round(t_end / dt)) + 1)
    works = []
    for _ in range(n_signals):
        v = _test_signal(rng, t)
        works.append(float(trapezoid(v * convolve_direct(kernel, v, dt), dx=dt)))
    worst_work = float(min(works))

    scale = max(1.0, float(np.max(np.abs(real_parts))))
    passed = worst_value >= -tolerance * scale
    witness = None if passed else complex(grid.zeta[worst_idx])
    if not passed:
        logger.info(
            "Kernel fails positivity: Re a_hat = %g at zeta = %s, worst work %g", worst_value, witness, worst_work
        )
    return PositivityVerdict(passed, worst_value, witness, worst_work)
