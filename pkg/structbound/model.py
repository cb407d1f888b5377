import dataclasses
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.linalg import eigh

from structbound.catalog import BaseForcing, BaseProfile, GaussianProfile, ZeroProfile, forcing_from_section, \
    no_forcing, profile_from_section
from structbound.config import ArrayValue, BoolValue, ChoiceValue, ConfigSection, FloatValue, IntValue, JSONValue, \
    NullableFloatValue, ScenarioConfig, StringValue
from structbound.errors import InvalidSpec
from structbound.kernels import MemoryKernel

if TYPE_CHECKING:
    from structbound.solver1d import CoupledSystem
    from structbound.solver2d import MembraneSystem

logger = logging.getLogger(__name__)

ENDS = ("b1", "b2")
NORMALS = {"b1": -1, "b2": 1}
MAX_CFL_FACTOR = 0.9
MIN_CELLS = 8
MIN_THETA = 16
SPD_TOLERANCE = 1e-12


class InteractionKind(Enum):
    NONE = "none"
    SPRING = "spring"
    RIGID = "rigid"


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    kind: InteractionKind = InteractionKind.NONE
    k_tilde: Optional[np.ndarray] = None

    @classmethod
    def none(cls) -> "InteractionSpec":
        return cls(InteractionKind.NONE)

    @classmethod
    def spring(cls, k_tilde: Any) -> "InteractionSpec":
        return cls(InteractionKind.SPRING, np.atleast_2d(np.asarray(k_tilde, dtype=float)))

    @classmethod
    def rigid(cls) -> "InteractionSpec":
        return cls(InteractionKind.RIGID)

    def stiffness(self, k: int) -> np.ndarray:
        """The interface spring matrix; zero unless kind is SPRING."""
        if self.kind == InteractionKind.SPRING and self.k_tilde is not None:
            return self.k_tilde
        return np.zeros((k, k))


@dataclass(frozen=True, eq=False)
class BoundaryNodeSpec:
    mass: np.ndarray
    hooke: np.ndarray
    external_force: BaseForcing = field(default_factory=no_forcing)
    label: str = "b1"
    kernel: Optional[MemoryKernel] = None

    @property
    def k(self) -> int:
        return self.mass.shape[0]

    @property
    def massless(self) -> bool:
        return not np.any(np.diag(self.mass) > 0)


@dataclass(frozen=True, eq=False)
class InteriorSpec1D:
    mass_matrix: np.ndarray
    stiffness_matrix: np.ndarray
    b1: float = 0.0
    b2: float = 1.0
    n_cells: int = 100
    semi_infinite: Tuple[bool, bool] = (False, False)
    clamped: Tuple[bool, bool] = (False, False)
    force: BaseForcing = field(default_factory=no_forcing)

    @property
    def k(self) -> int:
        return self.mass_matrix.shape[0]

    @property
    def length(self) -> float:
        return self.b2 - self.b1

    @property
    def dz(self) -> float:
        return self.length / self.n_cells

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.b1, self.b2, self.n_cells + 1)

    def is_semi_infinite(self, end: str) -> bool:
        return self.semi_infinite[ENDS.index(end)]

    def is_clamped(self, end: str) -> bool:
        return self.clamped[ENDS.index(end)]

    def _modes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Generalized eigenpairs of K v = a^2 M v, with V^T M V = I."""
        return eigh(self.stiffness_matrix, self.mass_matrix)

    def wave_speeds(self) -> np.ndarray:
        eigvals, _ = self._modes()
        return np.sqrt(eigvals)

    def speed_operator(self) -> np.ndarray:
        """C with C^2 = M^-1 K; rightward waves satisfy psi_t = -C psi_z."""
        eigvals, V = self._modes()
        return V @ np.diag(np.sqrt(eigvals)) @ V.T @ self.mass_matrix

    def characteristic_impedance(self) -> np.ndarray:
        """Z = M C, so that K psi_z = -Z psi_t on a rightward wave. sqrt(T rho) for a string, sqrt(L/C) for a line."""
        return self.mass_matrix @ self.speed_operator()


@dataclass(frozen=True, eq=False)
class DiskSpec:
    radius: float = 1.0
    sigma: float = 1.0
    tension: float = 1.0
    ring_lambda: float = 0.0
    ring_k: float = 0.0
    interaction: InteractionSpec = field(default_factory=InteractionSpec.rigid)
    n_r: int = 32
    n_theta: int = 32
    ring_force: BaseForcing = field(default_factory=no_forcing)
    force: BaseForcing = field(default_factory=no_forcing)

    @property
    def k(self) -> int:
        return 1

    @property
    def wave_speed(self) -> float:
        return float(np.sqrt(self.tension / self.sigma))

    @property
    def dr(self) -> float:
        return self.radius / (self.n_r - 0.5)

    @property
    def radii(self) -> np.ndarray:
        """Half-offset radial nodes; the last one sits on the ring."""
        return (np.arange(self.n_r) + 0.5) * self.dr

    @property
    def thetas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def k_tilde(self) -> float:
        return float(self.interaction.stiffness(1)[0, 0])


@dataclass(frozen=True, eq=False)
class InitialData:
    field: BaseProfile = field(default_factory=ZeroProfile)
    velocity: BaseProfile = dataclasses.field(default_factory=ZeroProfile)
    outgoing: Optional[str] = None
    psi_B: Dict[str, Optional[np.ndarray]] = dataclasses.field(default_factory=dict)
    psi_B_dot: Dict[str, Optional[np.ndarray]] = dataclasses.field(default_factory=dict)


@dataclass(frozen=True)
class OutputPlan:
    stride: int = 10
    snapshots: int = 0


@dataclass(frozen=True, eq=False)
class Scenario:
    interior: Union[InteriorSpec1D, DiskSpec]
    boundaries: Dict[str, Optional[BoundaryNodeSpec]]
    interactions: Dict[str, InteractionSpec]
    t_end: float
    dt: float
    initial: InitialData = field(default_factory=InitialData)
    output: OutputPlan = field(default_factory=OutputPlan)
    cfl_factor: float = MAX_CFL_FACTOR
    name: str = "scenario"

    @property
    def is_disk(self) -> bool:
        return isinstance(self.interior, DiskSpec)

    @property
    def k(self) -> int:
        return self.interior.k

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def structured_ends(self) -> List[str]:
        return [end for end in ENDS if self.boundaries.get(end) is not None]

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_interaction(self, end: str, interaction: InteractionSpec) -> "Scenario":
        if self.is_disk:
            return self.replace(interior=dataclasses.replace(self.interior, interaction=interaction))
        return self.replace(interactions={**self.interactions, end: interaction})

    def with_boundary_force(self, end: str, force: BaseForcing) -> "Scenario":
        if self.is_disk:
            return self.replace(interior=dataclasses.replace(self.interior, ring_force=force))
        node = self.boundaries[end]
        if node is None:
            raise InvalidSpec(f"{end}: no boundary node to force")
        return self.replace(boundaries={**self.boundaries, end: dataclasses.replace(node, external_force=force)})

    def refined(self, factor: int) -> "Scenario":
        """
        Same scenario with the grid and the time step refined by `factor`. On a
        disk only the radial spacing is refined and the time step is split into
        whole substeps below the polar CFL bound.
        """
        if self.is_disk:
            from structbound.solver2d import membrane_cfl_limit

            disk = dataclasses.replace(self.interior, n_r=self.interior.n_r * factor)
            bound = self.cfl_factor * membrane_cfl_limit(disk)
            # extra integer substeps keep the output times of all levels aligned
            substeps = factor * max(1, int(np.ceil(self.dt / factor / bound - 1e-12)))
            return self.replace(interior=disk, dt=self.dt / substeps, output=dataclasses.replace(
                self.output, stride=self.output.stride * substeps))
        interior = dataclasses.replace(self.interior, n_cells=self.interior.n_cells * factor)
        return self.replace(interior=interior, dt=self.dt / factor, output=dataclasses.replace(
            self.output, stride=self.output.stride * factor))


### VALIDATION ################################################################

def _symmetric(matrix: np.ndarray) -> bool:
    return bool(np.allclose(matrix, matrix.T, rtol=1e-12, atol=1e-14))


def _min_eigenvalue(matrix: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh((matrix + matrix.T) / 2)))


def _check_spd(name: str, matrix: Optional[np.ndarray], k: int, violations: List[str]) -> bool:
    if matrix is None or matrix.shape != (k, k):
        violations.append(f"{name} must be a {k}x{k} matrix")
        return False
    if not np.all(np.isfinite(matrix)):
        violations.append(f"{name} has non-finite entries")
        return False
    if not _symmetric(matrix):
        violations.append(f"{name} not symmetric")
        return False
    if _min_eigenvalue(matrix) <= SPD_TOLERANCE * max(1.0, float(np.max(np.abs(matrix)))):
        violations.append(f"{name} not positive definite")
        return False
    return True


def _check_boundary(node: BoundaryNodeSpec, interaction: InteractionSpec, k: int, violations: List[str]):
    prefix = f"boundary.{node.label}"
    if node.mass.shape != (k, k) or node.hooke.shape != (k, k):
        violations.append(f"{prefix}: mass and hooke must be {k}x{k} matrices")
        return
    if not (np.all(np.isfinite(node.mass)) and np.all(np.isfinite(node.hooke))):
        violations.append(f"{prefix}: non-finite mass or hooke")
        return
    if np.any(node.mass != np.diag(np.diag(node.mass))):
        violations.append(f"{prefix}: mass must be diagonal")
    diag = np.diag(node.mass)
    if np.any(diag < 0):
        violations.append(f"{prefix}: mass entries must be >= 0")
    elif np.any(diag > 0) and np.any(diag == 0):
        violations.append(f"{prefix}: mass must be either entirely zero or positive on the diagonal")
    if not _symmetric(node.hooke):
        violations.append(f"{prefix}: hooke not symmetric")
    elif _min_eigenvalue(node.hooke) < -SPD_TOLERANCE:
        violations.append(f"{prefix}: hooke must be nonnegative")
    if node.kernel is not None:
        violations.extend(f"{prefix}: {v}" for v in node.kernel.violations())
        if node.massless and not node.kernel.is_empty and interaction.kind != InteractionKind.RIGID:
            violations.append(f"{prefix}: a memory kernel needs a massive boundary node")
    if node.massless and interaction.kind == InteractionKind.NONE and _min_eigenvalue(node.hooke) <= SPD_TOLERANCE:
        violations.append(f"{prefix}: massless node without interaction needs a positive definite hooke")


def _check_interaction(label: str, interaction: InteractionSpec, k: int, violations: List[str]):
    if interaction.kind == InteractionKind.SPRING:
        if interaction.k_tilde is None or interaction.k_tilde.shape != (k, k):
            violations.append(f"interaction.{label}: k_tilde must be a {k}x{k} matrix")
        elif not np.all(np.isfinite(interaction.k_tilde)) or not _symmetric(interaction.k_tilde) \
                or _min_eigenvalue(interaction.k_tilde) <= 0:
            violations.append(f"interaction.{label}: interaction stiffness not positive definite")


def _validate_interior_1d(s: Scenario, violations: List[str]):
    interior: InteriorSpec1D = s.interior  # type: ignore
    k = interior.k
    mass_ok = _check_spd("interior.mass_matrix", interior.mass_matrix, k, violations)
    stiff_ok = _check_spd("interior.stiffness_matrix", interior.stiffness_matrix, k, violations)
    if not interior.b1 < interior.b2:
        violations.append(f"interior: b1 < b2 required (got {interior.b1}, {interior.b2})")
    if interior.n_cells < MIN_CELLS:
        violations.append(f"interior: n_cells must be >= {MIN_CELLS} (got {interior.n_cells})")

    speeds_ok = False
    if mass_ok and stiff_ok:
        speeds = interior.wave_speeds()
        speeds_ok = bool(np.all(np.isfinite(speeds)) and np.all(speeds > 0))
        if not speeds_ok:
            violations.append("interior: wave speeds must be finite and positive")

    for end in ENDS:
        if interior.is_semi_infinite(end) and interior.is_clamped(end):
            violations.append(f"boundary.{end}: semi_infinite and clamped are exclusive")
        open_end = interior.is_semi_infinite(end) or interior.is_clamped(end)
        node = s.boundaries.get(end)
        interaction = s.interactions.get(end, InteractionSpec.none())
        if open_end:
            if node is not None:
                violations.append(f"boundary.{end}: no boundary node allowed on a semi-infinite or clamped end")
            if interaction.kind != InteractionKind.NONE:
                violations.append(f"interaction.{end}: no interaction allowed on a semi-infinite or clamped end")
            continue
        _check_interaction(end, interaction, k, violations)
        if node is None:
            if interaction.kind != InteractionKind.NONE:
                violations.append(f"interaction.{end}: interaction needs a boundary node")
        else:
            _check_boundary(node, interaction, k, violations)

    if s.initial.outgoing is not None and s.initial.outgoing not in ("right", "left"):
        violations.append("initial.outgoing: needs right, left, or exactly one semi-infinite end")

    if speeds_ok and s.dt > 0 and interior.n_cells >= 1:
        bound = s.cfl_factor * interior.dz / float(np.max(interior.wave_speeds()))
        if s.dt > bound * (1 + 1e-9):
            violations.append(f"CFL violated: dt = {s.dt:.6g} exceeds {bound:.6g}")

    if mass_ok and interior.b1 < interior.b2 and interior.n_cells >= 1:
        _check_rigid_initial_data(s, violations)


def _check_rigid_initial_data(s: Scenario, violations: List[str]):
    interior: InteriorSpec1D = s.interior  # type: ignore
    try:
        trace = s.initial.field.evaluate(interior.grid, interior.k)
    except (KeyError, ValueError, TypeError) as e:
        violations.append(f"initial: cannot evaluate field profile ({e})")
        return
    for end in s.structured_ends():
        interaction = s.interactions.get(end, InteractionSpec.none())
        given = s.initial.psi_B.get(end)
        if interaction.kind == InteractionKind.RIGID and given is not None:
            expected = trace[0] if end == "b1" else trace[-1]
            try:
                matches = np.allclose(given, expected, rtol=1e-9, atol=1e-12)
            except ValueError:
                matches = False
            if not matches:
                violations.append(f"initial.psi_B_{end}: rigid interaction requires psi_B(0) = psi_L(0)")


def _validate_disk(s: Scenario, violations: List[str]):
    from structbound.solver2d import membrane_cfl_limit

    disk: DiskSpec = s.interior  # type: ignore
    if not (disk.radius > 0 and disk.sigma > 0 and disk.tension > 0):
        violations.append("interior: radius, sigma and tension must be > 0")
    if disk.ring_lambda < 0 or disk.ring_k < 0:
        violations.append("boundary.b1: ring mass and ring stiffness must be >= 0")
    if disk.n_theta < MIN_THETA or disk.n_theta % 2:
        violations.append(f"interior: n_theta must be even and >= {MIN_THETA} (got {disk.n_theta})")
    if disk.n_r < MIN_CELLS:
        violations.append(f"interior: n_r must be >= {MIN_CELLS} (got {disk.n_r})")
    _check_interaction("b1", disk.interaction, 1, violations)
    if disk.ring_lambda == 0 and disk.ring_k == 0 and disk.interaction.kind == InteractionKind.NONE:
        violations.append("boundary.b1: massless ring without interaction needs ring stiffness > 0")
    if not violations and s.dt > 0:
        bound = s.cfl_factor * membrane_cfl_limit(disk)
        if s.dt > bound * (1 + 1e-9):
            violations.append(f"CFL violated: dt = {s.dt:.6g} exceeds {bound:.6g}")


def scenario_violations(s: Scenario) -> List[str]:
    violations: List[str] = []
    if not (np.isfinite(s.t_end) and s.t_end > 0):
        violations.append(f"time.t_end must be > 0 (got {s.t_end})")
    if not (np.isfinite(s.dt) and s.dt > 0):
        violations.append(f"time.dt must be > 0 (got {s.dt})")
    if not 0 < s.cfl_factor <= MAX_CFL_FACTOR:
        violations.append(f"time.cfl_factor must be in (0, {MAX_CFL_FACTOR}] (got {s.cfl_factor})")
    if s.output.stride < 1:
        violations.append("output.stride must be >= 1")
    if s.is_disk:
        _validate_disk(s, violations)
    else:
        _validate_interior_1d(s, violations)
    return violations


def validate_scenario(s: Scenario) -> Scenario:
    """Returns `s` untouched if it is well-posed; otherwise raises InvalidSpec listing every violation."""
    violations = scenario_violations(s)
    if violations:
        raise InvalidSpec(violations)
    return s


def build_system(s: Scenario) -> Union["CoupledSystem", "MembraneSystem"]:
    from structbound.solver1d import CoupledSystem
    from structbound.solver2d import MembraneSystem

    validate_scenario(s)
    if s.is_disk:
        return MembraneSystem(s)
    return CoupledSystem(s)


### SCENARIO DOCUMENTS ########################################################

def as_matrix(value: Any, k: int) -> np.ndarray:
    """Scalar -> value * I, vector -> diagonal, matrix -> itself."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(k)
    if arr.ndim == 1:
        if arr.size != k:
            raise ValueError(f"expected {k} diagonal entries, got {arr.size}")
        return np.diag(arr)
    if arr.shape != (k, k):
        raise ValueError(f"expected a {k}x{k} matrix, got shape {arr.shape}")
    return arr


class _Reader:
    """Reads typed values from scenario sections, collecting failures instead of raising."""
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.violations: List[str] = [f"unknown section [{name}]" for name in config.unknown_sections]

    def get(self, section: str, key: str, value: Any):
        try:
            return self.config[section].get(key, value)
        except ValueError as e:
            self.violations.append(str(e))
            return value.value

    def matrix(self, section: str, key: str, k: int, default: Any) -> np.ndarray:
        raw = self.get(section, key, ArrayValue(default))
        try:
            return as_matrix(raw, k)
        except ValueError as e:
            self.violations.append(f"{section}.{key}: {e}")
            return as_matrix(default, k)

    def attempt(self, func, *args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ValueError, KeyError, TypeError) as e:
            self.violations.append(str(e))
            return None


def _read_interaction(reader: _Reader, end: str, k: int) -> InteractionSpec:
    section = f"interaction.{end}"
    kind = reader.get(section, "kind", ChoiceValue([kind.value for kind in InteractionKind], "none"))
    if kind == "spring":
        return InteractionSpec.spring(reader.matrix(section, "k_tilde", k, 1.0))
    if kind == "rigid":
        return InteractionSpec.rigid()
    return InteractionSpec.none()


def _read_boundary(reader: _Reader, end: str, k: int) -> Optional[BoundaryNodeSpec]:
    section = f"boundary.{end}"
    force = reader.attempt(forcing_from_section, reader.config[section], "force", k) or no_forcing(k)
    kernel = reader.attempt(
        MemoryKernel.from_list,
        reader.get(section, "kernel", JSONValue()),
        reader.get(section, "alpha_inf", FloatValue(0.0)),
    )
    return BoundaryNodeSpec(
        mass=reader.matrix(section, "mass", k, 0.0),
        hooke=reader.matrix(section, "hooke", k, 0.0),
        external_force=force,
        label=end,
        kernel=kernel if kernel is not None and not kernel.is_empty else None,
    )


def _read_node_vector(reader: _Reader, key: str, k: int) -> Optional[np.ndarray]:
    value = reader.get("initial", key, ArrayValue())
    if value is None:
        return None
    try:
        return np.broadcast_to(np.atleast_1d(value), (k,)).astype(float)
    except ValueError:
        reader.violations.append(f"initial.{key}: expected a scalar or {k} entries")
        return None


def _read_initial(reader: _Reader, k: int, extra: Dict[str, Any]) -> InitialData:
    section = reader.config["initial"]
    field_profile = reader.attempt(profile_from_section, section, "field", **extra) or ZeroProfile()
    velocity_profile = reader.attempt(profile_from_section, section, "velocity", **extra) or ZeroProfile()
    outgoing = reader.get("initial", "outgoing", StringValue("false")).lower()
    psi_B, psi_B_dot = {}, {}
    for end in ENDS:
        psi_B[end] = _read_node_vector(reader, f"psi_B_{end}", k)
        psi_B_dot[end] = _read_node_vector(reader, f"psi_B_dot_{end}", k)
    return InitialData(
        field=field_profile,
        velocity=velocity_profile,
        outgoing=None if outgoing in ("false", "no", "0", "off", "") else outgoing,
        psi_B=psi_B,
        psi_B_dot=psi_B_dot,
    )


def _resolve_outgoing(outgoing: Optional[str], semi_infinite: Tuple[bool, bool]) -> Optional[str]:
    """`true` means: toward the semi-infinite end."""
    if outgoing in (None, "right", "left"):
        return outgoing
    if outgoing in ("true", "yes", "1", "on"):
        if semi_infinite == (False, True):
            return "right"
        if semi_infinite == (True, False):
            return "left"
    return "unresolved"


def _time_step(reader: _Reader, stable_dt: float, cfl_factor: float) -> float:
    dt = reader.get("time", "dt", NullableFloatValue())
    return cfl_factor * stable_dt if dt is None else dt


def scenario_from_config(config: ScenarioConfig, name: Optional[str] = None) -> Scenario:
    """
    Builds and validates a Scenario from a scenario document. Every problem,
    from a malformed value to a violated invariant, ends up in one InvalidSpec.
    """
    from structbound.solver2d import membrane_cfl_limit

    reader = _Reader(config)
    if name is None:
        name = config.source.stem if config.source is not None else "scenario"
    kind = reader.get("interior", "kind", ChoiceValue(["string", "disk"], "string"))
    t_end = reader.get("time", "t_end", FloatValue(10.0))
    cfl_factor = reader.get("time", "cfl_factor", FloatValue(MAX_CFL_FACTOR))
    output = OutputPlan(
        stride=reader.get("output", "stride", IntValue(10)),
        snapshots=reader.get("output", "snapshots", IntValue(0)),
    )

    if kind == "disk":
        interaction = _read_interaction(reader, "b1", 1)
        disk = DiskSpec(
            radius=reader.get("interior", "radius", FloatValue(1.0)),
            sigma=reader.get("interior", "sigma", FloatValue(1.0)),
            tension=reader.get("interior", "tension", FloatValue(1.0)),
            ring_lambda=reader.get("boundary.b1", "mass", FloatValue(0.0)),
            ring_k=reader.get("boundary.b1", "hooke", FloatValue(0.0)),
            interaction=interaction,
            n_r=reader.get("interior", "n_r", IntValue(32)),
            n_theta=reader.get("interior", "n_theta", IntValue(32)),
            ring_force=reader.attempt(forcing_from_section, config["boundary.b1"], "force", 1) or no_forcing(),
            force=reader.attempt(forcing_from_section, config["interior"], "force", 1) or no_forcing(),
        )
        initial = _read_initial(reader, 1, {})
        stable_dt = 0.0
        if not reader.violations and disk.n_r >= 2 and disk.radius > 0 and disk.sigma > 0 and disk.tension > 0:
            stable_dt = membrane_cfl_limit(disk)
        scenario = Scenario(
            interior=disk,
            boundaries={"b1": None, "b2": None},
            interactions={"b1": interaction},
            t_end=t_end,
            dt=_time_step(reader, stable_dt, cfl_factor),
            initial=initial,
            output=output,
            cfl_factor=cfl_factor,
            name=name,
        )
    else:
        mass_raw = reader.get("interior", "mass_matrix", ArrayValue(1.0))
        k = 1 if mass_raw is None or np.ndim(mass_raw) == 0 else int(np.shape(mass_raw)[0])
        b1 = reader.get("interior", "b1", FloatValue(0.0))
        b2 = reader.get("interior", "b2", FloatValue(1.0))
        semi_infinite = tuple(reader.get(f"boundary.{end}", "semi_infinite", BoolValue(False)) for end in ENDS)
        clamped = tuple(reader.get(f"boundary.{end}", "clamped", BoolValue(False)) for end in ENDS)
        interior = InteriorSpec1D(
            mass_matrix=reader.matrix("interior", "mass_matrix", k, 1.0),
            stiffness_matrix=reader.matrix("interior", "stiffness_matrix", k, 1.0),
            b1=b1,
            b2=b2,
            n_cells=reader.get("interior", "n_cells", IntValue(100)),
            semi_infinite=semi_infinite,  # type: ignore
            clamped=clamped,  # type: ignore
            force=reader.attempt(forcing_from_section, config["interior"], "force", k) or no_forcing(k),
        )
        boundaries: Dict[str, Optional[BoundaryNodeSpec]] = {}
        interactions: Dict[str, InteractionSpec] = {}
        for idx, end in enumerate(ENDS):
            if semi_infinite[idx] or clamped[idx]:
                boundaries[end] = None
                interactions[end] = InteractionSpec.none()
            else:
                boundaries[end] = _read_boundary(reader, end, k)
                interactions[end] = _read_interaction(reader, end, k)
        initial = _read_initial(reader, k, {"b1": b1, "length": b2 - b1})
        initial = dataclasses.replace(initial, outgoing=_resolve_outgoing(initial.outgoing, semi_infinite))
        stable_dt = 0.0
        if not reader.violations and interior.n_cells > 0 and b2 > b1:
            try:
                stable_dt = interior.dz / float(np.max(interior.wave_speeds()))
            except (np.linalg.LinAlgError, ValueError):
                stable_dt = 0.0
        scenario = Scenario(
            interior=interior,
            boundaries=boundaries,
            interactions=interactions,
            t_end=t_end,
            dt=_time_step(reader, stable_dt, cfl_factor),
            initial=initial,
            output=output,
            cfl_factor=cfl_factor,
            name=name,
        )

    violations = reader.violations + (scenario_violations(scenario) if not reader.violations else [])
    if violations:
        raise InvalidSpec(violations)
    logger.info("Loaded scenario %s (%s, dt=%g, t_end=%g)", name, kind, scenario.dt, scenario.t_end)
    return scenario


def outgoing_gaussian(m: float, k: float, a: float, amplitude: float = 1.0, center: float = 0.0) -> InitialData:
    """
    A Gaussian moving away from a Lamb-type boundary at `center`, with width
    w^2 = m a^2 / k so that its curvature matches the boundary node's initial
    acceleration.
    """
    width = float(np.sqrt(m * a ** 2 / k)) if m > 0 and k > 0 else 1.0
    return InitialData(field=GaussianProfile(amplitude=amplitude, center=center, width=width), outgoing="right")
