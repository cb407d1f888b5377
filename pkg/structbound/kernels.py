"""
Retarded friction kernels

A kernel is a finite sum of damped (co)sinusoids,

    kappa(t) = sum_i c_i exp(-lambda_i t) {cos|sin}(omega_i t)  +  alpha_inf delta(t)

and acts on a velocity history v as F(t) = int_0^t kappa(t - tau) v(tau) dtau
+ alpha_inf v(t). Each term is realized by one complex auxiliary variable
z_i with dz_i/dt = (-lambda_i + i omega_i) z_i + v, so Re z_i (cos terms) or
Im z_i (sin terms) is the convolution of v with that term. The complex number
is the (value, phase-companion) pair of the term.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from structbound.errors import InvalidSpec
from structbound.utils import timer

logger = logging.getLogger(__name__)

PHASES = ("cos", "sin")


@dataclass(frozen=True)
class KernelTerm:
    c: float
    decay: float
    omega: float = 0.0
    phase: str = "cos"

    @property
    def mu(self) -> complex:
        return complex(-self.decay, self.omega)

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        carrier = np.cos(self.omega * t) if self.phase == "cos" else np.sin(self.omega * t)
        return self.c * np.exp(-self.decay * t) * carrier

    def select(self, z: Any) -> Any:
        return np.real(z) if self.phase == "cos" else np.imag(z)

    def transform(self, zeta: Any) -> Any:
        """int_0^inf term(t) exp(i zeta t) dt, for Im zeta > -decay."""
        zeta = np.asarray(zeta, dtype=complex)
        plus = 1.0 / (self.decay - 1j * self.omega - 1j * zeta)
        minus = 1.0 / (self.decay + 1j * self.omega - 1j * zeta)
        if self.phase == "cos":
            return self.c * (plus + minus) / 2
        return self.c * (plus - minus) / 2j

    def scaled(self, factor: float) -> "KernelTerm":
        return KernelTerm(self.c * factor, self.decay, self.omega, self.phase)


@dataclass(frozen=True)
class MemoryKernel:
    terms: Tuple[KernelTerm, ...] = ()
    alpha_inf: float = 0.0

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def is_empty(self) -> bool:
        return not self.terms and self.alpha_inf == 0.0

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """The regular part of the kernel; alpha_inf is not sampled."""
        t = np.asarray(t, dtype=float)
        values = np.zeros_like(t)
        for term in self.terms:
            values = values + term.evaluate(t)
        return values

    def transform(self, zeta: Any) -> Any:
        zeta = np.asarray(zeta, dtype=complex)
        values = np.full_like(zeta, self.alpha_inf, dtype=complex)
        for term in self.terms:
            values = values + term.transform(zeta)
        return values

    def scaled(self, factor: float) -> "MemoryKernel":
        return MemoryKernel(tuple(t.scaled(factor) for t in self.terms), self.alpha_inf * factor)

    def with_signs_flipped(self) -> "MemoryKernel":
        return self.scaled(-1.0)

    def violations(self) -> List[str]:
        result = []
        for idx, term in enumerate(self.terms):
            if not np.isfinite([term.c, term.decay, term.omega]).all():
                result.append(f"kernel term {idx}: non-finite parameter")
            elif term.decay <= 0:
                result.append(f"kernel term {idx}: decay rate must be > 0 (got {term.decay})")
            if term.phase not in PHASES:
                result.append(f"kernel term {idx}: phase must be one of {', '.join(PHASES)}")
        if not np.isfinite(self.alpha_inf) or self.alpha_inf < 0:
            result.append(f"kernel instantaneous coefficient must be >= 0 (got {self.alpha_inf})")
        return result

    def to_list(self) -> List[Dict[str, Any]]:
        return [{"c": t.c, "lambda": t.decay, "omega": t.omega, "phase": t.phase} for t in self.terms]

    @classmethod
    def from_list(cls, terms: Optional[Iterable[Dict[str, Any]]], alpha_inf: float = 0.0) -> "MemoryKernel":
        """Accepts `[{"c": 2, "lambda": 2, "omega": 0, "phase": "cos"}, ...]`; omega and phase are optional."""
        parsed = []
        for idx, term in enumerate(terms or []):
            if not isinstance(term, dict) or "c" not in term or "lambda" not in term:
                raise ValueError(f"kernel term {idx} needs at least 'c' and 'lambda'")
            parsed.append(KernelTerm(
                c=float(term["c"]),
                decay=float(term["lambda"]),
                omega=float(term.get("omega", 0.0)),
                phase=str(term.get("phase", "cos")),
            ))
        return cls(tuple(parsed), float(alpha_inf))


@dataclass
class KernelState:
    """
    `aux` has one complex entry per kernel term (and per field component);
    real and imaginary parts are the value and its phase companion. All zeros
    is a system at rest for t <= 0.
    """
    aux: np.ndarray
    last_input: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @classmethod
    def at_rest(cls, kernel: MemoryKernel, components: int = 1, velocity: Any = 0.0) -> "KernelState":
        last_input = np.broadcast_to(np.asarray(velocity, dtype=float), (components,)).copy()
        return cls(aux=np.zeros((len(kernel), components), dtype=complex), last_input=last_input)

    def copy(self) -> "KernelState":
        return KernelState(self.aux.copy(), self.last_input.copy())

    @property
    def pairs(self) -> np.ndarray:
        """Real view, shape (n_terms, 2, components)."""
        return np.stack([self.aux.real, self.aux.imag], axis=1)


def kernel_from_string_coupling(a: float, k_tilde: float, T: float) -> MemoryKernel:
    """
    Friction seen by a boundary node attached through a spring k_tilde to a
    semi-infinite string with wave speed a and tension T: a single decaying
    exponential k_tilde exp(-(a k_tilde / T) t).
    """
    violations = []
    if not a > 0:
        violations.append(f"wave speed must be > 0 (got {a})")
    if not T > 0:
        violations.append(f"tension must be > 0 (got {T})")
    if not k_tilde >= 0:
        violations.append(f"interaction stiffness must be >= 0 (got {k_tilde})")
    if violations:
        raise InvalidSpec(violations)
    if k_tilde == 0:
        return MemoryKernel()
    return MemoryKernel((KernelTerm(c=k_tilde, decay=a * k_tilde / T),))


def _propagators(kernel: MemoryKernel, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """E = exp(mu dt) and phi = (E - 1) / mu per term."""
    mu = np.array([term.mu for term in kernel.terms], dtype=complex)
    E = np.exp(mu * dt)
    phi = np.where(np.abs(mu * dt) > 1e-8, (E - 1) / np.where(mu == 0, 1, mu), dt * (1 + mu * dt / 2))
    return E, phi


def retarded_force(kernel: MemoryKernel, aux: np.ndarray) -> np.ndarray:
    """sum_i c_i sel(z_i); shape (components,)."""
    if not kernel.terms:
        return np.zeros(aux.shape[1:]) if aux.ndim > 1 else np.zeros(1)
    return np.sum([term.c * term.select(aux[i]) for i, term in enumerate(kernel.terms)], axis=0)


def advance_kernel_state(
    state: KernelState,
    kernel: MemoryKernel,
    velocity: Any,
    dt: float,
    midpoint: Optional[Any] = None,
) -> Tuple[KernelState, np.ndarray]:
    """
    Advances the auxiliary variables over one step of length dt, holding the
    velocity at its midpoint value, which is `midpoint` when the caller knows
    it and (last_input + velocity) / 2 otherwise. Returns the new state and the
    friction force at the end of the step.
    """
    velocity = np.atleast_1d(np.asarray(velocity, dtype=float))
    v_mid = (state.last_input + velocity) / 2 if midpoint is None else np.atleast_1d(np.asarray(midpoint, dtype=float))
    if kernel.terms:
        E, phi = _propagators(kernel, dt)
        aux = E[:, None] * state.aux + phi[:, None] * v_mid[None, :]
    else:
        aux = state.aux
    new_state = KernelState(aux=aux, last_input=velocity.copy())
    return new_state, retarded_force(kernel, aux) + kernel.alpha_inf * velocity


@timer
def convolve_direct(kernel: MemoryKernel, velocity_samples: Sequence[float], dt: float) -> np.ndarray:
    """
    Brute-force composite trapezoid evaluation of int_0^t kappa(t - tau) v(tau)
    dtau at every sample time, plus alpha_inf v(t). O(N^2); meant as a
    reference for the auxiliary-variable engine.
    """
    v = np.asarray(velocity_samples, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidSpec("velocity samples contain non-finite entries")
    if dt <= 0:
        raise InvalidSpec(f"dt must be > 0 (got {dt})")
    out = kernel.alpha_inf * v
    if not kernel.terms:
        return out
    samples = kernel.evaluate(dt * np.arange(len(v)))
    result = np.zeros_like(v)
    for n in range(1, len(v)):
        result[n] = trapezoid(samples[n::-1] * v[:n + 1], dx=dt)
    return out + result
