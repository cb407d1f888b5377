"""
Named catalog of initial profiles and forcing functions. Scenario documents
pick entries by name, so every run is reproducible from its text alone.
"""
from typing import Any, Callable, Dict, Optional, Type

import numpy as np
from scipy.special import j0

from structbound.config import ArrayValue, ConfigSection, FloatValue, IntValue, NullableFloatValue, StringValue


def _amplitude(value: Any, k: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(k, float(arr[0]))
    if arr.size != k:
        raise ValueError(f"amplitude has {arr.size} components, field has {k}")
    return arr


class BaseProfile:
    name: str

    def __init__(self, amplitude: Any = 1.0, **params):
        self.amplitude = amplitude
        self.params = params

    def shape(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, z: np.ndarray, k: int = 1) -> np.ndarray:
        """Values on 1D nodes, shape (len(z), k)."""
        return self.shape(np.asarray(z, dtype=float))[:, None] * _amplitude(self.amplitude, k)[None, :]

    def evaluate_polar(self, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Values on a polar grid, shape (len(r), len(theta))."""
        raise ValueError(f"Profile '{self.name}' is not defined on a disk")


class ZeroProfile(BaseProfile):
    name = "zero"

    def shape(self, z):
        return np.zeros_like(z)

    def evaluate_polar(self, r, theta):
        return np.zeros((len(r), len(theta)))


class GaussianProfile(BaseProfile):
    """A exp(-(z - center)^2 / (2 width^2)); on a disk the center is (x0, y0)."""
    name = "gaussian"

    def shape(self, z):
        center, width = self.params.get("center", 0.0), self.params.get("width", 1.0)
        return np.exp(-((z - center) ** 2) / (2 * width ** 2))

    def evaluate_polar(self, r, theta):
        x = r[:, None] * np.cos(theta)[None, :]
        y = r[:, None] * np.sin(theta)[None, :]
        x0, y0, width = self.params.get("x0", 0.0), self.params.get("y0", 0.0), self.params.get("width", 1.0)
        return float(np.ravel(self.amplitude)[0]) * np.exp(-((x - x0) ** 2 + (y - y0) ** 2) / (2 * width ** 2))


class SineModeProfile(BaseProfile):
    """A sin(n pi (z - b1) / L), the n-th standing mode of a clamped interval."""
    name = "sine_mode"

    def shape(self, z):
        b1, length, mode = self.params["b1"], self.params["length"], self.params.get("mode", 1)
        return np.sin(mode * np.pi * (z - b1) / length)


class ExponentialTaperProfile(BaseProfile):
    """
    A exp(rate (z - center)) exp(-((z - center) / taper)^4). The quartic taper
    has vanishing first three derivatives at the center, so the profile matches
    a pure exponential there to third order.
    """
    name = "exponential_taper"

    def shape(self, z):
        center, rate = self.params.get("center", 0.0), self.params.get("rate", 1.0)
        taper = self.params.get("taper", 2.0)
        s = z - center
        return np.exp(rate * s - (s / taper) ** 4)


class BesselProfile(BaseProfile):
    """A J0(beta r), axisymmetric."""
    name = "bessel"

    def evaluate_polar(self, r, theta):
        beta = self.params.get("beta")
        if beta is None:
            raise ValueError("bessel profile needs beta (or a disk scenario to derive it)")
        return float(np.ravel(self.amplitude)[0]) * np.repeat(j0(beta * r)[:, None], len(theta), axis=1)


class SamplesProfile(BaseProfile):
    """Custom samples, linearly interpolated onto the grid."""
    name = "samples"

    def evaluate(self, z, k=1):
        points = np.asarray(self.params["points"], dtype=float)
        values = np.asarray(self.params["values"], dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[1] not in (1, k):
            raise ValueError(f"samples have {values.shape[1]} components, field has {k}")
        out = np.column_stack([np.interp(z, points, values[:, i]) for i in range(values.shape[1])])
        return np.repeat(out, k, axis=1) if out.shape[1] != k else out


PROFILES: Dict[str, Type[BaseProfile]] = {
    cls.name: cls for cls in (
        ZeroProfile, GaussianProfile, SineModeProfile, ExponentialTaperProfile, BesselProfile, SamplesProfile,
    )
}


def profile_from_section(section: ConfigSection, prefix: str, **extra) -> BaseProfile:
    """
    Reads `<prefix>_kind` plus the parameters that kind understands, e.g.
    `field_kind = gaussian`, `field_center = 0`, `field_width = 1`.
    """
    kind = section.get(f"{prefix}_kind", StringValue("zero"))
    if kind not in PROFILES:
        raise ValueError(f"{section.name}.{prefix}_kind: unknown profile '{kind}' (choose from {', '.join(PROFILES)})")
    params: Dict[str, Any] = dict(extra)
    for key, value_type in (
        ("center", FloatValue(0.0)), ("width", FloatValue(1.0)), ("rate", FloatValue(1.0)),
        ("taper", FloatValue(2.0)), ("x0", FloatValue(0.0)), ("y0", FloatValue(0.0)),
    ):
        if f"{prefix}_{key}" in section:
            params[key] = section.get(f"{prefix}_{key}", value_type)
    if f"{prefix}_mode" in section:
        params["mode"] = section.get(f"{prefix}_mode", IntValue(1))
    if f"{prefix}_beta" in section:
        params["beta"] = section.get(f"{prefix}_beta", NullableFloatValue())
    if f"{prefix}_points" in section:
        params["points"] = section.get(f"{prefix}_points", ArrayValue())
        params["values"] = section.get(f"{prefix}_values", ArrayValue())
    amplitude = section.get(f"{prefix}_amplitude", ArrayValue(1.0))
    return PROFILES[kind](amplitude=amplitude, **params)


class BaseForcing:
    """A time-dependent force with k components."""
    name: str

    def __init__(self, value: Any = 0.0, k: int = 1, **params):
        self.value = _amplitude(value, k)
        self.k = k
        self.params = params

    def __call__(self, t: float) -> np.ndarray:
        return self.value * self.envelope(t)

    def envelope(self, t: float) -> float:
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False


class NoForcing(BaseForcing):
    name = "none"

    def envelope(self, t):
        return 0.0

    @property
    def is_zero(self):
        return True


class ConstantForcing(BaseForcing):
    name = "constant"

    def envelope(self, t):
        return 1.0


class StepForcing(BaseForcing):
    name = "step"

    def envelope(self, t):
        return 1.0 if t >= self.params.get("t0", 0.0) else 0.0


class PulseForcing(BaseForcing):
    """Rectangular pulse on [t0, t0 + duration)."""
    name = "pulse"

    def envelope(self, t):
        t0, duration = self.params.get("t0", 0.0), self.params.get("duration", 1.0)
        return 1.0 if t0 <= t < t0 + duration else 0.0


class SineForcing(BaseForcing):
    name = "sine"

    def envelope(self, t):
        return float(np.sin(self.params.get("omega", 1.0) * t + self.params.get("phase", 0.0)))


class CallableForcing(BaseForcing):
    """Wraps a plain function of t; used by library callers and tests, not by scenario files."""
    name = "callable"

    def __init__(self, func: Callable[[float], Any], k: int = 1):
        super().__init__(1.0, k)
        self.func = func

    def __call__(self, t):
        return _amplitude(self.func(t), self.k)

    def envelope(self, t):
        return 1.0


FORCINGS: Dict[str, Type[BaseForcing]] = {
    cls.name: cls for cls in (NoForcing, ConstantForcing, StepForcing, PulseForcing, SineForcing)
}


def forcing_from_section(section: ConfigSection, prefix: str, k: int) -> BaseForcing:
    """Reads `<prefix>_kind`, `<prefix>_value`, `<prefix>_t0`, `<prefix>_duration`, `<prefix>_omega`."""
    kind = section.get(f"{prefix}_kind", StringValue("none"))
    if kind not in FORCINGS:
        raise ValueError(f"{section.name}.{prefix}_kind: unknown forcing '{kind}' (choose from {', '.join(FORCINGS)})")
    params = {}
    for key in ("t0", "duration", "omega", "phase"):
        if f"{prefix}_{key}" in section:
            params[key] = section.get(f"{prefix}_{key}", FloatValue(0.0))
    value = section.get(f"{prefix}_value", ArrayValue(0.0 if kind == "none" else 1.0))
    return FORCINGS[kind](value=value, k=k, **params)


def no_forcing(k: int = 1) -> BaseForcing:
    return NoForcing(0.0, k)


def as_forcing(force: Optional[Any], k: int = 1) -> BaseForcing:
    if force is None:
        return no_forcing(k)
    if isinstance(force, BaseForcing):
        return force
    if callable(force):
        return CallableForcing(force, k)
    return ConstantForcing(force, k)
