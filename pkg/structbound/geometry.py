"""
Metric machinery for boundary curves

A boundary curve is a closed (or, for test charts, open) 1-manifold sampled
at uniformly spaced parameter values u_j. Everything is expressed through
its induced metric g(u) = |dx/du|^2: the single Christoffel symbol, the
covariant divergence and the closed-curve divergence theorem.

Periodic data is differentiated spectrally (FFT), open data with 4th-order
finite differences.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from structbound.errors import DegenerateCurve
from structbound.utils import timer

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
DEGENERACY_THRESHOLD = 1e-12


@dataclass(frozen=True, eq=False)
class CurveMetric:
    u: np.ndarray
    g: np.ndarray
    periodic: bool = True
    period: float = TWO_PI
    embedding: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.u)

    @property
    def sqrt_g(self) -> np.ndarray:
        return np.sqrt(self.g)

    @property
    def du(self) -> float:
        if self.periodic:
            return self.period / len(self.u)
        return float(self.u[1] - self.u[0])

    @property
    def length(self) -> float:
        if self.periodic:
            return float(np.sum(self.sqrt_g) * self.du)
        return float(trapezoid(self.sqrt_g, self.u))

    def derivative(self, values: np.ndarray) -> np.ndarray:
        return derivative(values, self.du, self.periodic)

    @classmethod
    def from_metric(
        cls, u: np.ndarray, g: np.ndarray, periodic: bool = False, period: float = TWO_PI
    ) -> "CurveMetric":
        """A chart given by its metric alone, without an embedding."""
        u, g = np.asarray(u, dtype=float), np.asarray(g, dtype=float)
        _check_metric(g)
        return cls(u=u, g=g, periodic=periodic, period=period)


def _check_metric(g: np.ndarray, threshold: float = DEGENERACY_THRESHOLD):
    if not np.all(np.isfinite(g)):
        raise DegenerateCurve(float("nan"))
    if g.min() <= threshold:
        logger.debug("Metric degenerates at u index %d", int(np.argmin(g)))
        raise DegenerateCurve(float(g.min()))


def spectral_derivative(values: np.ndarray, du: float) -> np.ndarray:
    """d/du of periodic samples along axis 0. The Nyquist mode is dropped for even lengths."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    wavenumbers = TWO_PI * np.fft.rfftfreq(n, d=du)
    if n % 2 == 0:
        wavenumbers[-1] = 0.0
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.irfft(1j * wavenumbers.reshape(shape) * np.fft.rfft(values, axis=0), n=n, axis=0)


def finite_difference_derivative(values: np.ndarray, du: float) -> np.ndarray:
    """4th-order central differences, with 4th-order one-sided stencils on the two outermost nodes at each end."""
    f = np.asarray(values, dtype=float)
    if f.shape[0] < 5:
        raise ValueError(f"need at least 5 samples for 4th-order differences (got {f.shape[0]})")
    out = np.empty_like(f)
    out[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * du)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * du)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * du)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * du)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * du)
    return out


def derivative(values: np.ndarray, du: float, periodic: bool = True) -> np.ndarray:
    if periodic:
        return spectral_derivative(values, du)
    return finite_difference_derivative(values, du)


@timer
def induced_metric(
    embedding: np.ndarray,
    u: Optional[np.ndarray] = None,
    periodic: bool = True,
    period: float = TWO_PI,
    threshold: float = DEGENERACY_THRESHOLD,
) -> CurveMetric:
    """
    :param embedding: (N, d) points x(u_j). For closed curves the samples
        cover one period without repeating the first point; a trailing
        repeat of x(u_0) is accepted and dropped.
    :param u: Uniform parameter samples; defaults to period * j / N.
    """
    x = np.asarray(embedding, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if periodic and len(x) > 1 and np.allclose(x[0], x[-1], rtol=0, atol=1e-14 * max(1.0, np.abs(x).max())):
        x = x[:-1]
        if u is not None:
            u = np.asarray(u, dtype=float)[:-1]
    n = len(x)
    if u is None:
        u = period * np.arange(n) / n if periodic else np.linspace(0.0, 1.0, n)
    u = np.asarray(u, dtype=float)
    if len(u) != n:
        raise ValueError(f"{len(u)} parameter samples for {n} embedding samples")
    du = period / n if periodic else float(u[1] - u[0])
    tangent = derivative(x, du, periodic)
    g = np.sum(tangent ** 2, axis=1)
    _check_metric(g, threshold)
    return CurveMetric(u=u, g=g, periodic=periodic, period=period, embedding=x)


def christoffel(metric: CurveMetric, index: Optional[int] = None):
    """Gamma^1_11 = g^-1 dg/du / 2; at one sample when `index` is given."""
    symbols = 0.5 * metric.derivative(metric.g) / metric.g
    return symbols if index is None else float(symbols[index])


def metric_compatibility_residual(metric: CurveMetric) -> np.ndarray:
    """Covariant derivative of g itself: dg/du - 2 Gamma g. Vanishes to differentiation order."""
    return metric.derivative(metric.g) - 2 * christoffel(metric) * metric.g


def covariant_divergence(vector: np.ndarray, metric: CurveMetric) -> np.ndarray:
    """(1/sqrt g) d(sqrt g v)/du for the contravariant component v = v^u."""
    v = np.asarray(vector, dtype=float)
    if v.shape != metric.g.shape:
        raise ValueError(f"vector has shape {v.shape}, metric {metric.g.shape}")
    sqrt_g = metric.sqrt_g
    return metric.derivative(sqrt_g * v) / sqrt_g


def flat_divergence(vector: np.ndarray, metric: CurveMetric) -> np.ndarray:
    """Plain dv/du, the divergence in a chart that is taken to be flat."""
    return metric.derivative(np.asarray(vector, dtype=float))


def divergence_theorem_check(vector: np.ndarray, metric: CurveMetric) -> float:
    """|closed integral of div v dS|, which vanishes on a closed curve."""
    if not metric.periodic:
        raise ValueError("divergence theorem check needs a closed curve")
    integrand = covariant_divergence(vector, metric) * metric.sqrt_g
    return float(abs(np.sum(integrand) * metric.du))


def circle(radius: float, n: int) -> np.ndarray:
    """(n, 2) samples of a circle at theta_j = 2 pi j / n."""
    theta = TWO_PI * np.arange(n) / n
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
