"""I.i.d. noise laws for the plant, with exact samplers and moment/tail oracles.

Three families are provided:

``Gaussian``
    zero-mean normal vector with covariance ``Sigma``.
``ScaledBG``
    per-axis i.i.d. ``scale * Z`` where ``Z`` has the Bucklew-Gallagher density
    ``p(x) = (1 + delta/2) / (1 + |x|)**(3 + delta)``.  Only moments of order
    ``< 2 + delta`` are finite.
``ScalarCustom``
    per-axis i.i.d. draws from a user supplied pdf / inverse CDF pair.

``PointMass`` is a degenerate law used by tests to switch the noise off.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import integrate, special, stats

__all__ = [
    "Gaussian",
    "ScaledBG",
    "ScalarCustom",
    "PointMass",
    "NoiseSpec",
    "QuadratureError",
    "bg_pdf",
    "bg_inverse_cdf",
    "sample",
    "second_moment_matrix",
    "moment",
    "tail",
    "scalar_pdf",
]


class QuadratureError(RuntimeError):
    """Numeric integration did not converge to the requested accuracy."""


def _frozen_array(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Gaussian:
    Sigma: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(_frozen_array(self.Sigma))
        if S.shape[0] != S.shape[1]:
            raise ValueError(f"Sigma must be square, got shape {S.shape}")
        if not np.allclose(S, S.T):
            raise ValueError("Sigma must be symmetric")
        if np.linalg.eigvalsh(S).min() < -1e-12 * max(1.0, np.abs(S).max()):
            raise ValueError("Sigma must be positive semidefinite")
        S.setflags(write=False)
        object.__setattr__(self, "Sigma", S)

    @property
    def n(self) -> int:
        return self.Sigma.shape[0]

    def __eq__(self, other):
        return isinstance(other, Gaussian) and np.array_equal(self.Sigma, other.Sigma)

    def __hash__(self):
        return hash(self.Sigma.tobytes())


@dataclass(frozen=True)
class ScaledBG:
    scale: float
    delta: float
    n: int = 1

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class ScalarCustom:
    """Per-axis i.i.d. noise given by a symmetric-or-not zero-mean scalar law."""

    pdf: Callable[[float], float]
    inv_cdf: Callable[[np.ndarray], np.ndarray]
    n: int = 1
    name: str = field(default="custom", compare=False)


@dataclass(frozen=True)
class PointMass:
    """Noise identically equal to ``value`` on every axis (testing only)."""

    n: int = 1
    value: float = 0.0


NoiseSpec = Union[Gaussian, ScaledBG, ScalarCustom, PointMass]


# -- Bucklew-Gallagher ------------------------------------------------------

def bg_pdf(delta: float, x):
    return (1.0 + delta / 2.0) / (1.0 + np.abs(x)) ** (3.0 + delta)


def bg_inverse_cdf(delta: float, u):
    """Inverse CDF of the Bucklew-Gallagher law, ``u`` in the open interval (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("u must lie in (0, 1)")
    r = np.abs(u - 0.5)
    out = np.sign(u - 0.5) * ((1.0 - 2.0 * r) ** (-1.0 / (2.0 + delta)) - 1.0)
    return out[()] if out.ndim == 0 else out


def _bg_abs_moment(delta: float, m: float) -> float:
    # E|Z|^m = (2 + delta) * B(m + 1, 2 + delta - m)
    if m >= 2.0 + delta:
        return math.inf
    return (2.0 + delta) * math.exp(special.betaln(m + 1.0, 2.0 + delta - m))


# -- sampling ---------------------------------------------------------------

def sample(spec: NoiseSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` i.i.d. noise vectors; returns a C-contiguous ``(size, n)`` array."""
    if isinstance(spec, ScaledBG):
        u = rng.random((size, spec.n, 2))
        mag = (1.0 - u[..., 0]) ** (-1.0 / (2.0 + spec.delta)) - 1.0
        sgn = np.where(u[..., 1] < 0.5, -1.0, 1.0)
        return np.ascontiguousarray(spec.scale * sgn * mag)
    if isinstance(spec, Gaussian):
        w, V = np.linalg.eigh(spec.Sigma)
        root = V * np.sqrt(np.clip(w, 0.0, None))
        z = rng.standard_normal((size, spec.n))
        return np.ascontiguousarray(z @ root.T)
    if isinstance(spec, ScalarCustom):
        lo = np.nextafter(0.0, 1.0)
        hi = np.nextafter(1.0, 0.0)
        u = np.clip(rng.random((size, spec.n)), lo, hi)
        return np.ascontiguousarray(np.asarray(spec.inv_cdf(u), dtype=float))
    if isinstance(spec, PointMass):
        return np.full((size, spec.n), float(spec.value))
    raise TypeError(f"unknown noise spec {spec!r}")


# -- moments and tails ------------------------------------------------------

def scalar_pdf(spec: NoiseSpec) -> Callable[[float], float]:
    """Marginal density of one axis (scalar specs only for Gaussian)."""
    if isinstance(spec, ScaledBG):
        s, d = spec.scale, spec.delta
        return lambda x: bg_pdf(d, x / s) / s
    if isinstance(spec, Gaussian):
        if spec.n != 1:
            raise ValueError("scalar_pdf needs a scalar Gaussian")
        sd = math.sqrt(spec.Sigma[0, 0])
        return lambda x: stats.norm.pdf(x, scale=sd)
    if isinstance(spec, ScalarCustom):
        return spec.pdf
    raise TypeError(f"{type(spec).__name__} has no density")


def _quad(f, a, b, **kw) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, limit=200, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    if not math.isfinite(val):
        raise QuadratureError(f"quadrature returned {val}")
    return val


def second_moment_matrix(spec: NoiseSpec) -> np.ndarray:
    """``E[w w^T]`` (equal to the covariance since every law here is zero-mean)."""
    if isinstance(spec, Gaussian):
        return np.array(spec.Sigma)
    if isinstance(spec, ScaledBG):
        v = spec.scale**2 * _bg_abs_moment(spec.delta, 2.0)
        return v * np.eye(spec.n)
    if isinstance(spec, ScalarCustom):
        f = spec.pdf
        v = _quad(lambda x: x * x * f(x), -np.inf, np.inf)
        return v * np.eye(spec.n)
    if isinstance(spec, PointMass):
        return spec.value**2 * np.ones((spec.n, spec.n))
    raise TypeError(f"unknown noise spec {spec!r}")


def _scalar_tail(spec: NoiseSpec, u: float) -> float:
    if isinstance(spec, ScaledBG):
        return (1.0 + u / spec.scale) ** (-(2.0 + spec.delta))
    if isinstance(spec, ScalarCustom):
        f = spec.pdf
        return _quad(f, u, np.inf) + _quad(f, -np.inf, -u)
    raise TypeError(type(spec).__name__)


def tail(spec: NoiseSpec, u: float) -> float:
    """``P(||w||_inf > u)`` for ``u >= 0``."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    if isinstance(spec, PointMass):
        return 1.0 if abs(spec.value) > u else 0.0
    if isinstance(spec, Gaussian):
        sd = np.sqrt(np.diag(spec.Sigma))
        S = spec.Sigma
        if np.count_nonzero(S - np.diag(np.diag(S))) == 0:
            inside = 1.0
            for s in sd:
                if s > 0:
                    inside *= 1.0 - math.erfc(u / (s * math.sqrt(2.0)))
            return 1.0 - inside
        lo = -u * np.ones(spec.n)
        mvn = stats.multivariate_normal(mean=np.zeros(spec.n), cov=S, allow_singular=True)
        return float(1.0 - mvn.cdf(-lo, lower_limit=lo))
    t1 = _scalar_tail(spec, u)
    return 1.0 - (1.0 - t1) ** spec.n


def moment(spec: NoiseSpec, m: float) -> float:
    """``E[||w||_inf ** m]``; ``math.inf`` when the moment diverges."""
    if not m > 0:
        raise ValueError("moment order must be positive")
    if isinstance(spec, PointMass):
        return abs(spec.value) ** m
    if isinstance(spec, ScaledBG):
        if m >= 2.0 + spec.delta:
            return math.inf
        if spec.n == 1:
            return spec.scale**m * _bg_abs_moment(spec.delta, m)
    if isinstance(spec, Gaussian) and spec.n == 1:
        s = math.sqrt(spec.Sigma[0, 0])
        return s**m * 2.0 ** (m / 2.0) * math.gamma((m + 1.0) / 2.0) / math.sqrt(math.pi)
    if isinstance(spec, ScalarCustom) and spec.n == 1:
        f = spec.pdf
        return _quad(lambda x: abs(x) ** m * f(x), -np.inf, 0.0) + _quad(
            lambda x: x**m * f(x), 0.0, np.inf
        )
    # E[Y^m] = int_0^inf m u^(m-1) P(Y > u) du
    return _quad(lambda u: m * u ** (m - 1.0) * tail(spec, u), 0.0, np.inf)
