"""Plant, cost and scheme parameters, plus closed-form reference quantities."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction
from typing import Union

import numpy as np

from . import noise as _noise
from .noise import NoiseSpec

__all__ = [
    "PointInit",
    "InitSpec",
    "SystemModel",
    "JordanMode",
    "SchemeParams",
    "Check",
    "ValidationReport",
    "infinity_norm",
    "jordan_block",
    "jordan_mode_norm",
    "similarity_scale",
    "validate_scheme",
    "capacity_bits",
    "classical_optimum",
    "scalar_gap_lower_bound",
]


def infinity_norm(M) -> float:
    """Max absolute row sum of a matrix (the norm induced by the vector inf-norm)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.abs(M).sum(axis=1).max())


def _mat(a, n=None) -> np.ndarray:
    arr = np.atleast_2d(np.array(a, dtype=float))
    if n is not None and arr.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PointInit:
    x: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))


InitSpec = Union[PointInit, NoiseSpec]


@dataclass(frozen=True, eq=False)
class SystemModel:
    """``x_{t+1} = A x_t + B u_t + w_t`` with stage cost ``x^T Q x``."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    noise: NoiseSpec
    init: InitSpec = None

    def __post_init__(self):
        A = _mat(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = _mat(self.B, n)
        Q = _mat(self.Q, n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)

        scale = max(1.0, float(np.abs(B).max())) ** n
        if abs(np.linalg.det(B)) <= 1e-12 * scale:
            raise ValueError("B must be invertible")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        ev = np.linalg.eigvalsh(Q)
        if ev.max() <= 0 or ev.min() <= 1e-10 * ev.max():
            raise ValueError("Q must be positive definite")
        if self.noise.n != n:
            raise ValueError(f"noise dimension {self.noise.n} does not match n={n}")

        init = self.init
        if init is None:
            init = PointInit((0.0,) * n)
        if isinstance(init, PointInit) and len(init.x) != n:
            raise ValueError("initial state has wrong dimension")
        if not isinstance(init, PointInit) and init.n != n:
            raise ValueError("initial-state law has wrong dimension")
        object.__setattr__(self, "init", init)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def Sigma(self) -> np.ndarray:
        return _noise.second_moment_matrix(self.noise)

    @cached_property
    def a_norm(self) -> float:
        return infinity_norm(self.A)

    @cached_property
    def gain(self) -> np.ndarray:
        """``B^-1 A``, so the certainty-equivalent control is ``-gain @ xhat``."""
        G = np.linalg.solve(self.B, self.A)
        G.setflags(write=False)
        return G

    def optimum(self) -> float:
        return classical_optimum(self.Q, self.Sigma)

    def __eq__(self, other):
        if not isinstance(other, SystemModel):
            return NotImplemented
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.Q, other.Q)
            and self.noise == other.noise
            and self.init == other.init
        )

    __hash__ = None


# -- Jordan modes -----------------------------------------------------------

@dataclass(frozen=True)
class JordanMode:
    lam: complex
    size: int
    variant: str = "real"  # "real" | "complex"

    def __post_init__(self):
        if self.variant not in ("real", "complex"):
            raise ValueError("variant must be 'real' or 'complex'")
        if self.size < 1:
            raise ValueError("size must be positive")
        if self.variant == "complex" and (self.size < 2 or self.size % 2):
            raise ValueError("a complex block needs even size >= 2")
        if self.variant == "real" and complex(self.lam).imag != 0:
            raise ValueError("a real block needs a real eigenvalue")


def jordan_block(mode: JordanMode) -> np.ndarray:
    """The real Jordan block matrix of ``mode``."""
    lam = complex(mode.lam)
    if mode.variant == "real":
        J = lam.real * np.eye(mode.size)
        J += np.eye(mode.size, k=1)
        return J
    a, b = lam.real, lam.imag
    D = np.array([[a, b], [-b, a]])
    k = mode.size // 2
    J = np.kron(np.eye(k), D) + np.kron(np.eye(k, k=1), np.eye(2))
    return J


def jordan_mode_norm(mode: JordanMode) -> float:
    lam = complex(mode.lam)
    if mode.variant == "real":
        return abs(lam.real) + (1.0 if mode.size > 1 else 0.0)
    return abs(lam.real) + abs(lam.imag) + (1.0 if mode.size > 2 else 0.0)


def similarity_scale(mode: JordanMode, eps_s: float) -> np.ndarray:
    """Return ``S^-1 J S`` with ``S = diag(1, eps, eps^2, ...)``.

    The result has ``eps_s`` on the superdiagonal, so its inf-norm is
    ``|lam| + eps_s`` for blocks larger than 1x1.
    """
    if mode.variant != "real":
        raise NotImplementedError("similarity scaling is only provided for real Jordan blocks")
    if not eps_s > 0:
        raise ValueError("eps_s must be positive")
    J = jordan_block(mode)
    s = eps_s ** np.arange(mode.size, dtype=float)
    return (J * s[np.newaxis, :]) / s[:, np.newaxis]


# -- scheme parameters ------------------------------------------------------

def _as_fraction(g) -> Fraction:
    if isinstance(g, Fraction):
        return g
    if isinstance(g, int):
        return Fraction(g)
    if isinstance(g, str):
        return Fraction(g.strip())
    raise TypeError("g must be an exact rational (Fraction, int or 'num/den' string)")


@dataclass(frozen=True)
class SchemeParams:
    """Zoom/quantizer parameters with the bin size kept as an integer exponent.

    ``alpha = g**-p`` and ``rho = g**q_exp`` so ``alpha**q_exp * rho**p == 1``
    exactly; every reachable adaptive bin size is ``L * g**m`` for an integer m.
    """

    K: int
    N: int
    g: Fraction
    p: int
    q_exp: int
    L: float
    beta: float
    eps: float
    delta0_exp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "g", _as_fraction(self.g))
        for name in ("K", "N"):
            v = getattr(self, name)
            if int(v) != v or v < 2 or v % 2:
                raise ValueError(f"{name} must be even and >= 2 (got {v})")
        if self.g <= 1:
            raise ValueError("g must be > 1")
        if self.p < 1 or self.q_exp < 1:
            raise ValueError("p and q_exp must be positive integers")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def alpha(self) -> float:
        return float(self.g ** -self.p)

    @property
    def rho(self) -> float:
        return float(self.g ** self.q_exp)

    @property
    def g_float(self) -> float:
        return float(self.g)

    @property
    def deltaN(self) -> float:
        return fixed_bin_size(self.N, self.beta - self.eps)

    @property
    def delta0(self) -> float:
        return self.bin_size(self.delta0_exp)

    def bin_size(self, m: int) -> float:
        return self.L * math.pow(self.g_float, m)

    def with_N(self, N: int) -> "SchemeParams":
        return SchemeParams(
            K=self.K, N=N, g=self.g, p=self.p, q_exp=self.q_exp, L=self.L,
            beta=self.beta, eps=self.eps, delta0_exp=self.delta0_exp,
        )

    def as_dict(self) -> dict:
        return {
            "K": self.K, "N": self.N, "g": f"{self.g.numerator}/{self.g.denominator}",
            "p": self.p, "q_exp": self.q_exp, "L": self.L, "delta0_exp": self.delta0_exp,
            "beta": self.beta, "eps": self.eps,
        }

    def digest(self, model: SystemModel | None = None) -> bytes:
        """SHA-256 over a canonical rendering of the parameters (and model matrices)."""
        doc = self.as_dict()
        if model is not None:
            doc["A"] = model.A.tolist()
            doc["B"] = model.B.tolist()
            doc["Q"] = model.Q.tolist()
            doc["noise"] = repr(model.noise)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).digest()


def fixed_bin_size(N: int, m: float) -> float:
    """``2 * N**(-1 + 2/m)``."""
    return 2.0 * N ** (-1.0 + 2.0 / m)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def render(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        lines.append("all conditions pass" if self.ok else f"{len(self.failures)} condition(s) violated")
        return "\n".join(lines)


def validate_scheme(params: SchemeParams, model: SystemModel) -> ValidationReport:
    """Evaluate every scheme condition against ``||A||_inf``; never raises."""
    rep = ValidationReport()
    add = rep.checks.append
    a = model.a_norm
    K, alpha, rho, L = params.K, params.alpha, params.rho, params.L
    beta, eps = params.beta, params.eps

    add(Check("beta_gt_2", beta > 2, f"beta = {beta!r} > 2"))
    add(Check("eps_range", 0 < eps < beta - 2, f"0 < eps = {eps!r} < beta - 2 = {beta - 2!r}"))

    try:
        mom = _noise.moment(model.noise, beta)
        add(Check("noise_moment", math.isfinite(mom), f"E||w||^beta = {mom!r} < inf"))
    except _noise.QuadratureError as exc:
        add(Check("noise_moment", False, f"moment quadrature failed: {exc}"))

    add(Check(
        "alpha_range", a / K < alpha < 1,
        f"||A||/K = {a / K!r} < alpha = {alpha!r} < 1",
    ))
    if beta > 2 and eps > 0:
        need = a ** (beta / eps)
        add(Check("rho_growth", rho > need, f"rho = {rho!r} > ||A||^(beta/eps) = {need!r}"))
    else:
        add(Check("rho_growth", False, "undefined: beta/eps out of range"))
    add(Check("rho_ge_K_alpha", rho >= K * alpha, f"rho = {rho!r} >= K*alpha = {K * alpha!r}"))

    exact = (params.g ** -params.p) ** params.q_exp * (params.g ** params.q_exp) ** params.p
    add(Check("countability", exact == 1, f"alpha^{params.q_exp} * rho^{params.p} = {exact}"))

    if K * alpha > a and beta > 2 and eps > 0 and eps < beta:
        dN = params.deltaN
        rhs = a / (K * alpha - a) * dN
        add(Check(
            "min_bin_size", alpha * L > rhs,
            f"alpha*L = {alpha * L!r} > ||A||/(K*alpha - ||A||) * Delta_(N={params.N}) = {rhs!r}",
        ))
    else:
        add(Check("min_bin_size", False, f"undefined: K*alpha = {K * alpha!r} <= ||A|| = {a!r}"))

    add(Check(
        "initial_bin", params.delta0_exp >= 0,
        f"Delta_0 = L*g^{params.delta0_exp} = {params.delta0!r} >= L = {L!r}",
    ))
    return rep


# -- closed forms -----------------------------------------------------------

def capacity_bits(K: int, N: int, n: int) -> float:
    """Bits per step needed to carry both symbols: ``log2(K^n + 1) + log2((N+1)^n)``."""
    return math.log2(K**n + 1) + n * math.log2(N + 1)


def classical_optimum(Q, Sigma) -> float:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Q.shape != Sigma.shape or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"shape mismatch: Q {Q.shape} vs Sigma {Sigma.shape}")
    return float(np.trace(Q @ Sigma))


def scalar_gap_lower_bound(a: float, sigma2: float, C: float) -> float:
    """Smallest optimality gap any scheme can reach over a C-bit channel (scalar plant).

    Returns ``math.inf`` when ``2**(2C) <= a**2``.
    """
    denom = 2.0 ** (2.0 * C) - a * a
    if denom <= 0:
        return math.inf
    return a * a * sigma2 / denom
