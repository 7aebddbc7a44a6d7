"""Backend selection for the closed-loop inner loop, plus the block driver.

The compiled ``_ckernel`` is used when it was built; otherwise (or when the
environment variable ``ZOOMCTL_PURE_PYTHON`` is set) the pure-Python
``_pykernel`` is used.  Both expose ``advance(x, ist, fst, noise, offset,
A, Q, M, ip, fp) -> offset`` and give bitwise identical results.

State arrays
------------
``ist`` (int64): steps, delta_exp, n_avg, consec, adaptive_overflows,
max_delta_exp, stop_code, pending, fixed_overflow_coords.
``fst`` (float64): S (running average cost), gap-identity sum, max |x|_inf,
cost sum.
``ip`` (int64): K, N, p, q_exp, settle_T, max_T, burn_in, check_stop.
``fp`` (float64): L, g, Delta_(N), stop_eps.

``stop_code`` is 0 while running, 1 when the settling rule fired, 2 when
the ``max_T`` cap was reached.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernel
from . import noise as _noise
from .model import PointInit, SchemeParams, SystemModel

__all__ = ["BACKEND", "available_backends", "get_backend", "LoopRunner", "BLOCK"]

try:
    if os.environ.get("ZOOMCTL_PURE_PYTHON"):
        raise ImportError("pure Python requested")
    from . import _ckernel
except ImportError:
    _ckernel = None

BACKEND = "cython" if _ckernel is not None else "python"

# noise rows generated per RNG call; part of the determinism contract
BLOCK = 1 << 16

STOP_RUNNING, STOP_RULE, STOP_CAP = 0, 1, 2


def available_backends() -> list:
    out = ["python"]
    if _ckernel is not None:
        out.append("cython")
    return out


def get_backend(name: str | None = None):
    name = name or BACKEND
    if name == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel is not built")
        return _ckernel.advance
    if name == "python":
        return _pykernel.advance
    raise ValueError(f"unknown backend {name!r}")


class LoopRunner:
    """Drives the kernel over freshly generated noise blocks.

    The noise stream for a given ``seed`` is fixed: the initial state (if
    random) is drawn first, then noise in blocks of :data:`BLOCK` rows.
    """

    def __init__(self, model: SystemModel, params: SchemeParams, seed, *, x0=None,
                 delta_exp: int | None = None, burn_in: int = 0, backend: str | None = None,
                 noise_block: int = BLOCK):
        self.model = model
        self.params = params
        self.rng = np.random.default_rng(seed)
        self._advance = get_backend(backend)
        self.block = noise_block
        n = model.n
        if x0 is None:
            if isinstance(model.init, PointInit):
                x0 = model.init.x
            else:
                x0 = _noise.sample(model.init, self.rng, 1)[0]
        self.x = np.array(np.atleast_1d(x0), dtype=float)
        if self.x.shape != (n,):
            raise ValueError("x0 has wrong dimension")
        m0 = params.delta0_exp if delta_exp is None else int(delta_exp)
        self.ist = np.array([0, m0, 0, 0, 0, m0, 0, 1, 0], dtype=np.int64)
        self.fst = np.zeros(4)
        self.A = np.ascontiguousarray(model.A, dtype=float)
        self.Q = np.ascontiguousarray(model.Q, dtype=float)
        self.M = np.ascontiguousarray(model.A.T @ model.Q @ model.A, dtype=float)
        self.burn_in = int(burn_in)
        self._noise = np.empty((0, n))
        self._pos = 0

    # -- views on the state -------------------------------------------------
    @property
    def steps(self) -> int:
        return int(self.ist[0])

    @property
    def delta_exp(self) -> int:
        return int(self.ist[1])

    @property
    def n_avg(self) -> int:
        return int(self.ist[2])

    @property
    def S(self) -> float:
        return float(self.fst[0])

    @property
    def gap_identity(self) -> float:
        return float(self.fst[1]) / self.steps if self.steps else 0.0

    @property
    def stop_code(self) -> int:
        return int(self.ist[6])

    def run(self, *, max_T: int, stop_eps: float = 0.0, settle_T: int = 0,
            check_stop: bool = False) -> int:
        """Advance until the settling rule fires or ``max_T`` averaged terms are in."""
        if self.ist[6] == STOP_CAP and self.n_avg < max_T:
            self.ist[6] = STOP_RUNNING
        p = self.params
        ip = np.array(
            [p.K, p.N, p.p, p.q_exp, settle_T, max_T, self.burn_in, int(check_stop)],
            dtype=np.int64,
        )
        fp = np.array([p.L, p.g_float, p.deltaN, stop_eps])
        while self.ist[6] == STOP_RUNNING:
            if self._pos >= self._noise.shape[0]:
                self._noise = _noise.sample(self.model.noise, self.rng, self.block)
                self._pos = 0
            self._pos = self._advance(
                self.x, self.ist, self.fst, self._noise, self._pos,
                self.A, self.Q, self.M, ip, fp,
            )
        return int(self.ist[6])
