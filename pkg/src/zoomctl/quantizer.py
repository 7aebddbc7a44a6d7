"""Modified uniform quantizers and their integer symbol codecs.

Every quantizer here is computed through the bin index, so the direct
quantizer and ``decode(encode(x))`` share one arithmetic path and agree
bit for bit.  Reconstruction of bin ``i`` (0-based, ``0 <= i < M``) is
``delta * (i - M/2) + delta/2``; 0 is never a reconstruction point.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "UniformGrid",
    "CorruptSymbolError",
    "bin_index",
    "midpoint",
    "scalar_quantize",
    "quantize_array",
    "type1_quantize",
    "type2_quantize",
    "encode_adaptive",
    "decode_adaptive",
    "encode_fixed",
    "decode_fixed",
    "pack_message",
    "unpack_message",
]


class CorruptSymbolError(ValueError):
    """A received symbol index lies outside the codec's alphabet."""


@dataclass(frozen=True)
class UniformGrid:
    M: int
    delta: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2 or self.M % 2:
            raise ValueError(f"M must be an even integer >= 2 (got {self.M})")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def half_width(self) -> float:
        return (self.M // 2) * self.delta


def bin_index(M: int, delta: float, x: float):
    """0-based bin of ``x`` on the grid, or ``None`` if ``|x| > (M/2) delta``."""
    if abs(x) > (M // 2) * delta:
        return None
    i = math.floor(x / delta) + M // 2
    if i < 0:
        return 0
    if i > M - 1:
        return M - 1
    return i


def midpoint(M: int, delta: float, i: int) -> float:
    return delta * (i - M // 2) + delta / 2.0


def scalar_quantize(grid: UniformGrid, x: float) -> float:
    i = bin_index(grid.M, grid.delta, x)
    return 0.0 if i is None else midpoint(grid.M, grid.delta, i)


def quantize_array(M: int, delta: float, x) -> np.ndarray:
    """Elementwise scalar quantizer over an array (type II semantics per entry)."""
    x = np.asarray(x, dtype=float)
    half = (M // 2) * delta
    i = np.clip(np.floor(x / delta) + M // 2, 0, M - 1)
    q = delta * (i - M // 2) + delta / 2.0
    return np.where(np.abs(x) <= half, q, 0.0)


def type1_quantize(grid: UniformGrid, x: Sequence[float]) -> np.ndarray:
    """Per-axis quantization when ``||x||_inf`` is in range, the zero vector otherwise."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    idx = [bin_index(grid.M, grid.delta, v) for v in x.tolist()]
    if any(i is None for i in idx):
        return np.zeros_like(x)
    return np.array([midpoint(grid.M, grid.delta, i) for i in idx])


def type2_quantize(grid: UniformGrid, x: Sequence[float]) -> np.ndarray:
    """Per-axis quantization; an axis out of range maps to 0 on that axis only."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = []
    for v in x.tolist():
        i = bin_index(grid.M, grid.delta, v)
        out.append(0.0 if i is None else midpoint(grid.M, grid.delta, i))
    return np.array(out)


# -- codecs -----------------------------------------------------------------

def encode_adaptive(grid: UniformGrid, x: Sequence[float]) -> int:
    """Symbol 0 on overflow, else ``1 + sum_j i_j K^j`` (first axis least significant)."""
    idx = [bin_index(grid.M, grid.delta, v) for v in np.atleast_1d(x).tolist()]
    if any(i is None for i in idx):
        return 0
    sym = 0
    for i in reversed(idx):
        sym = sym * grid.M + i
    return sym + 1


def decode_adaptive(sym: int, grid: UniformGrid, n: int) -> np.ndarray:
    if not 0 <= sym <= grid.M**n:
        raise CorruptSymbolError(f"adaptive symbol {sym} outside 0..{grid.M ** n}")
    if sym == 0:
        return np.zeros(n)
    r = sym - 1
    out = []
    for _ in range(n):
        r, i = divmod(r, grid.M)
        out.append(midpoint(grid.M, grid.delta, i))
    return np.array(out)


def encode_fixed(grid: UniformGrid, e: Sequence[float]) -> tuple:
    """Per-axis coordinates: 0 for overflow on that axis, else ``1 + bin``."""
    out = []
    for v in np.atleast_1d(e).tolist():
        i = bin_index(grid.M, grid.delta, v)
        out.append(0 if i is None else i + 1)
    return tuple(out)


def decode_fixed(coords: Sequence[int], grid: UniformGrid) -> np.ndarray:
    out = []
    for c in coords:
        if not 0 <= c <= grid.M:
            raise CorruptSymbolError(f"fixed coordinate {c} outside 0..{grid.M}")
        out.append(0.0 if c == 0 else midpoint(grid.M, grid.delta, c - 1))
    return np.array(out, dtype=float)


# wire format: adaptive index u32 LE, then n fixed coordinates u16 LE
def pack_message(adaptive: int, fixed: Sequence[int]) -> bytes:
    return struct.pack(f"<I{len(fixed)}H", adaptive, *fixed)


def unpack_message(buf: bytes, n: int) -> tuple:
    vals = struct.unpack(f"<I{n}H", buf)
    return vals[0], tuple(vals[1:])
