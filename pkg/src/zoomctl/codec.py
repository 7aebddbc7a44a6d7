"""The two-part coding scheme as a pair of state machines plus the plant.

The encoder sees the state, the decoder/controller sees only the
:class:`ChannelMessage`.  Both run their own copy of :func:`bin_update`
driven by the overflow flag, which the decoder recovers from
``adaptive != 0``, so their bin exponents stay equal without feedback.
"""

from __future__ import annotations

import collections
import struct
from dataclasses import dataclass, replace
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .model import SchemeParams, SystemModel
from .quantizer import (
    UniformGrid,
    decode_adaptive,
    decode_fixed,
    encode_adaptive,
    encode_fixed,
    pack_message,
    unpack_message,
)

__all__ = [
    "SyncError",
    "CoderState",
    "ChannelMessage",
    "StepRecord",
    "bin_update",
    "encode_step",
    "decode_step",
    "plant_step",
    "closed_loop_step",
    "Encoder",
    "Decoder",
    "ClosedLoop",
    "TrajectoryWriter",
    "write_trajectory",
    "read_trajectory",
    "iter_steps",
    "TRAJ_MAGIC",
]


class SyncError(RuntimeError):
    """Encoder and decoder bin exponents diverged."""


@dataclass(frozen=True)
class CoderState:
    delta_exp: int
    params: SchemeParams

    @property
    def delta(self) -> float:
        return self.params.bin_size(self.delta_exp)

    @classmethod
    def initial(cls, params: SchemeParams) -> "CoderState":
        return cls(params.delta0_exp, params)


@dataclass(frozen=True)
class ChannelMessage:
    adaptive: int
    fixed: tuple

    @property
    def in_view(self) -> bool:
        return self.adaptive != 0

    def index(self, K: int, N: int) -> int:
        """Joint index into the ``(K^n + 1) * (N + 1)^n`` alphabet."""
        n = len(self.fixed)
        j = 0
        for c in reversed(self.fixed):
            j = j * (N + 1) + c
        return self.adaptive * (N + 1) ** n + j

    def to_bytes(self) -> bytes:
        return pack_message(self.adaptive, self.fixed)

    @classmethod
    def from_bytes(cls, buf: bytes, n: int) -> "ChannelMessage":
        a, f = unpack_message(buf, n)
        return cls(a, f)


@dataclass(frozen=True)
class StepRecord:
    t: int
    x: tuple
    delta_exp: int
    delta: float
    e: tuple
    xhat: tuple
    u: tuple
    in_view: bool
    message: ChannelMessage


def bin_update(m: int, in_view: bool, params: SchemeParams) -> int:
    """Zoom out by rho on overflow; zoom in by alpha while ``Delta >= L``; else hold."""
    if not in_view:
        return m + params.q_exp
    if m >= 0:  # L * g^m >= L
        return m - params.p
    return m


def encode_step(state: CoderState, x) -> tuple:
    """Quantize ``x``; returns ``(message, next_state, e)`` with ``e = x - Q_K(x)``."""
    p = state.params
    xs = [float(v) for v in np.atleast_1d(x)]
    grid = UniformGrid(p.K, state.delta)
    adaptive = encode_adaptive(grid, xs)
    q = decode_adaptive(adaptive, grid, len(xs))
    e = tuple(xi - qi for xi, qi in zip(xs, q.tolist()))
    fixed = encode_fixed(UniformGrid(p.N, p.deltaN), e)
    msg = ChannelMessage(adaptive, fixed)
    nxt = replace(state, delta_exp=bin_update(state.delta_exp, adaptive != 0, p))
    return msg, nxt, e


def decode_step(state: CoderState, msg: ChannelMessage, model: SystemModel) -> tuple:
    """Reconstruct ``xhat`` and the control ``u = -B^-1 A xhat``; returns ``(xhat, u, next_state)``."""
    p = state.params
    n = model.n
    qa = decode_adaptive(msg.adaptive, UniformGrid(p.K, state.delta), n)
    qf = decode_fixed(msg.fixed, UniformGrid(p.N, p.deltaN))
    xhat = qa + qf
    u = -(model.gain @ xhat)
    nxt = replace(state, delta_exp=bin_update(state.delta_exp, msg.adaptive != 0, p))
    return xhat, u, nxt


def plant_step(x, u, w, model: SystemModel) -> np.ndarray:
    return model.A @ np.atleast_1d(x) + model.B @ np.atleast_1d(u) + np.atleast_1d(w)


def _dynamics_tol(model: SystemModel, x, w) -> float:
    # roundoff of A x + B u scales with the state magnitude
    return 1e-12 * (1.0 + model.a_norm * float(np.abs(x).max()) + float(np.abs(w).max()))


def closed_loop_step(x, enc: CoderState, dec: CoderState, model: SystemModel, w, t: int = 0):
    """One full step: encode, transmit, decode, control, plant.

    Returns ``(x_next, enc_next, dec_next, record)``.  Raises :class:`SyncError`
    if the two exponents differ, and ``AssertionError`` if the plant update
    disagrees with ``A (e - U_N(e)) + w``.
    """
    if enc.delta_exp != dec.delta_exp:
        raise SyncError(f"t={t}: encoder exponent {enc.delta_exp} != decoder {dec.delta_exp}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    msg, enc_next, e = encode_step(enc, x)
    xhat, u, dec_next = decode_step(dec, msg, model)
    x_next = plant_step(x, u, w, model)

    p = enc.params
    ue = decode_fixed(msg.fixed, UniformGrid(p.N, p.deltaN))
    direct = model.A @ (np.array(e) - ue) + w
    err = float(np.abs(x_next - direct).max())
    if err > _dynamics_tol(model, x, w):
        raise AssertionError(f"t={t}: plant update off the closed-form dynamics by {err:g}")
    if enc_next.delta_exp != dec_next.delta_exp:
        raise SyncError(f"t={t}: exponents diverged after update")

    rec = StepRecord(
        t=t, x=tuple(x.tolist()), delta_exp=enc.delta_exp, delta=enc.delta, e=e,
        xhat=tuple(xhat.tolist()), u=tuple(u.tolist()), in_view=msg.in_view, message=msg,
    )
    return x_next, enc_next, dec_next, rec


class Encoder:
    """Stateful encoder: holds its own exponent copy."""

    def __init__(self, params: SchemeParams, delta_exp: int | None = None):
        self.state = CoderState(params.delta0_exp if delta_exp is None else delta_exp, params)

    def __call__(self, x) -> ChannelMessage:
        msg, self.state, _ = encode_step(self.state, x)
        return msg


class Decoder:
    """Stateful decoder/controller: sees only channel messages."""

    def __init__(self, params: SchemeParams, model: SystemModel, delta_exp: int | None = None):
        self.model = model
        self.state = CoderState(params.delta0_exp if delta_exp is None else delta_exp, params)

    def __call__(self, msg: ChannelMessage) -> np.ndarray:
        _, u, self.state = decode_step(self.state, msg, self.model)
        return u


class ClosedLoop:
    """Reference (pure Python, protocol-checked) closed-loop simulator.

    Keeps the last ``ring_capacity`` :class:`StepRecord` objects; pass a
    :class:`TrajectoryWriter` to stream every record to disk.
    """

    def __init__(self, model: SystemModel, params: SchemeParams, x0=None, delta_exp=None,
                 ring_capacity: int = 4096, writer: "TrajectoryWriter | None" = None):
        self.model = model
        self.params = params
        m0 = params.delta0_exp if delta_exp is None else delta_exp
        self.enc = CoderState(m0, params)
        self.dec = CoderState(m0, params)
        if x0 is None:
            x0 = model.init.x
        self.x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        self.t = 0
        self.records = collections.deque(maxlen=ring_capacity)
        self.writer = writer

    def step(self, w) -> StepRecord:
        self.x, self.enc, self.dec, rec = closed_loop_step(
            self.x, self.enc, self.dec, self.model, w, t=self.t
        )
        self.records.append(rec)
        if self.writer is not None:
            self.writer.write(rec)
        self.t += 1
        return rec

    def run(self, noise: Iterable) -> None:
        for w in noise:
            self.step(w)

    def snapshot(self) -> tuple:
        return self.x.copy(), self.enc.delta_exp, self.t


# -- binary trajectory dump -------------------------------------------------
#
# header: magic b"ZQTR", u16 version, u16 n, 32-byte SHA-256 params digest
# record: u64 t, n x f64 state, i32 delta_exp, u32 adaptive, n x u16 fixed

TRAJ_MAGIC = b"ZQTR"
_TRAJ_VERSION = 1
_HEADER = struct.Struct("<4sHH32s")


def _record_dtype(n: int) -> np.dtype:
    return np.dtype([
        ("t", "<u8"), ("x", "<f8", (n,)), ("delta_exp", "<i4"),
        ("adaptive", "<u4"), ("fixed", "<u2", (n,)),
    ])


class TrajectoryWriter:
    def __init__(self, fh: BinaryIO, n: int, digest: bytes):
        self.fh = fh
        self.n = n
        self._rec = struct.Struct(f"<Q{n}diI{n}H")
        fh.write(_HEADER.pack(TRAJ_MAGIC, _TRAJ_VERSION, n, digest[:32].ljust(32, b"\0")))

    def write(self, rec: StepRecord) -> None:
        self.fh.write(self._rec.pack(
            rec.t, *rec.x, rec.delta_exp, rec.message.adaptive, *rec.message.fixed
        ))


def write_trajectory(fh: BinaryIO, records: Iterable[StepRecord], n: int, digest: bytes) -> int:
    w = TrajectoryWriter(fh, n, digest)
    count = 0
    for rec in records:
        w.write(rec)
        count += 1
    return count


def read_trajectory(fh: BinaryIO) -> tuple:
    """Returns ``(n, digest, records)`` where records is a numpy structured array."""
    head = fh.read(_HEADER.size)
    magic, version, n, digest = _HEADER.unpack(head)
    if magic != TRAJ_MAGIC:
        raise ValueError("not a trajectory dump")
    if version != _TRAJ_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    body = fh.read()
    dt = _record_dtype(n)
    if len(body) % dt.itemsize:
        raise ValueError("truncated trajectory record")
    return n, digest, np.frombuffer(body, dtype=dt)


def iter_steps(records: np.ndarray, params: SchemeParams) -> Iterator[tuple]:
    """Yield ``(t, x, delta_exp, ChannelMessage)`` for each dumped record."""
    for r in records:
        yield int(r["t"]), tuple(r["x"].tolist()), int(r["delta_exp"]), ChannelMessage(
            int(r["adaptive"]), tuple(int(c) for c in r["fixed"])
        )
