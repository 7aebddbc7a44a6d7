"""Experiment configuration: YAML in, typed objects out, and back.

Schema (unknown keys are rejected)::

    model:
      A: [[1.2]]
      B: [[1.0]]
      Q: [[1.0]]
      noise: {type: scaled_bg, scale: 4.0, delta: 2.0}
      init: {type: point, x: [0.0]}     # or any noise form
    scheme:
      K: 2
      g: "4/3"                          # exact rational, never a float
      p: 1
      q_exp: 3
      L: 9.0
      delta0_exp: 0
      beta: 3.95
      eps: 0.95
    run:
      N_list: {start: 10, stop: 1000, step: 2}   # or a list, or ``N: 100``
      seeds: 1
      base_seed: 0
      stop_eps: 1.0e-4
      settle_T: 10000
      max_T: 50000000
      burn_in: 0
    output:
      dir: out
      trajectory_dump: false
      ring_capacity: 4096

Noise forms: ``{type: scaled_bg, scale, delta, n}``, ``{type: gaussian,
Sigma}``, ``{type: point_mass, value, n}``.  ``model.n`` is optional and,
when given, must match the size of ``A``.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import yaml

from .model import PointInit, SchemeParams, SystemModel
from .noise import Gaussian, PointMass, ScaledBG

__all__ = [
    "ConfigError",
    "RunConfig",
    "OutputConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "load_preset",
    "dump_config",
    "PRESETS",
]

PRESETS = {"reproduce-paper": "reproduce_paper.yaml", "smoke": "smoke.yaml"}


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    N_list: tuple
    seeds: int = 1
    base_seed: int = 0
    stop_eps: float = 1e-4
    settle_T: int = 10_000
    max_T: int = 50_000_000
    burn_in: int = 0


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    trajectory_dump: bool = False
    ring_capacity: int = 4096


@dataclass(frozen=True)
class ExperimentConfig:
    model: SystemModel
    scheme: SchemeParams  # carries N = run.N_list[0]
    run: RunConfig
    output: OutputConfig = field(default_factory=OutputConfig)

    def with_seed(self, base_seed: int) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, base_seed=int(base_seed)))


# -- YAML node walking ------------------------------------------------------

class _Node:
    """Plain value plus source line, so errors can point at the file."""

    __slots__ = ("value", "line")

    def __init__(self, value, line):
        self.value = value
        self.line = line


def _convert(node):
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise ConfigError("duplicate key", k.start_mark.line + 1, key)
            out[key] = _convert(v)
        return _Node(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_convert(v) for v in node.value], line)
    return _Node(yaml.safe_load(yaml.serialize(node)), line)


def _plain(node):
    v = node.value
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_plain(x) for x in v]
    return v


class _Block:
    def __init__(self, node: _Node, path: str, allowed, required=()):
        if not isinstance(node.value, dict):
            raise ConfigError("expected a mapping", node.line, path)
        self.node = node
        self.path = path
        for k, v in node.value.items():
            if k not in allowed:
                raise ConfigError("unknown key", v.line, f"{path}.{k}")
        for k in required:
            if k not in node.value:
                raise ConfigError("missing required key", node.line, f"{path}.{k}")

    def has(self, key):
        return key in self.node.value

    def line(self, key):
        return self.node.value[key].line if key in self.node.value else self.node.line

    def key(self, key):
        return f"{self.path}.{key}"

    def raw(self, key):
        return _plain(self.node.value[key])

    def sub(self, key):
        return self.node.value[key]

    def get(self, key, conv, default=None):
        if key not in self.node.value:
            return default
        try:
            return conv(self.raw(key))
        except ConfigError:
            raise
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(str(exc), self.line(key), self.key(key)) from None


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            return int(v)
        raise TypeError(f"expected an integer, got {v!r}")
    return v


def _float(v):
    if isinstance(v, bool):
        raise TypeError(f"expected a number, got {v!r}")
    return float(v)  # also accepts "1e-4", which YAML 1.1 reads as a string


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError(f"expected true/false, got {v!r}")
    return v


def _fraction(v):
    if isinstance(v, float):
        raise TypeError("g must be written as an exact 'num/den' string, not a float")
    if isinstance(v, int):
        return Fraction(v)
    return Fraction(str(v).strip())


def _matrix(v):
    a = np.array(v, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise ValueError("expected a matrix (list of rows)")
    return a


def _noise(node: _Node, path: str):
    b = _Block(node, path, {"type", "scale", "delta", "n", "Sigma", "value"}, ("type",))
    kind = b.get("type", str)
    try:
        if kind == "scaled_bg":
            return ScaledBG(b.get("scale", _float), b.get("delta", _float), b.get("n", _int, 1))
        if kind == "gaussian":
            if not b.has("Sigma"):
                raise ConfigError("missing required key", node.line, f"{path}.Sigma")
            return Gaussian(b.get("Sigma", _matrix))
        if kind == "point_mass":
            return PointMass(b.get("n", _int, 1), b.get("value", _float, 0.0))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), node.line, path) from None
    raise ConfigError(f"unknown noise type {kind!r}", b.line("type"), f"{path}.type")


def _init(node: _Node, path: str):
    if isinstance(node.value, dict) and _plain(node).get("type") == "point":
        b = _Block(node, path, {"type", "x"}, ("type", "x"))
        return PointInit(tuple(b.get("x", lambda v: [float(t) for t in np.atleast_1d(v)])))
    return _noise(node, path)


def _n_list(b: _Block):
    if b.has("N") == b.has("N_list"):
        raise ConfigError("exactly one of N and N_list is required", b.node.line, b.path)
    if b.has("N"):
        return (b.get("N", _int),)
    sub = b.sub("N_list")
    if isinstance(sub.value, dict):
        r = _Block(sub, b.key("N_list"), {"start", "stop", "step"}, ("start", "stop"))
        start, stop, step = r.get("start", _int), r.get("stop", _int), r.get("step", _int, 2)
        if step <= 0:
            raise ConfigError("step must be positive", r.line("step"), r.key("step"))
        vals = tuple(range(start, stop + 1, step))
    else:
        vals = b.get("N_list", lambda v: tuple(_int(x) for x in v))
    if not vals:
        raise ConfigError("N_list is empty", sub.line, b.key("N_list"))
    for N in vals:
        if N < 2 or N % 2:
            raise ConfigError(f"N must be even and >= 2 (got {N})", sub.line, b.key("N_list"))
    return vals


def parse_config(text: str) -> ExperimentConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigError("empty configuration")
    top = _Block(_convert(root), "", {"model", "scheme", "run", "output"}, ("model", "scheme", "run"))
    top.path = "config"

    mb = _Block(top.sub("model"), "model", {"n", "A", "B", "Q", "noise", "init"}, ("A", "B", "Q", "noise"))
    A = mb.get("A", _matrix)
    n_decl = mb.get("n", _int)
    if n_decl is not None and A.shape != (n_decl, n_decl):
        raise ConfigError(f"A has shape {A.shape}, expected n={n_decl}", mb.line("A"), "model.A")
    noise = _noise(mb.sub("noise"), "model.noise")
    init = _init(mb.sub("init"), "model.init") if mb.has("init") else None
    try:
        model = SystemModel(A, mb.get("B", _matrix), mb.get("Q", _matrix), noise, init)
    except ValueError as exc:
        raise ConfigError(str(exc), mb.node.line, "model") from None

    rb = _Block(top.sub("run"), "run",
                {"N", "N_list", "seeds", "base_seed", "stop_eps", "settle_T", "max_T", "burn_in"})
    d = RunConfig(N_list=(2,))
    run = RunConfig(
        N_list=_n_list(rb),
        seeds=rb.get("seeds", _int, d.seeds),
        base_seed=rb.get("base_seed", _int, d.base_seed),
        stop_eps=rb.get("stop_eps", _float, d.stop_eps),
        settle_T=rb.get("settle_T", _int, d.settle_T),
        max_T=rb.get("max_T", _int, d.max_T),
        burn_in=rb.get("burn_in", _int, d.burn_in),
    )
    for k in ("seeds", "settle_T", "max_T"):
        if getattr(run, k) < 1:
            raise ConfigError("must be positive", rb.line(k), rb.key(k))
    if run.burn_in < 0:
        raise ConfigError("must be nonnegative", rb.line("burn_in"), "run.burn_in")
    if not run.stop_eps > 0:
        raise ConfigError("must be positive", rb.line("stop_eps"), "run.stop_eps")
    if run.max_T < run.settle_T:
        raise ConfigError("max_T must be >= settle_T", rb.line("max_T"), "run.max_T")

    sb = _Block(top.sub("scheme"), "scheme",
                {"K", "g", "p", "q_exp", "L", "delta0_exp", "beta", "eps"},
                ("K", "g", "p", "q_exp", "L", "beta", "eps"))
    vals = {k: sb.get(k, conv) for k, conv in
            (("K", _int), ("g", _fraction), ("p", _int), ("q_exp", _int), ("L", _float),
             ("beta", _float), ("eps", _float))}
    vals["delta0_exp"] = sb.get("delta0_exp", _int, 0)
    try:
        scheme = SchemeParams(N=run.N_list[0], **vals)
    except ValueError as exc:
        msg = str(exc)
        bad = next((k for k in ("K", "g", "p", "q_exp", "L") if msg.startswith(k)), None)
        raise ConfigError(msg, sb.line(bad) if bad else sb.node.line,
                          sb.key(bad) if bad else "scheme") from None

    output = OutputConfig()
    if top.has("output"):
        ob = _Block(top.sub("output"), "output", {"dir", "trajectory_dump", "ring_capacity"})
        output = OutputConfig(
            dir=ob.get("dir", str, output.dir),
            trajectory_dump=ob.get("trajectory_dump", _bool, output.trajectory_dump),
            ring_capacity=ob.get("ring_capacity", _int, output.ring_capacity),
        )
        if output.ring_capacity < 1:
            raise ConfigError("must be positive", ob.line("ring_capacity"), "output.ring_capacity")
    return ExperimentConfig(model, scheme, run, output)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    res = importlib.resources.files("zoomctl") / "presets" / PRESETS[name]
    return parse_config(res.read_text())


# -- serialization ----------------------------------------------------------

def _noise_doc(spec) -> dict:
    if isinstance(spec, ScaledBG):
        return {"type": "scaled_bg", "scale": spec.scale, "delta": spec.delta, "n": spec.n}
    if isinstance(spec, Gaussian):
        return {"type": "gaussian", "Sigma": spec.Sigma.tolist()}
    if isinstance(spec, PointMass):
        return {"type": "point_mass", "value": spec.value, "n": spec.n}
    raise TypeError(f"{type(spec).__name__} noise cannot be written to a config file")


def _n_list_doc(vals):
    if len(vals) == 1:
        return {"N": vals[0]}
    steps = {b - a for a, b in zip(vals, vals[1:])}
    if len(vals) >= 3 and len(steps) == 1 and min(steps) > 0:
        return {"N_list": {"start": vals[0], "stop": vals[-1], "step": steps.pop()}}
    return {"N_list": list(vals)}


def to_dict(cfg: ExperimentConfig) -> dict:
    m = cfg.model
    init = ({"type": "point", "x": list(m.init.x)} if isinstance(m.init, PointInit)
            else _noise_doc(m.init))
    s = cfg.scheme.as_dict()
    del s["N"]
    r = cfg.run
    run = _n_list_doc(r.N_list)
    run.update(seeds=r.seeds, base_seed=r.base_seed, stop_eps=r.stop_eps,
               settle_T=r.settle_T, max_T=r.max_T, burn_in=r.burn_in)
    return {
        "model": {"n": m.n, "A": m.A.tolist(), "B": m.B.tolist(), "Q": m.Q.tolist(),
                  "noise": _noise_doc(m.noise), "init": init},
        "scheme": s,
        "run": run,
        "output": {"dir": cfg.output.dir, "trajectory_dump": cfg.output.trajectory_dump,
                   "ring_capacity": cfg.output.ring_capacity},
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)
