"""Command line entry point: ``zoomctl <command> [--config FILE | --preset NAME] ...``

Exit codes: 0 success, 1 scheme validation failure, 2 configuration parse
failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, sim
from .codec import ClosedLoop, TrajectoryWriter
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, load_preset
from .kernel import BACKEND, BLOCK
from .model import PointInit, validate_scheme
from . import noise as _noise
from .noise import Gaussian, ScaledBG, PointMass

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3

fmt = sim.fmt_float


class _Fail(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _load(args) -> ExperimentConfig:
    if bool(args.config) == bool(args.preset):
        raise _Fail(EXIT_PARSE, "give exactly one of --config or --preset")
    try:
        cfg = load_config(args.config) if args.config else load_preset(args.preset)
    except ConfigError as exc:
        raise _Fail(EXIT_PARSE, f"config error: {exc}") from None
    except OSError as exc:
        raise _Fail(EXIT_PARSE, f"cannot read config: {exc}") from None
    if args.seed_override is not None:
        cfg = cfg.with_seed(args.seed_override)
    return cfg


def _require_valid(cfg: ExperimentConfig, N: int | None = None):
    params = cfg.scheme if N is None else cfg.scheme.with_N(N)
    rep = validate_scheme(params, cfg.model)
    if not rep.ok:
        raise _Fail(EXIT_INVALID, rep.render())
    return params


def _out_dir(args, cfg) -> str:
    d = args.out_dir or cfg.output.dir
    os.makedirs(d, exist_ok=True)
    return d


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


# -- commands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg = _load(args)
    code = EXIT_OK
    for N in cfg.run.N_list:
        rep = validate_scheme(cfg.scheme.with_N(N), cfg.model)
        if not rep.ok or N == cfg.run.N_list[0]:
            print(f"N={N}")
            print(rep.render())
        if not rep.ok:
            code = EXIT_INVALID
    print("OK" if code == EXIT_OK else "INVALID")
    return code


def cmd_sweep(args) -> int:
    cfg = _load(args)
    for N in cfg.run.N_list:
        _require_valid(cfg, N)
    out = _out_dir(args, cfg)
    r = cfg.run
    t0 = time.perf_counter()

    def progress(N, res, err):
        if args.verbose:
            msg = f"gap={res.gap:.4g} T={res.T_stop}" if res else f"FAILED {err}"
            print(f"  N={N}: {msg}", file=sys.stderr)

    res = sim.sweep(cfg.model, cfg.scheme, r.N_list, r.seeds, base_seed=r.base_seed,
                    stop_eps=r.stop_eps, settle_T=r.settle_T, max_T=r.max_T,
                    burn_in=r.burn_in, workers=args.workers, progress=progress)
    csv_path = os.path.join(out, "sweep.csv")
    res.to_csv(csv_path)
    summary = {"optimum": res.optimum, "rows": len(res.rows),
               "success_fraction": res.success_fraction,
               "elapsed_s": time.perf_counter() - t0}
    try:
        fit = sim.fit_convergence_order(res)
        summary["fit"] = {"slope": fit.slope, "intercept": fit.intercept,
                          "r_squared": fit.r_squared, "n_used": fit.n_used,
                          "n_excluded": fit.n_excluded}
        print(f"slope={fmt(fit.slope)} intercept={fmt(fit.intercept)} r2={fit.r_squared:.4f}")
    except ValueError as exc:
        summary["fit"] = None
        summary["fit_error"] = str(exc)
        print(f"no fit: {exc}")
    with open(os.path.join(out, "fit.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"classical optimum={fmt(res.optimum)}")
    print(f"wrote {csv_path} ({len(res.rows)} rows)")
    if res.success_fraction < 0.8:
        print(f"only {res.success_fraction:.0%} of rows succeeded", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _load(args)
    N = args.N if args.N is not None else cfg.run.N_list[0]
    params = _require_valid(cfg, N)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.run.base_seed
    m = cfg.model
    rng = np.random.default_rng(seed)
    x0 = m.init.x if isinstance(m.init, PointInit) else _noise.sample(m.init, rng, 1)[0]
    bin_path = os.path.join(out, f"trace_N{N}.bin")
    csv_path = os.path.join(out, f"trace_N{N}.csv")
    with open(bin_path, "wb") as fh, open(csv_path, "w", newline="") as ch:
        writer = TrajectoryWriter(fh, m.n, params.digest(m))
        loop = ClosedLoop(m, params, x0=x0, ring_capacity=cfg.output.ring_capacity, writer=writer)
        w = csv.writer(ch, lineterminator="\n")
        w.writerow(["t"] + [f"x{i}" for i in range(m.n)] + ["delta"])
        left = args.T
        while left > 0:
            block = _noise.sample(m.noise, rng, BLOCK)[:left]
            for wv in block:
                rec = loop.step(wv)
                w.writerow([rec.t] + [fmt(v) for v in rec.x] + [fmt(rec.delta)])
            left -= len(block)
    print(f"wrote {args.T} records to {bin_path} and {csv_path}")
    return EXIT_OK


def _source(name: str, cfg):
    if name == "gaussian":
        return Gaussian([[1.0]])
    if name == "bg":
        return ScaledBG(1.0, 2.0)
    if name == "point":
        return PointMass()
    if name == "config":
        return cfg.model.noise
    raise _Fail(EXIT_PARSE, f"unknown source {name!r}")


def cmd_distortion(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    src = _source(args.source, cfg)
    N_list = args.N_list or [2**k for k in range(3, 10)]
    curve = sim.quantizer_distortion(src, N_list, args.m, samples=args.samples,
                                     seed=cfg.run.base_seed)
    path = os.path.join(out, f"distortion_{args.source}_m{args.m:g}.csv")
    _write_csv(path, ["N", "delta_N", "empirical", "analytic", "slope_empirical", "slope_analytic"],
               [(int(N), float(d), float(e), float(a), curve.slope_mc, curve.slope_quad)
                for N, d, e, a in zip(curve.N, curve.delta, curve.mc, curve.quad)])
    print(f"slope (quadrature)={fmt(curve.slope_quad)} slope (Monte Carlo)={fmt(curve.slope_mc)}"
          f" theory={fmt(-2 + 4 / args.m)}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_tailbound(args) -> int:
    cfg = _load(args)
    N = args.N if args.N is not None else cfg.run.N_list[0]
    params = _require_valid(cfg, N)
    out = _out_dir(args, cfg)
    x0 = [0.0] * cfg.model.n
    tail = sim.estimate_return_tail(cfg.model, params, x0, params.delta0_exp, args.k_max,
                                    args.episodes, seed=cfg.run.base_seed)
    rows, worst = [], True
    for k in range(1, args.k_max + 1):
        b = sim.tail_bound_value(params, cfg.model, params.delta0, k)
        p, se = float(tail.p_hat[k]), float(tail.stderr[k])
        ok = b >= 1.0 or p <= b + 4 * se
        worst &= ok
        rows.append((k, p, se, float(b), int(ok)))
    path = os.path.join(out, f"tailbound_N{N}.csv")
    _write_csv(path, ["k", "empirical", "stderr", "analytic", "dominated"], rows)
    print(f"empirical tail {'within' if worst else 'EXCEEDS'} analytic bound; wrote {path}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else cfg.run.base_seed
    v = sim.fully_observed_baseline(cfg.model, seed, args.T)
    opt = cfg.model.optimum()
    path = os.path.join(out, "baseline.csv")
    _write_csv(path, ["T", "empirical", "analytic", "rel_diff"],
               [(args.T, v, opt, abs(v - opt) / opt if opt else math.nan)])
    print(f"baseline={fmt(v)} optimum={fmt(opt)} rel_diff={abs(v - opt) / opt if opt else math.nan:.4%}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment YAML file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="shipped configuration")
    common.add_argument("--seed-override", type=int, help="replace run.base_seed")
    common.add_argument("--out-dir", help="output directory (default: output.dir)")
    common.add_argument("--workers", type=int, default=1, help="parallel trials for sweep")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="zoomctl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernel)")
    subs = ap.add_subparsers(dest="command", required=True)

    subs.add_parser("validate", parents=[common], help="check the scheme conditions").set_defaults(fn=cmd_validate)
    subs.add_parser("sweep", parents=[common], help="run trials over N_list, fit the slope").set_defaults(fn=cmd_sweep)

    p = subs.add_parser("trace", parents=[common], help="dump one sample path")
    p.add_argument("--N", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int, default=5000)
    p.set_defaults(fn=cmd_trace)

    p = subs.add_parser("distortion", parents=[common], help="fixed-quantizer distortion vs N")
    p.add_argument("--source", choices=["gaussian", "bg", "point", "config"], default="gaussian")
    p.add_argument("--m", type=float, default=8.0, help="moment order in the bin-size rule")
    p.add_argument("--N-list", type=int, nargs="+", dest="N_list")
    p.add_argument("--samples", type=int, default=200_000)
    p.set_defaults(fn=cmd_distortion)

    p = subs.add_parser("tailbound", parents=[common], help="return-time tail vs analytic bound")
    p.add_argument("--N", type=int)
    p.add_argument("--k-max", type=int, default=12, dest="k_max")
    p.add_argument("--episodes", type=int, default=100_000)
    p.set_defaults(fn=cmd_tailbound)

    p = subs.add_parser("baseline", parents=[common], help="perfect-observation controller cost")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int, default=1_000_000)
    p.set_defaults(fn=cmd_baseline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "T", 0) is not None and getattr(args, "T", 0) < 0:
        print("T must be >= 0", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.fn(args)
    except _Fail as f:
        print(str(f), file=sys.stderr)
        return f.code
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
