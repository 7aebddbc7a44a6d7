"""Monte Carlo trials, N sweeps, convergence-order fits and empirical bound checks."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, stats

from . import noise as _noise
from .kernel import STOP_RULE, LoopRunner
from .model import (
    PointInit,
    SchemeParams,
    SystemModel,
    capacity_bits,
    fixed_bin_size,
    validate_scheme,
)
from .quantizer import quantize_array

__all__ = [
    "SchemeValidationError",
    "TrialConfig",
    "TrialResult",
    "SweepRow",
    "SweepResult",
    "RegressionFit",
    "ReturnTail",
    "DistortionCurve",
    "GapCheck",
    "ErgodicReport",
    "trial_seed",
    "run_trial",
    "sweep",
    "fit_convergence_order",
    "estimate_return_tail",
    "tail_bound_constants",
    "tail_bound_value",
    "quantizer_distortion",
    "gap_cross_check",
    "ergodic_consistency",
    "fully_observed_baseline",
    "fmt_float",
]


class SchemeValidationError(ValueError):
    def __init__(self, report):
        super().__init__("scheme conditions violated:\n" + report.render())
        self.report = report


def fmt_float(v) -> str:
    """Shortest round-trip decimal for CSV/JSON output."""
    return repr(float(v))


@dataclass(frozen=True)
class TrialConfig:
    model: SystemModel
    params: SchemeParams
    seed: int = 0
    stop_eps: float = 1e-4
    settle_T: int = 10_000
    max_T: int = 50_000_000
    burn_in: int = 0

    def __post_init__(self):
        if self.max_T < self.settle_T:
            raise ValueError("max_T must be >= settle_T")


@dataclass(frozen=True)
class TrialResult:
    N: int
    seed: object
    avg_cost: float
    T_stop: int
    stopped_by: str  # "rule" | "cap"
    gap: float
    gap_identity: float
    max_abs_x: float
    max_delta: float
    overflow_fraction: float
    fixed_overflow_fraction: float


def _check(model, params):
    rep = validate_scheme(params, model)
    if not rep.ok:
        raise SchemeValidationError(rep)


def run_trial(cfg: TrialConfig, backend: str | None = None) -> TrialResult:
    """Run the closed loop until the settling rule (or the ``max_T`` cap) stops it.

    The rule stops at the first T for which ``|S_{T+1} - S_T| < stop_eps``
    has held for ``settle_T`` consecutive steps.
    """
    _check(cfg.model, cfg.params)
    r = LoopRunner(cfg.model, cfg.params, cfg.seed, burn_in=cfg.burn_in, backend=backend)
    code = r.run(max_T=cfg.max_T, stop_eps=cfg.stop_eps, settle_T=cfg.settle_T, check_stop=True)
    steps = max(r.steps, 1)
    return TrialResult(
        N=cfg.params.N,
        seed=cfg.seed if isinstance(cfg.seed, int) else repr(cfg.seed),
        avg_cost=r.S,
        T_stop=r.n_avg,
        stopped_by="rule" if code == STOP_RULE else "cap",
        gap=r.S - cfg.model.optimum(),
        gap_identity=r.gap_identity,
        max_abs_x=float(r.fst[2]),
        max_delta=cfg.params.bin_size(int(r.ist[5])),
        overflow_fraction=int(r.ist[4]) / steps,
        fixed_overflow_fraction=int(r.ist[8]) / (steps * cfg.model.n),
    )


# -- sweeps -----------------------------------------------------------------

def trial_seed(base_seed: int, N: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(N), int(rep)])


@dataclass
class SweepRow:
    N: int
    C_bits: float
    mean_gap: float
    stderr_gap: float
    mean_T_stop: float
    stopped_by_cap_count: int
    n_trials: int
    failed_trials: int
    gaps: list = field(default_factory=list, repr=False)
    errors: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.n_trials > self.failed_trials


CSV_HEADER = [
    "N", "C_bits", "mean_gap", "stderr_gap", "mean_T_stop", "stopped_by_cap_count",
    "n_trials", "failed_trials",
]


@dataclass
class SweepResult:
    rows: list
    optimum: float
    n: int
    K: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow([
                    r.N, fmt_float(r.C_bits), fmt_float(r.mean_gap), fmt_float(r.stderr_gap),
                    fmt_float(r.mean_T_stop), r.stopped_by_cap_count, r.n_trials, r.failed_trials,
                ])

    @staticmethod
    def read_csv(path) -> list:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))

    @property
    def success_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.ok for r in self.rows) / len(self.rows)


def _run_one(args):
    cfg, backend = args
    try:
        return cfg.params.N, run_trial(cfg, backend), None
    except Exception as exc:  # recorded per row, the sweep goes on
        return cfg.params.N, None, f"{type(exc).__name__}: {exc}"


def sweep(model: SystemModel, params: SchemeParams, N_list, seeds: int = 1, *,
          base_seed: int = 0, stop_eps: float = 1e-4, settle_T: int = 10_000,
          max_T: int = 50_000_000, burn_in: int = 0, workers: int = 1,
          backend: str | None = None, progress=None) -> SweepResult:
    """Independent trials for every ``(N, rep)``; rows sorted by N.

    Trial seeds derive from ``(base_seed, N, rep)`` only, so results do not
    depend on scheduling or on which other N values are swept.
    """
    N_list = sorted(set(int(N) for N in N_list))
    for N in N_list:
        if N < 2 or N % 2:
            raise ValueError(f"every N must be even and >= 2 (got {N})")
    jobs = [
        (TrialConfig(model, params.with_N(N), trial_seed(base_seed, N, j), stop_eps,
                     settle_T, max_T, burn_in), backend)
        for N in N_list for j in range(seeds)
    ]
    results = {N: [] for N in N_list}
    errors = {N: [] for N in N_list}

    def collect(item):
        N, res, err = item
        if res is not None:
            results[N].append(res)
        else:
            errors[N].append(err)
        if progress is not None:
            progress(N, res, err)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for item in ex.map(_run_one, jobs, chunksize=1):
                collect(item)
    else:
        for job in jobs:
            collect(_run_one(job))

    rows = []
    for N in N_list:
        res = sorted(results[N], key=lambda r: r.seed)
        gaps = [r.gap for r in res]
        k = len(gaps)
        rows.append(SweepRow(
            N=N,
            C_bits=capacity_bits(params.K, N, model.n),
            mean_gap=float(np.mean(gaps)) if k else math.nan,
            stderr_gap=float(np.std(gaps, ddof=1) / math.sqrt(k)) if k > 1 else math.nan,
            mean_T_stop=float(np.mean([r.T_stop for r in res])) if k else math.nan,
            stopped_by_cap_count=sum(r.stopped_by == "cap" for r in res),
            n_trials=seeds,
            failed_trials=len(errors[N]),
            gaps=gaps,
            errors=errors[N],
        ))
    return SweepResult(rows=rows, optimum=model.optimum(), n=model.n, K=params.K)


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n_used: int
    n_excluded: int

    def to_json(self, path=None, **extra) -> str:
        doc = {k: v for k, v in asdict(self).items()}
        doc.update(extra)
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def fit_convergence_order(sweep_or_rows) -> RegressionFit:
    """Ordinary least squares of ``log2(gap)`` on ``C``; rows with gap <= 0 are excluded."""
    rows = sweep_or_rows.rows if isinstance(sweep_or_rows, SweepResult) else sweep_or_rows
    pts = [(r.C_bits, r.mean_gap) for r in rows if math.isfinite(r.mean_gap)]
    used = [(c, g) for c, g in pts if g > 0]
    if len(used) < 3:
        raise ValueError(f"need at least 3 rows with positive gap, have {len(used)}")
    C = np.array([c for c, _ in used])
    y = np.log2([g for _, g in used])
    lr = stats.linregress(C, y)
    return RegressionFit(
        slope=float(lr.slope), intercept=float(lr.intercept), r_squared=float(lr.rvalue**2),
        n_used=len(used), n_excluded=len(pts) - len(used),
    )


# -- return-time tails ------------------------------------------------------

@dataclass(frozen=True)
class ReturnTail:
    k: np.ndarray        # 0..k_max
    p_hat: np.ndarray    # P(tau >= k + 1)
    stderr: np.ndarray
    episodes: int


def estimate_return_tail(model: SystemModel, params: SchemeParams, x0, delta_exp: int,
                         k_max: int, trials: int, seed=0) -> ReturnTail:
    """Monte Carlo of the first return time to the in-view set from an in-view start."""
    rng = np.random.default_rng(seed)
    K, N, dN = params.K, params.N, params.deltaN
    x = np.tile(np.atleast_1d(np.asarray(x0, dtype=float)), (trials, 1))
    if np.abs(x[0]).max() > (K // 2) * params.bin_size(delta_exp):
        raise ValueError("start state is not in view")
    m = np.full(trials, int(delta_exp), dtype=np.int64)
    g = params.g_float
    alive = np.ones(trials, dtype=bool)
    p_hat = [1.0]
    for _ in range(k_max):
        d = params.L * np.power(g, m.astype(float))[:, None]
        in_view = np.abs(x).max(axis=1) <= (K // 2) * d[:, 0]
        q = np.where(in_view[:, None], quantize_array(K, d, x), 0.0)
        e = x - q
        s = e - quantize_array(N, dN, e)
        w = _noise.sample(model.noise, rng, trials)
        x = s @ model.A.T + w
        m = np.where(~in_view, m + params.q_exp, np.where(m >= 0, m - params.p, m))
        d = params.L * np.power(g, m.astype(float))
        alive &= np.abs(x).max(axis=1) > (K // 2) * d
        p_hat.append(alive.mean())
    p = np.array(p_hat)
    return ReturnTail(k=np.arange(k_max + 1), p_hat=p,
                      stderr=np.sqrt(p * (1 - p) / trials), episodes=trials)


def tail_bound_constants(params: SchemeParams, model: SystemModel) -> tuple:
    """``(h, xi) = (K alpha / rho, rho / ||A||_inf)``."""
    return params.K * params.alpha / params.rho, params.rho / model.a_norm


def tail_bound_value(params: SchemeParams, model: SystemModel, Delta: float, k: int) -> float:
    """Analytic bound on ``P(tau >= k+1)`` from an in-view start with bin size ``Delta``, clipped to [0, 1]."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if Delta < params.alpha * params.L * (1 - 1e-12):
        raise ValueError("Delta must be >= alpha * L")
    h, xi = tail_bound_constants(params, model)
    arg = Delta / 2.0 * ((h * xi**k - 1.0) / k - params.deltaN / (params.alpha * params.L))
    if arg <= 0:
        raise ValueError(
            f"tail argument {arg!r} <= 0 at k={k}: the minimum-bin-size condition is violated"
        )
    return min(1.0, k * _noise.tail(model.noise, arg))


# -- fixed-quantizer distortion ---------------------------------------------

@dataclass(frozen=True)
class DistortionCurve:
    N: np.ndarray
    delta: np.ndarray
    mc: np.ndarray
    quad: np.ndarray
    slope_quad: float
    slope_mc: float
    m: float


def _quad_distortion(source, N: int, dN: float) -> float:
    if isinstance(source, _noise.PointMass):
        v = float(source.value)
        return (v - float(quantize_array(N, dN, v))) ** 2
    pdf = _noise.scalar_pdf(source)
    h = (N // 2) * dN
    total = 0.0
    for i in range(N):
        lo = -h + i * dN
        c = lo + dN / 2.0
        total += integrate.quad(lambda x: (x - c) ** 2 * pdf(x), lo, lo + dN)[0]
    total += integrate.quad(lambda x: x * x * pdf(x), h, np.inf, limit=200)[0]
    total += integrate.quad(lambda x: x * x * pdf(x), -np.inf, -h, limit=200)[0]
    return total


def quantizer_distortion(source, N_list, m: float, samples: int = 1_000_000,
                         seed=0) -> DistortionCurve:
    """``E[(X - U_N(X))^2]`` with bin size ``2 N^(-1 + 2/m)``, by Monte Carlo and by quadrature."""
    if not m > 2:
        raise ValueError("m must exceed 2")
    if source.n != 1:
        raise ValueError("distortion curves are computed for scalar sources")
    N_arr = np.array(sorted(int(N) for N in N_list))
    rng = np.random.default_rng(seed)
    X = _noise.sample(source, rng, samples)[:, 0]
    deltas, mc, qd = [], [], []
    for N in N_arr:
        dN = fixed_bin_size(int(N), m)
        deltas.append(dN)
        mc.append(float(np.mean((X - quantize_array(int(N), dN, X)) ** 2)))
        qd.append(_quad_distortion(source, int(N), dN))
    qd = np.array(qd)
    mc = np.array(mc)
    logN = np.log2(N_arr)
    slope = lambda D: float(stats.linregress(logN, np.log2(D)).slope) if np.all(D > 0) and len(D) > 1 else math.nan
    return DistortionCurve(N=N_arr, delta=np.array(deltas), mc=mc, quad=qd,
                           slope_quad=slope(qd), slope_mc=slope(mc), m=m)


# -- cross checks -----------------------------------------------------------

@dataclass(frozen=True)
class GapCheck:
    gap_direct: float
    gap_identity: float
    agree: bool

    @property
    def rel_diff(self) -> float:
        return abs(self.gap_direct - self.gap_identity) / max(abs(self.gap_identity), 1e-300)


def gap_cross_check(model: SystemModel, params: SchemeParams, seed=0, T: int = 1_000_000,
                    backend: str | None = None) -> GapCheck:
    """Compare ``S_T - tr(Q Sigma)`` with the time average of ``s^T A^T Q A s``, ``s = e - U_N(e)``."""
    _check(model, params)
    r = LoopRunner(model, params, seed, backend=backend)
    r.run(max_T=T)
    direct = r.S - model.optimum()
    ident = r.gap_identity
    diff = abs(direct - ident)
    agree = diff < 1e-4 or diff < 0.1 * abs(ident)
    return GapCheck(direct, ident, bool(agree))


@dataclass(frozen=True)
class ErgodicReport:
    x0s: list
    S: list
    stderr: list
    pairs: list  # (i, j, |S_i - S_j|, tolerance, ok)

    @property
    def ok(self) -> bool:
        return all(p[-1] for p in self.pairs)


def ergodic_consistency(model: SystemModel, params: SchemeParams, x0_list, seed=0, *,
                        T: int = 2_000_000, burn_in: int = 1_000, batches: int = 40,
                        nsigma: float = 4.0, backend: str | None = None) -> ErgodicReport:
    """Long-run averages from several initial states, compared pairwise within ``nsigma`` bands.

    Run ``i`` uses seed ``(seed, i)``.  The first ``burn_in`` steps are left out
    of every average; standard errors come from ``batches`` batch means.
    """
    if len(x0_list) < 2:
        raise ValueError("need at least two initial states")
    _check(model, params)
    S, se = [], []
    for i, x0 in enumerate(x0_list):
        r = LoopRunner(model, params, np.random.SeedSequence([int(seed), i]), x0=x0,
                       burn_in=burn_in, backend=backend)
        sums = [0.0]
        for b in range(1, batches + 1):
            r.run(max_T=(T * b) // batches)
            sums.append(float(r.fst[3]))
        edges = [(T * b) // batches for b in range(batches + 1)]
        bm = np.diff(sums) / np.diff(edges)
        S.append(r.S)
        se.append(float(np.std(bm, ddof=1) / math.sqrt(batches)))
    pairs = []
    for i in range(len(S)):
        for j in range(i + 1, len(S)):
            tol = nsigma * math.hypot(se[i], se[j])
            d = abs(S[i] - S[j])
            pairs.append((i, j, d, tol, d <= tol))
    return ErgodicReport(x0s=[np.atleast_1d(x).tolist() for x in x0_list], S=S, stderr=se, pairs=pairs)


def fully_observed_baseline(model: SystemModel, seed=0, T: int = 1_000_000) -> float:
    """Average cost of the perfect-information controller ``u = -B^-1 A x`` over T stages."""
    rng = np.random.default_rng(seed)
    n = model.n
    if isinstance(model.init, PointInit):
        x = list(model.init.x)
    else:
        x = _noise.sample(model.init, rng, 1)[0].tolist()
    A = model.A.tolist()
    B = model.B.tolist()
    Q = model.Q.tolist()
    G = model.gain.tolist()
    total = 0.0
    t = 0
    while True:
        for wrow in _noise.sample(model.noise, rng, min(T, 1 << 16)).tolist():
            c = 0.0
            for i in range(n):
                c += x[i] * sum(Q[i][j] * x[j] for j in range(n))
            total += c
            t += 1
            if t >= T:
                return total / T
            u = [-sum(G[i][j] * x[j] for j in range(n)) for i in range(n)]
            x = [
                sum(A[i][j] * x[j] for j in range(n)) + sum(B[i][j] * u[j] for j in range(n)) + wrow[i]
                for i in range(n)
            ]


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
