"""Sweeps, scaling-exponent fits and the invariant suites."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from hiercoop.channel import ChannelParams, interference_bound, interference_bound_limit, measured_interference
from hiercoop.cutset import (
    catalan, compute_cut, cutset_upper_bound, d_regular_grid, dense_simo_upper_bound,
    dk_closed_bounds, build_equalized_matrix, p_tot, trace_moment, trace_moment_l2,
    equalized_from_magnitudes,
)
from hiercoop.errors import InvalidArgument, NumericError
from hiercoop.hierarchy import (
    SchemeConfig, resolve_constants, run_bursty_extended, run_hierarchical, run_multihop_baseline,
)
from hiercoop.mimo import build_session, received_power_bounds, received_power_mc, session_channel
from hiercoop.netmodel import (
    DENSE, EXTENDED, build_cluster_grid, cell_band_violation_bound, cell_occupancy_stats,
    random_pairing, sample_network, squarelet_checks, unit_occupancy_violation_bound,
)
from hiercoop.streams import derive_seed

SCHEMA_VERSION = 1
SCHEMES = ("hierarchical", "bursty", "multihop", "tdma", "cutset", "dense_bound")
REGIME_OF = {
    "hierarchical": DENSE, "tdma": DENSE, "dense_bound": DENSE,
    "bursty": EXTENDED, "multihop": EXTENDED, "cutset": EXTENDED,
}
CSV_HEADER = "scheme,n,alpha,h,seed,rate,duty_cycle,failure,p_tot,bound,runtime_ms"
DEFAULT_N_LIST = (64, 128, 256, 512, 1024, 2048, 4096)


def _check_alpha(alphas):
    for a in alphas:
        if not a >= 2:
            raise InvalidArgument(f"path loss exponent must be >= 2, got {a}")


@dataclass(frozen=True)
class SweepConfig:
    n_list: tuple = DEFAULT_N_LIST
    alpha_list: tuple = (2.0,)
    schemes: tuple = ("hierarchical",)
    levels_h: int = 1
    trials: int = 3
    seed: int = 0
    output_path: str = "sweep_out"
    P: float = 100.0
    G: float = 1.0
    N0: float = 1.0
    epsilon: float = 0.05
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "alpha_list", tuple(float(a) for a in self.alpha_list))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if len(self.n_list) < 3:
            raise InvalidArgument("need at least 3 values of n for a regression")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise InvalidArgument("n_list must be strictly increasing")
        if self.n_list[0] < 2:
            raise InvalidArgument("n must be >= 2")
        if self.trials < 1:
            raise InvalidArgument("trials must be >= 1")
        if not self.alpha_list:
            raise InvalidArgument("alpha_list is empty")
        _check_alpha(self.alpha_list)
        bad = set(self.schemes) - set(SCHEMES)
        if bad or not self.schemes:
            raise InvalidArgument(f"unknown schemes {sorted(bad)}")
        if self.levels_h < 0:
            raise InvalidArgument("levels_h must be >= 0")
        if self.workers < 1:
            raise InvalidArgument("workers must be >= 1")

    def params(self, alpha: float) -> ChannelParams:
        return ChannelParams(self.G, alpha, self.P, self.N0)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidArgument(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float
    stderr: float
    log_correction_power: Optional[float] = None


def fit_scaling_exponent(points: Sequence, correct_logs: Optional[float] = None,
                         fit_log_power: bool = False) -> ExponentFit:
    """Least squares of log value on log n.

    ``correct_logs`` divides each value by (log n)^power first.
    ``fit_log_power`` also fits value ~ n^s (log n)^q and reports q; the
    slope stays the one of the single-regressor fit.
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise InvalidArgument("need at least 3 points")
    n = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise InvalidArgument("values must be positive and finite")
    if np.any(n <= 1):
        raise InvalidArgument("n must be > 1")
    x = np.log(n)
    y = np.log(v)
    if correct_logs:
        y = y - correct_logs * np.log(x)
    res = stats.linregress(x, y)
    r2 = float(min(1.0, max(0.0, res.rvalue ** 2))) if np.ptp(y) > 0 else 1.0
    q = None
    if fit_log_power and len(pts) >= 4:
        A = np.column_stack([x, np.log(x), np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        q = float(coef[1]) + (correct_logs or 0.0)
    return ExponentFit(float(res.slope), float(res.intercept), r2, float(res.stderr), q)


# ---------------------------------------------------------------- sweep cells


def instance_seed(master: int, n: int, trial: int) -> int:
    """Shared by all schemes so sandwich checks compare the same placement."""
    return derive_seed(master, "instance", n, trial)


def cell_seed(master: int, scheme: str, n: int, alpha: float, trial: int) -> int:
    return derive_seed(master, scheme, n, repr(float(alpha)), trial)


def make_instance(n: int, regime: str, seed: int):
    return random_pairing(sample_network(n, regime, seed), seed)


@dataclass
class CellResult:
    scheme: str
    n: int
    alpha: float
    h: int
    seed: int
    rate: Optional[float] = None
    duty_cycle: Optional[float] = None
    failure: str = "0"
    p_tot: Optional[float] = None
    bound: Optional[float] = None
    runtime_ms: Optional[float] = None
    error: Optional[str] = None

    def sort_key(self):
        return (self.scheme, self.n, self.alpha, self.seed_index)

    seed_index: int = 0


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


@lru_cache(maxsize=64)
def _design_constants(params: ChannelParams, h: int, design_n: int):
    # one scheme for the whole sweep, sized for its largest network
    return resolve_constants(params, SchemeConfig(levels_h=h, mi_check=False), design_n)


def run_cell(cfg: SweepConfig, scheme: str, n: int, alpha: float, trial: int) -> CellResult:
    params = cfg.params(alpha)
    seed = cell_seed(cfg.seed, scheme, n, alpha, trial)
    inst = make_instance(n, REGIME_OF[scheme], instance_seed(cfg.seed, n, trial))
    h = cfg.levels_h if scheme in ("hierarchical", "bursty") else 0
    out = CellResult(scheme, n, alpha, h, seed, seed_index=trial)
    t0 = time.perf_counter()
    try:
        if scheme in ("hierarchical", "tdma"):
            scfg = SchemeConfig(levels_h=h, mi_check=False)
            r = run_hierarchical(inst, params, scfg, seed, _design_constants(params, h, cfg.n_list[-1]))
            out.rate, out.duty_cycle, out.failure = r.aggregate_rate, r.duty_cycle, str(int(r.failure))
        elif scheme == "bursty":
            r = run_bursty_extended(inst, params, SchemeConfig(levels_h=h, mi_check=False), seed,
                                    _design_constants(params, h, cfg.n_list[-1]))
            out.rate, out.duty_cycle, out.failure = r.aggregate_rate, r.duty_cycle, str(int(r.failure))
        elif scheme == "multihop":
            r = run_multihop_baseline(inst, params, seed)
            out.rate, out.duty_cycle, out.failure = r.aggregate_rate, r.duty_cycle, str(int(r.failure))
        elif scheme == "cutset":
            cut = compute_cut(inst)
            out.p_tot = p_tot(cut, params)
            out.bound = cutset_upper_bound(cut, params, cfg.epsilon)
        elif scheme == "dense_bound":
            out.bound = dense_simo_upper_bound(inst, params)
    except NumericError:
        raise
    except (InvalidArgument, ValueError) as exc:
        out.failure = "error"
        out.error = f"{type(exc).__name__}: {exc}"
    if cfg.timing:
        out.runtime_ms = round((time.perf_counter() - t0) * 1000, 3)
    return out


def _run_cell_args(args):
    return run_cell(*args)


def sweep_cells(cfg: SweepConfig) -> list:
    jobs = [(cfg, s, n, a, t) for s in cfg.schemes for n in cfg.n_list
            for a in cfg.alpha_list for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell_args, jobs, chunksize=1))
    else:
        results = [run_cell(*j) for j in jobs]
    return sorted(results, key=lambda r: r.sort_key())


def rows_to_csv(results: list) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in results:
        w.writerow([r.scheme, r.n, _fmt(r.alpha), r.h, r.seed, _fmt(r.rate), _fmt(r.duty_cycle),
                    r.failure, _fmt(r.p_tot), _fmt(r.bound), _fmt(r.runtime_ms)])
    return buf.getvalue()


def _value(r: CellResult):
    return r.bound if r.scheme in ("cutset", "dense_bound") else r.rate


def summarize(cfg: SweepConfig, results: list) -> dict:
    fits = {}
    for scheme in cfg.schemes:
        for a in cfg.alpha_list:
            cells = [r for r in results if r.scheme == scheme and r.alpha == a]
            ok = [r for r in cells if r.error is None]
            key = f"{scheme}@{a!r}"
            entry = {
                "scheme": scheme, "alpha": a, "cells": len(cells),
                "errors": len(cells) - len(ok),
                "failure_fraction": (sum(r.failure != "0" for r in cells) / len(cells)) if cells else 0.0,
                "means": {},
            }
            pts = []
            for n in cfg.n_list:
                vals = [_value(r) for r in ok if r.n == n and _value(r) is not None]
                if vals:
                    m = float(np.mean(vals))
                    entry["means"][str(n)] = m
                    if m > 0:
                        pts.append((n, m))
            try:
                entry["fit"] = asdict(fit_scaling_exponent(pts, fit_log_power=True))
            except InvalidArgument as exc:
                entry["fit"] = None
                entry["fit_error"] = str(exc)
            if scheme == "cutset":
                pt = [(n, float(np.mean([r.p_tot for r in ok if r.n == n]))) for n in cfg.n_list
                      if any(r.n == n for r in ok)]
                try:
                    entry["p_tot_fit_log2"] = asdict(fit_scaling_exponent(pt, correct_logs=2, fit_log_power=True))
                except InvalidArgument as exc:
                    entry["p_tot_fit_log2"] = None
                    entry["fit_error"] = str(exc)
            fits[key] = entry
    errored = [r for r in results if r.error is not None]
    return {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(cfg),
        "rows": len(results),
        "errored_cells": len(errored),
        "errors": [f"{r.scheme} n={r.n} alpha={r.alpha!r} seed={r.seed}: {r.error}" for r in errored],
        "fits": fits,
    }


@dataclass(frozen=True)
class SweepOutput:
    csv_path: str
    summary_path: str
    summary: dict
    exit_code: int


def run_sweep(cfg: SweepConfig) -> SweepOutput:
    """Run every (scheme, n, alpha, trial) cell; write sweep.csv and summary.json."""
    results = sweep_cells(cfg)
    summary = summarize(cfg, results)
    os.makedirs(cfg.output_path, exist_ok=True)
    csv_path = os.path.join(cfg.output_path, "sweep.csv")
    summary_path = os.path.join(cfg.output_path, "summary.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(rows_to_csv(results))
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return SweepOutput(csv_path, summary_path, summary, 0 if summary["errored_cells"] == 0 else 1)


# ---------------------------------------------------------------- invariant suites


@dataclass(frozen=True)
class VerifyConfig:
    trials: int = 200
    seed: int = 0
    alpha_list: tuple = (2.0, 2.5, 3.0, 4.0)
    delta: float = 0.5
    suites: tuple = ("cell_occupancy", "interference", "received_power", "squarelets", "dk_sandwich",
                     "column_norms", "trace_moments", "catalan")

    def __post_init__(self):
        object.__setattr__(self, "alpha_list", tuple(float(a) for a in self.alpha_list))
        object.__setattr__(self, "suites", tuple(self.suites))
        _check_alpha(self.alpha_list)
        if self.trials < 1:
            raise InvalidArgument("trials must be >= 1")
        if not 0 < self.delta < 1:
            raise InvalidArgument("delta must lie in (0, 1)")
        bad = set(self.suites) - set(SUITES)
        if bad:
            raise InvalidArgument(f"unknown suites {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "VerifyConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise InvalidArgument(f"unknown config keys {sorted(extra)}")
        return cls(**d)


def _wilson_upper(k: int, n: int, z: float = 1.96) -> float:
    p = k / n
    den = 1 + z * z / n
    c = p + z * z / (2 * n)
    return (c + z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))) / den


def _suite_cell_occupancy(cfg: VerifyConfig) -> dict:
    out = {}
    ok = True
    for n, M in ((4096, 64), (4096, 256)):
        viol = 0
        for t in range(cfg.trials):
            st = cell_occupancy_stats(build_cluster_grid(sample_network(n, DENSE, derive_seed(cfg.seed, "occupancy", n, M, t)), M))
            viol += not ((1 - cfg.delta) * M < st.min_count and st.max_count < (1 + cfg.delta) * M)
        bound = cell_band_violation_bound(n, M, cfg.delta)
        freq = viol / cfg.trials
        out[f"n={n},M={M}"] = {"frequency": freq, "bound": bound, "ci_upper": _wilson_upper(viol, cfg.trials),
                               "margin": bound - freq}
        ok &= freq <= bound
    return {"passed": bool(ok), "details": out}


def _suite_interference(cfg: VerifyConfig) -> dict:
    out = {}
    ok = True
    for a in cfg.alpha_list:
        params = ChannelParams(alpha=a)
        inst = sample_network(900, DENSE, derive_seed(cfg.seed, "interference", a))
        grid = build_cluster_grid(inst, 25)
        c = int(grid.cells_of_color(0)[len(grid.cells_of_color(0)) // 2])
        probe = int(grid.cells[c][0])
        m = measured_interference(inst, grid, 0, probe, params, seed=cfg.seed, trials=max(50, cfg.trials))
        bound = interference_bound(params, params.P, grid.num_cells)
        out[repr(a)] = {"measured": m.mean_power, "exact": m.exact_power, "bound": bound,
                        "corr_ratio": abs(m.cross_correlation) / max(m.mean_power, 1e-300)}
        ok &= m.exact_power <= bound
    lim = interference_bound_limit(ChannelParams(alpha=3.0), 1.0)
    trunc = interference_bound(ChannelParams(alpha=3.0), 1.0, 10 ** 6)
    out["alpha3_limit"] = {"limit": lim, "truncation_1e6": trunc}
    ok &= abs(lim - trunc) / lim < 5e-5
    return {"passed": bool(ok), "details": out}


def _suite_received_power(cfg: VerifyConfig) -> dict:
    viol = 0
    count = 0
    worst = math.inf
    for a in cfg.alpha_list:
        params = ChannelParams(alpha=a)
        P1, P2 = received_power_bounds(params)
        inst = random_pairing(sample_network(1024, DENSE, derive_seed(cfg.seed, "received-power", a)), cfg.seed)
        grid = build_cluster_grid(inst, 64)
        sessions = max(1, cfg.trials // (4 * len(cfg.alpha_list)) + 1)
        for k in range(sessions):
            src = k % grid.num_cells
            dst = (src + 2 * grid.g + 2) % grid.num_cells
            if grid.are_neighbors(src, dst) or src == dst:
                continue
            s = build_session(inst, grid, src, dst, params)
            H = session_channel(inst, s, params, seed=k)
            mags = np.abs(H.entries) ** 2 * s.per_node_power
            recv = mags.sum(axis=1) + params.N0
            count += len(recv)
            lo = (recv - P1) / P1
            hi = (P2 - recv) / P2
            worst = min(worst, float(lo.min()), float(hi.min()))
            viol += int(np.sum((recv < P1 * (1 - 1e-12)) | (recv > P2 * (1 + 1e-12))))
    return {"passed": viol == 0, "details": {"destinations": count, "violations": viol, "min_margin": worst}}


def _suite_squarelets(cfg: VerifyConfig) -> dict:
    n = 1024
    occ = 0
    empty = 0
    cross_bad = 0
    for t in range(cfg.trials):
        inst = random_pairing(sample_network(n, EXTENDED, derive_seed(cfg.seed, "squarelets", t)), t)
        c = squarelet_checks(inst)
        occ += c.max_unit_occupancy >= math.log(n)
        empty += not c.all_2logn_occupied
        cross_bad += not (0.75 * n / 4 < c.crossing_count < 1.25 * n / 4)
    fa, fb, fc = occ / cfg.trials, empty / cfg.trials, cross_bad / cfg.trials
    bound_a = unit_occupancy_violation_bound(n)
    # part (b): (n / 2 log n) squarelets, each empty with prob (1 - 2 log n / n)^n
    bound_b = min(1.0, n / (2 * math.log(n)) * math.exp(-2 * math.log(n)))
    passed = fa <= bound_a and fb <= bound_b and fc <= 0.05
    return {"passed": bool(passed), "details": {
        "a_frequency": fa, "a_bound": bound_a, "a_ci_upper": _wilson_upper(occ, cfg.trials),
        "b_frequency": fb, "b_bound": bound_b, "b_ci_upper": _wilson_upper(empty, cfg.trials),
        "c_outside_frequency": fc, "c_allowed": 0.05, "c_ci_upper": _wilson_upper(cross_bad, cfg.trials)}}


def _suite_dk_sandwich(cfg: VerifyConfig) -> dict:
    N = 64
    out = {}
    ok = True
    for a in cfg.alpha_list:
        g = d_regular_grid(N, a)
        lo_margin = math.inf
        hi_margin = math.inf
        for kx in range(1, N + 1):
            lo, hi = dk_closed_bounds(kx, N * N, a)
            lo_margin = min(lo_margin, float(g[kx - 1].min() / lo))
            hi_margin = min(hi_margin, float(hi / g[kx - 1].max()))
        out[repr(a)] = {"min_ratio_to_lower": lo_margin, "min_ratio_upper_to_value": hi_margin}
        ok &= lo_margin >= 1 and hi_margin >= 1
    return {"passed": bool(ok), "details": out}


def _suite_column_norms(cfg: VerifyConfig) -> dict:
    worst_norm = 0.0
    worst_trace = 0.0
    runs = max(1, min(cfg.trials, 20))
    for t in range(runs):
        inst = sample_network(256, EXTENDED, derive_seed(cfg.seed, "cols", t))
        m = build_equalized_matrix(compute_cut(inst), cfg.alpha_list[t % len(cfg.alpha_list)], t)
        cn = np.linalg.norm(m.entries, axis=0)
        worst_norm = max(worst_norm, float(np.max(np.abs(cn - 1))))
        worst_trace = max(worst_trace, abs(float(np.sum(np.abs(m.entries) ** 2)) - m.shape[1]))
    return {"passed": worst_norm <= 1e-9 and worst_trace <= 1e-6,
            "details": {"max_norm_error": worst_norm, "max_trace_error": worst_trace, "runs": runs}}


def _suite_trace_moments(cfg: VerifyConfig) -> dict:
    mag = np.array([[1.0, 0.5], [0.5 ** 0.5, 0.2 ** 0.5]])
    m = equalized_from_magnitudes(mag)
    exact = trace_moment(m, 2, exact=True)
    hand = trace_moment_l2(m.magnitude)
    one = trace_moment(m, 1, trials=max(2, min(cfg.trials, 50)), seed=cfg.seed)
    err2 = abs(exact - hand)
    err1 = abs(one - m.shape[1])
    return {"passed": err2 <= 1e-12 and err1 <= 1e-9,
            "details": {"l2_exact": exact, "l2_hand": hand, "l1_estimate": one}}


def _suite_catalan(cfg: VerifyConfig) -> dict:
    ok = catalan(0) == 1
    for l in range(15):
        ok &= catalan(l + 1) == sum(catalan(j) * catalan(l - j) for j in range(l + 1))
    return {"passed": bool(ok), "details": {"checked_through": 15, "t15": catalan(15)}}


SUITES = {
    "cell_occupancy": _suite_cell_occupancy,
    "interference": _suite_interference,
    "received_power": _suite_received_power,
    "squarelets": _suite_squarelets,
    "dk_sandwich": _suite_dk_sandwich,
    "column_norms": _suite_column_norms,
    "trace_moments": _suite_trace_moments,
    "catalan": _suite_catalan,
}


def verify_lemmas(config: VerifyConfig = VerifyConfig()) -> dict:
    """Run the named invariant suites; ``passed`` is true iff all pass."""
    results = {name: SUITES[name](config) for name in config.suites}
    return {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(config),
        "passed": all(r["passed"] for r in results.values()),
        "suites": results,
    }
