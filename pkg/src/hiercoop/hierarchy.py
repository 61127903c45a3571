"""Hierarchical cooperation as a slot and rate accounting engine.

One level of the scheme on a network of m nodes (unit square, power
parameter P) works as follows.

Phase 1
    Each cell of M nodes runs the lower-level scheme to spread every
    source's bits over its cell. Cells are scheduled with 9-TDMA.
Phase 2
    Sources, one at a time, send to the destination cell through a
    distributed MIMO link.
Phase 3
    Destination cells quantize their observations and forward them with
    the lower-level scheme.

Lower levels are run on each cell rescaled to the unit square. The
channel is scale invariant, so only external interference changes
between levels.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from hiercoop.channel import ChannelParams, cluster_interference, interference_bound
from hiercoop.errors import InvalidArgument, InvalidRegime, NearFieldViolation
from hiercoop.mimo import (
    build_session,
    log_m_scaled_quantized_mi,
    paley_zygmund_bound,
    pz_threshold,
    quantizer_rate,
    received_power_bounds,
    rho_range,
    rho_range_neighbor,
    sample_neighbor_geometry,
    sample_session_geometry,
    session_channel,
    QuantizerSpec,
)
from hiercoop.netmodel import (
    DENSE,
    EXTENDED,
    NetworkInstance,
    build_cluster_grid,
    cell_occupancy_stats,
    grid_dim,
    occupancy_failure,
)
from hiercoop.streams import make_rng

ALPHA_MODES = ("general", "alpha2")
KAPPA_SOURCES = ("measured", "pz")
LOWER_RATES = ("guarantee", "measured")
POWER_TOL = 1e-9


@dataclass(frozen=True)
class SchemeConfig:
    """Constants of the scheme.

    ``C``, ``Q`` and ``kappa`` default to derived values (see
    :func:`resolve_constants`); ``K1`` overrides the measured base TDMA
    rate when given.
    """

    levels_h: int = 1
    L: float = 16.0
    C: Optional[float] = None
    Q: Optional[float] = None
    K1: Optional[float] = None
    alpha_mode: str = "general"
    kappa: Optional[float] = None
    kappa_source: str = "measured"
    epsilon_q: float = 0.1
    delta_sq: Optional[float] = None
    failure_delta: float = 0.75
    mi_check: bool = True
    mi_trials: int = 8
    mi_check_max_antennas: int = 256
    kappa_antennas: int = 32
    kappa_trials: int = 64
    lower_rate: str = "guarantee"

    def __post_init__(self):
        if self.levels_h < 0:
            raise InvalidArgument("levels_h must be >= 0")
        if not self.L >= 0:
            raise InvalidArgument("L must be >= 0")
        if self.alpha_mode not in ALPHA_MODES:
            raise InvalidArgument(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.kappa_source not in KAPPA_SOURCES:
            raise InvalidArgument(f"kappa_source must be one of {KAPPA_SOURCES}")
        if self.kappa is not None and not self.kappa > 0:
            raise InvalidArgument("kappa must be positive")
        if self.C is not None and self.kappa is not None and self.L / self.C < self.kappa - 1e-12:
            raise InvalidArgument("need L / C >= kappa")
        if self.lower_rate not in LOWER_RATES:
            raise InvalidArgument(f"lower_rate must be one of {LOWER_RATES}")
        if self.K1 is not None and not self.K1 > 0:
            raise InvalidArgument("K1 must be positive")
        if not 0 < self.failure_delta < 1:
            raise InvalidArgument("failure_delta must lie in (0, 1)")


@dataclass(frozen=True)
class Constants:
    L: float
    C: float
    Q: float
    kappa: float
    delta_sq: float
    interference: float


# ---------------------------------------------------------------- formulas


def exponent_after_levels(h: int) -> float:
    """Throughput exponent h/(h+1) of the h-level scheme."""
    if h < 0:
        raise InvalidArgument("h must be >= 0")
    return h / (h + 1)


def exponent_iteration(h: int) -> float:
    """b_{j+1} = 1/(2 - b_j) from b_0 = 0, applied h times (exact rationals)."""
    b = Fraction(0)
    for _ in range(h):
        b = 1 / (2 - b)
    return float(b)


def optimal_cluster_size(n: int, b: float) -> float:
    """Grid-feasible cluster size n/g^2 closest (in log) to n^(1/(2-b))."""
    if not 0 <= b < 1:
        raise InvalidArgument("need 0 <= b < 1")
    if n < 1:
        raise InvalidArgument("n must be positive")
    target = n ** (1.0 / (2.0 - b))
    g0 = math.sqrt(n / target)
    best = None
    for g in {max(1, math.floor(g0)), max(1, math.ceil(g0))}:
        m = n / (g * g)
        err = abs(math.log(m / target))
        if best is None or err < best[0] - 1e-12 or (abs(err - best[0]) <= 1e-12 and m > best[1]):
            best = (err, m)
    return best[1]


def simple_throughput(n: float, M: float, b: float, Q: float) -> float:
    """nM / (M^(2-b) + n + Q M^(2-b)), the three-phase rate with unit constants."""
    if M > n:
        raise InvalidArgument("need M <= n")
    m2b = M ** (2 - b)
    return n * M / (m2b + n + Q * m2b)


def phase_durations(M: float, b: float, L: float, C: float, Q: float, K1: float,
                    alpha_mode: str = "general") -> tuple:
    """(T1, T2 per source, T3) in channel uses."""
    if alpha_mode not in ALPHA_MODES:
        raise InvalidArgument(f"alpha_mode must be one of {ALPHA_MODES}")
    m2b = M ** (2 - b)
    t1 = 18 * L / K1 * m2b
    t2 = 2 * C
    t3 = 18 * C * Q / K1 * m2b
    if alpha_mode == "alpha2":
        lm = math.log(M)
        t1, t2, t3 = t1 * lm, t2 * lm, t3 * lm * lm
    return t1, t2, t3


# ---------------------------------------------------------------- constants


@lru_cache(maxsize=256)
def _measured_kappa(G, alpha, P, N0, interference, delta_sq, antennas, trials) -> float:
    params = ChannelParams(G, alpha, P, N0)
    q = QuantizerSpec(delta_sq, 1.0)
    per_antenna = []
    for kind in ("far", "cardinal", "diagonal"):
        vals = []
        for t in range(trials):
            if kind == "far":
                H, r, _ = sample_session_geometry(antennas, params, seed=t)
                n_tx, m_cell = antennas, antennas
            else:
                H, r, _ = sample_neighbor_geometry(antennas, params, seed=t, diagonal=kind == "diagonal")
                n_tx, m_cell = H.shape[1], antennas
            sigma = P * r ** alpha / m_cell
            mi = log_m_scaled_quantized_mi(H, sigma, N0, interference, q, trials=1, seed=t)
            # far-half sessions use 2C symbols for M sub-blocks on M/2 antennas
            vals.append(mi / n_tx)
        per_antenna.append(float(np.mean(vals)))
    return min(per_antenna)


def _pz_kappa(params: ChannelParams, interference: float, delta_sq: float) -> float:
    snr = params.G * params.P / (params.N0 + interference + delta_sq)
    out = []
    for a, b in (rho_range(params.alpha), rho_range_neighbor(params.alpha)):
        out.append(paley_zygmund_bound(a, b, snr, 1, pz_threshold(a)))
    return min(out)


def level_interference(params: ChannelParams, n: int, config: SchemeConfig) -> float:
    """Total external interference seen by the bottom cooperating level."""
    total = 0.0
    m = float(n)
    for j in range(config.levels_h, 0, -1):
        if m < 2:
            break
        g = grid_dim(m, optimal_cluster_size(m, exponent_after_levels(j - 1)))
        if g == 1:
            continue
        if j > 1:
            total += cluster_interference(params, g * g)
        m = m / (g * g)
    return total


def resolve_constants(params: ChannelParams, config: SchemeConfig, n: int) -> Constants:
    """Fill in Q, kappa and C for a run on n nodes."""
    _, p2 = received_power_bounds(params)
    d2 = p2 if config.delta_sq is None else config.delta_sq
    Q = quantizer_rate(p2, d2, config.epsilon_q) if config.Q is None else config.Q
    if config.Q is not None and config.Q < quantizer_rate(p2, d2, 0.0) - 1e-12:
        raise InvalidArgument("Q below the quantizer rate for this Delta^2")
    interference = level_interference(params, n, config)
    if config.kappa is not None:
        kappa = config.kappa
    elif config.kappa_source == "pz":
        kappa = _pz_kappa(params, interference, d2)
    else:
        kappa = _measured_kappa(params.G, params.alpha, params.P, params.N0, round(interference, 12),
                                d2, config.kappa_antennas, config.kappa_trials)
    C = math.ceil(config.L / kappa) if config.C is None else config.C
    return Constants(config.L, float(C), float(Q), float(kappa), float(d2), float(interference))


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class ThroughputReport:
    scheme: str
    n: int
    regime: str
    levels_h: int
    M_per_level: list
    b_per_level: list
    g_per_level: list
    phase_durations: list
    aggregate_rate: float
    per_node_avg_power: float
    power_budget: float
    level_power_ratio: list
    phase2_power_ratio: float
    failure: bool
    failure_reason: str = ""
    duty_cycle: float = 1.0
    warnings: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    seed: Optional[int] = None
    node_avg_power: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self, include_nodes: bool = False) -> dict:
        d = asdict(self)
        d.pop("node_avg_power")
        if include_nodes and self.node_avg_power is not None:
            d["node_avg_power"] = self.node_avg_power.tolist()
        return d

    def to_json(self, include_nodes: bool = False) -> str:
        return json.dumps(self.to_dict(include_nodes), sort_keys=True)


@dataclass
class _LevelOut:
    rate: float
    node_power: np.ndarray


@dataclass
class _Trace:
    """Per-depth bookkeeping collected during the recursion."""

    info: dict = field(default_factory=dict)
    power_ratio: dict = field(default_factory=dict)
    phase2_ratio: float = 0.0
    failures: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def note_power(self, depth, ratio):
        self.power_ratio[depth] = max(self.power_ratio.get(depth, 0.0), ratio)


def _derangement(m: int, rng: np.random.Generator) -> np.ndarray:
    perm = rng.permutation(m)
    while True:
        fixed = np.flatnonzero(perm == np.arange(m))
        if not fixed.size:
            return perm
        for i in fixed:
            if perm[i] != i:
                continue
            j = int(rng.integers(m - 1))
            j += j >= i
            perm[i], perm[j] = perm[j], perm[i]


class _Engine:
    def __init__(self, params: ChannelParams, config: SchemeConfig, consts: Constants, seed,
                 k_chain: list = None):
        self.params = params
        self.config = config
        self.k = consts
        self.seed = seed
        # guaranteed rate constant K_j of the j-level scheme (rate K_j m^b_j)
        self.k_chain = k_chain

    def tdma(self, pos, pairing, i_ext, depth, trace, check) -> _LevelOut:
        p = self.params
        m = len(pos)
        if self.config.K1 is not None:
            rate = self.config.K1
        else:
            r = np.sqrt(((pos[pairing] - pos) ** 2).sum(axis=1))
            if r.min() <= 0:
                raise NearFieldViolation("source and destination coincide")
            # equal slots, so every pair runs at the worst pair's rate
            rate = float(np.log2(1 + p.G * p.P * r.max() ** (-p.alpha) / (p.N0 + i_ext)))
        power = np.full(m, p.P / m)
        trace.note_power(depth, 1.0)
        if check:
            trace.info.setdefault(depth, dict(M=1.0, g=1, b=0.0, durations=(0.0, 0.0, 0.0), K1=rate))
        return _LevelOut(rate, power)

    def level(self, pos, pairing, j, i_ext, depth, trace, check, rng) -> _LevelOut:
        if j == 0:
            return self.tdma(pos, pairing, i_ext, depth, trace, check)
        p, cfg, k = self.params, self.config, self.k
        m = len(pos)
        b = exponent_after_levels(j - 1)
        M_opt = optimal_cluster_size(m, b)
        g = grid_dim(m, M_opt)
        if g == 1:
            if check:
                trace.warnings.append(f"level {j} on {m} nodes: single cell, passed through")
            return self.level(pos, pairing, j - 1, i_ext, depth, trace, check, rng)

        inst = NetworkInstance(m, DENSE, pos, pairing)
        grid = build_cluster_grid(inst, M_opt)
        reason = occupancy_failure(cell_occupancy_stats(grid), grid.M, cfg.failure_delta)
        if reason:
            trace.failures.append(f"level {j} (m={m}): {reason}")
        k_i = cluster_interference(p, g * g)
        scale = float(g) ** (-p.alpha)
        log_m = math.log(grid.M) if cfg.alpha_mode == "alpha2" else 1.0

        energy = np.zeros(m)
        d1 = np.zeros(g * g)
        d3 = np.zeros(g * g)
        if cfg.lower_rate == "guarantee":
            g1, _, g3 = phase_durations(grid.M, b, k.L, k.C, k.Q, self.k_chain[j - 1], cfg.alpha_mode)
        first = True
        for c, members in enumerate(grid.cells):
            mc = len(members)
            if mc < 2:
                continue
            ix, iy = grid.cell_xy(c)
            sub = np.clip(pos[members] * g - np.array([ix, iy], dtype=float), 0.0, 1.0)
            sub_pair = _derangement(mc, rng)
            child = self.level(sub, sub_pair, j - 1, i_ext + k_i, depth + 1, trace, check and first, rng)
            first = False
            if cfg.lower_rate == "guarantee":
                # the lower scheme delivers K M^b on every cell
                d1[c], d3[c] = g1 / 9, g3 / 9
            else:
                d1[c] = 2 * k.L * mc * mc / child.rate * log_m
                d3[c] = 2 * k.C * k.Q * mc * mc / child.rate * log_m ** 2
            energy[members] += child.node_power * scale * (d1[c] + d3[c])
        t1 = 9 * d1.max()
        t3 = 9 * d3.max()
        t2 = 2 * k.C * m * log_m
        slot = 2 * k.C * log_m

        # phase 2: one source at a time; same-cell pairs idle through their slot
        src_cell = grid.cell_of
        dst_cell = grid.cell_of[pairing]
        sessions = {}
        for s in range(m):
            a, d = int(src_cell[s]), int(dst_cell[s])
            if a != d:
                sessions[(a, d)] = sessions.get((a, d), 0) + 1
        for (a, d), count in sessions.items():
            sess = build_session(inst, grid, a, d, p)
            tx_time = slot if sess.neighbor_mode else k.C * log_m
            if len(sess.tx_nodes) == 0:
                trace.failures.append(f"level {j} (m={m}): empty transmit half in cell {a}")
                continue
            energy[sess.tx_nodes] += count * sess.per_node_power * tx_time
            ratio = sess.per_node_power * tx_time * len(grid.cells[a]) / t2 / (p.P * sess.r_SD ** p.alpha / m)
            trace.phase2_ratio = max(trace.phase2_ratio, ratio)

        total = t1 + t2 + t3
        bits = m * grid.M * k.L
        rate = bits / total
        power = energy / total
        trace.note_power(depth, float(power.max() * m / p.P))
        if check:
            trace.info.setdefault(depth, dict(M=grid.M, g=g, b=b, durations=(t1, t2, t3)))
            if cfg.mi_check:
                self.mi_check(inst, grid, sessions, j, i_ext, trace, rng)
        return _LevelOut(rate, power)

    def mi_check(self, inst, grid, sessions, j, i_ext, trace, rng):
        """Compare the code rate of one session of each kind with its quantized MI."""
        p, k, cfg = self.params, self.k, self.config
        q = QuantizerSpec(k.delta_sq, k.Q)
        seen = set()
        for (a, d) in sorted(sessions):
            sess = build_session(inst, grid, a, d, p)
            if sess.neighbor_mode in seen or len(sess.tx_nodes) == 0 or len(sess.rx_nodes) == 0:
                continue
            seen.add(sess.neighbor_mode)
            if len(sess.tx_nodes) > cfg.mi_check_max_antennas:
                trace.warnings.append(f"level {j}: MI check skipped ({len(sess.tx_nodes)} antennas)")
                continue
            H = session_channel(inst, sess, p, rng)
            mi = log_m_scaled_quantized_mi(H, sess.per_node_power, p.N0, i_ext, q, cfg.mi_trials, rng)
            uses = 2 * k.C if sess.neighbor_mode else k.C
            need = k.L * sess.M / uses
            kind = "neighbour" if sess.neighbor_mode else "far"
            if mi < need:
                trace.warnings.append(f"level {j} {kind} session: MI {mi:.4g} < code rate {need:.4g}")
            a_, b_ = rho_range_neighbor(p.alpha) if sess.neighbor_mode else rho_range(p.alpha)
            snr = p.G * p.P / (p.N0 + i_ext + k.delta_sq) * len(sess.tx_nodes) / sess.M
            pz = paley_zygmund_bound(a_, b_, snr, len(sess.tx_nodes), pz_threshold(a_))
            if mi < pz:
                trace.warnings.append(f"numeric: level {j} {kind} session MI {mi:.4g} below PZ bound {pz:.4g}")
            if len(seen) == 2:
                break


def base_tdma_rate(instance: NetworkInstance, params: ChannelParams, interference: float = 0.0,
                   config: SchemeConfig = None) -> float:
    """K1: equal-slot TDMA rate of the instance's own pairing (worst pair)."""
    if config is not None and config.K1 is not None:
        return float(config.K1)
    pos = np.asarray(instance.unit_positions)
    r = np.sqrt(((pos[instance.pairing] - pos) ** 2).sum(axis=1))
    if r.min() <= 0:
        raise NearFieldViolation("source and destination coincide")
    return float(np.log2(1 + params.G * params.P * r.max() ** (-params.alpha) / (params.N0 + interference)))


def guaranteed_tdma_rate(params: ChannelParams, interference: float = 0.0,
                         config: SchemeConfig = None) -> float:
    """TDMA rate every pairing in the unit square supports (distance <= sqrt 2)."""
    if config is not None and config.K1 is not None:
        return float(config.K1)
    return float(np.log2(1 + params.G * params.P * 2 ** (-params.alpha / 2) / (params.N0 + interference)))


def rate_constant_chain(k: Constants, h: int, K1: float) -> list:
    """K_0 = K1 and K_j = L / (18 (L + C Q) / K_{j-1} + 2 C).

    K_j is the constant of the j-level guarantee K_j n^(j/(j+1)) obtained
    from the three-phase durations at M = n^(1/(2-b)).
    """
    chain = [float(K1)]
    for _ in range(h):
        chain.append(k.L / (18 * (k.L + k.C * k.Q) / chain[-1] + 2 * k.C))
    return chain


def run_hierarchical(instance: NetworkInstance, params: ChannelParams,
                     config: SchemeConfig = SchemeConfig(), seed: int = 0,
                     constants: Constants = None) -> ThroughputReport:
    """Run the h-level scheme on the unit-square view of ``instance``."""
    if instance.pairing is None:
        raise InvalidArgument("instance has no pairing")
    n = instance.n
    k = constants or resolve_constants(params, config, n)
    k_chain = rate_constant_chain(k, config.levels_h, guaranteed_tdma_rate(params, k.interference, config))
    eng = _Engine(params, config, k, seed, k_chain)
    trace = _Trace()
    rng = make_rng(seed, "hierarchy")
    out = eng.level(np.asarray(instance.unit_positions), np.asarray(instance.pairing),
                    config.levels_h, 0.0, 0, trace, True, rng)

    depths = sorted(trace.info)
    info = [trace.info[d] for d in depths]
    return ThroughputReport(
        scheme="hierarchical" if config.levels_h else "tdma",
        n=n,
        regime=instance.regime,
        levels_h=config.levels_h,
        M_per_level=[float(x["M"]) for x in info],
        b_per_level=[float(x["b"]) for x in info],
        g_per_level=[int(x["g"]) for x in info],
        phase_durations=[[float(t) for t in x["durations"]] for x in info],
        aggregate_rate=float(out.rate),
        per_node_avg_power=float(out.node_power.max()),
        power_budget=params.P / n,
        level_power_ratio=[float(trace.power_ratio[d]) for d in sorted(trace.power_ratio)],
        phase2_power_ratio=float(trace.phase2_ratio),
        failure=bool(trace.failures),
        failure_reason="; ".join(trace.failures),
        warnings=list(trace.warnings),
        constants=dict(asdict(k), K1=k_chain[0], K_chain=k_chain, lower_rate=config.lower_rate,
                       K1_measured=base_tdma_rate(instance, params, k.interference, config)),
        seed=seed,
        node_avg_power=out.node_power,
    )


@dataclass(frozen=True)
class PowerAudit:
    max_avg_power: float
    budget: float
    passed: bool
    level_ratios: list


def per_node_power_audit(report: ThroughputReport, params: ChannelParams, regime: str = DENSE) -> PowerAudit:
    """Check every node's time-averaged power against the regime's budget."""
    if report.node_avg_power is None:
        raise InvalidArgument("report carries no per-node powers")
    mx = float(np.max(report.node_avg_power))
    if regime == DENSE:
        budget = params.P / report.n
        levels_ok = all(r <= 1 + POWER_TOL for r in report.level_power_ratio)
    elif regime == EXTENDED:
        budget = params.P
        levels_ok = True
    else:
        raise InvalidArgument(f"unknown regime {regime!r}")
    return PowerAudit(mx, budget, bool(mx <= budget * (1 + POWER_TOL) and levels_ok),
                      list(report.level_power_ratio))


def run_bursty_extended(instance: NetworkInstance, params: ChannelParams,
                        config: SchemeConfig = SchemeConfig(), seed: int = 0,
                        constants: Constants = None) -> ThroughputReport:
    """Duty-cycled hierarchical scheme for an extended network.

    The extended network is the unit-square network with per-node budget
    P / n^(alpha/2). The dense scheme is run at full power a fraction
    n^(1 - alpha/2) of the time.
    """
    if instance.regime != EXTENDED:
        raise InvalidRegime("bursty scheme needs an extended network")
    n = instance.n
    dense = run_hierarchical(instance.rescaled_to_dense(), params, config, seed, constants)
    duty = float(n ** (1 - params.alpha / 2))
    if duty == 1.0:
        rate = dense.aggregate_rate
        node = dense.node_avg_power
    else:
        rate = duty * dense.aggregate_rate
        node = dense.node_avg_power * duty * n ** (params.alpha / 2)
    return replace(
        dense,
        scheme="bursty",
        regime=EXTENDED,
        aggregate_rate=float(rate),
        duty_cycle=duty,
        per_node_avg_power=float(node.max()),
        power_budget=params.P,
        node_avg_power=node,
    )


# ---------------------------------------------------------------- multihop


def run_multihop_baseline(instance: NetworkInstance, params: ChannelParams, seed: int = 0,
                          interference_model: str = "bound") -> ThroughputReport:
    """Squarelet-chain multihop with 9-TDMA over squarelets.

    Squarelets have area about 2 log n. Each squarelet relays through the
    node nearest its centre. Packets move horizontally, then vertically.
    Every flow gets the same rate. The rate is limited by the busiest
    squarelet of each colour.
    """
    if instance.regime != EXTENDED:
        raise InvalidRegime("multihop baseline needs an extended network")
    if instance.pairing is None:
        raise InvalidArgument("instance has no pairing")
    if interference_model not in ("bound", "relays"):
        raise InvalidArgument("interference_model must be 'bound' or 'relays'")
    n = instance.n
    side = instance.side
    g = max(1, int(math.floor(side / math.sqrt(2 * math.log(n)) + 1e-9)))
    s = side / g
    pos = instance.positions
    idx = np.minimum(np.floor(pos / s).astype(np.int64), g - 1)
    cell = idx[:, 0] * g + idx[:, 1]

    centers = (np.stack(np.divmod(np.arange(g * g), g), axis=1) + 0.5) * s
    relay = np.full(g * g, -1, dtype=np.int64)
    best = np.full(g * g, np.inf)
    d_center = np.sqrt(((pos - centers[cell]) ** 2).sum(axis=1))
    for i in np.lexsort((np.arange(n), d_center)):
        c = cell[i]
        if relay[c] < 0:
            relay[c] = i
            best[c] = d_center[i]
    failures = []
    if np.any(relay < 0):
        failures.append(f"{int(np.sum(relay < 0))} empty relay squarelets")

    ix, iy = np.divmod(np.arange(g * g), g)
    color = (ix % 3) * 3 + iy % 3
    relay_pos = pos[np.maximum(relay, 0)]

    if interference_model == "bound":
        # ring bound of 9-TDMA in squarelet units, as for the clusters
        i_bound = interference_bound(params, params.P * s ** (-params.alpha), g * g) if g >= 3 else 0.0

    def interference(tx_cell, rx_point):
        if interference_model == "bound":
            return i_bound
        # every other relay of the transmitting colour is active
        same = np.flatnonzero((color == color[tx_cell]) & (relay >= 0))
        same = same[same != tx_cell]
        if same.size == 0:
            return 0.0
        d = np.sqrt(((relay_pos[same] - rx_point) ** 2).sum(axis=1))
        d = np.maximum(d, 1e-9 * side)
        return float(np.sum(params.G * params.P * d ** (-params.alpha)))

    load = np.zeros(g * g)  # channel uses per unit of per-flow traffic
    hop_cache = {}

    def hop(tx_node, rx_node, tx_cell):
        key = (tx_node, rx_node)
        if key not in hop_cache:
            r = float(np.linalg.norm(pos[tx_node] - pos[rx_node]))
            if r < 1e-9 * side:
                raise NearFieldViolation("hop endpoints coincide")
            sig = params.G * params.P * r ** (-params.alpha)
            rate = math.log2(1 + sig / (params.N0 + interference(tx_cell, pos[rx_node])))
            hop_cache[key] = rate
        load[tx_cell] += 1.0 / hop_cache[key]

    for src in range(n):
        dst = int(instance.pairing[src])
        ax, ay = divmod(int(cell[src]), g)
        bx, by = divmod(int(cell[dst]), g)
        path = []
        x, y = ax, ay
        while x != bx:
            x += 1 if bx > x else -1
            path.append(x * g + y)
        while y != by:
            y += 1 if by > y else -1
            path.append(x * g + y)
        cur, cur_cell = src, int(cell[src])
        for c in path:
            nxt = int(relay[c])
            if nxt < 0:
                continue
            if nxt != cur:
                hop(cur, nxt, cur_cell)
            cur, cur_cell = nxt, c
        if cur != dst:
            hop(cur, dst, cur_cell)

    period = sum(float(load[color == k].max()) for k in range(9) if np.any(color == k))
    per_flow = 1.0 / period if period > 0 else 0.0
    return ThroughputReport(
        scheme="multihop",
        n=n,
        regime=EXTENDED,
        levels_h=0,
        M_per_level=[],
        b_per_level=[],
        g_per_level=[g],
        phase_durations=[],
        aggregate_rate=float(n * per_flow),
        per_node_avg_power=float("nan"),
        power_budget=params.P,
        level_power_ratio=[],
        phase2_power_ratio=0.0,
        failure=bool(failures),
        failure_reason="; ".join(failures),
        constants={"squarelet_side": s, "squarelets": g * g, "interference_model": interference_model},
        seed=seed,
    )


def failure_rate(config: SchemeConfig, n: int, seeds: int, params: ChannelParams = ChannelParams(),
                 base_seed: int = 0, lattice: bool = False) -> float:
    """Fraction of seeds on which the scheme flags a failure."""
    from hiercoop.netmodel import lattice_network, random_pairing, sample_network

    if seeds < 30:
        raise InvalidArgument("need at least 30 seeds")
    cfg = replace(config, mi_check=False)
    consts = resolve_constants(params, cfg, n)
    fails = 0
    for t in range(seeds):
        if lattice:
            inst = lattice_network(int(round(math.sqrt(n))))
        else:
            inst = sample_network(n, DENSE, seed=base_seed + t)
        inst = random_pairing(inst, seed=base_seed + t)
        fails += run_hierarchical(inst, params, cfg, seed=base_seed + t, constants=consts).failure
    return fails / seeds
