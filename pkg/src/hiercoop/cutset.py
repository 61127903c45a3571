"""Cutset upper bounds.

Dense networks: the sum over sources of the SIMO capacity to all other
nodes. Extended networks: a vertical cut through the middle of the
square. The nodes just right of the cut (V_D) are bounded by a MISO sum.
The rest (D_far) are bounded through the total received power P_tot and
the equalized channel matrix, whose columns have unit norm.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from hiercoop.channel import ChannelParams, NEAR_FIELD_FRACTION
from hiercoop.errors import InvalidArgument, InvalidRegime, NearFieldViolation, NumericError
from hiercoop.netmodel import DENSE, EXTENDED, NetworkInstance
from hiercoop.streams import make_rng

LOG2E = 1.0 / math.log(2.0)
DEFAULT_EPSILON = 0.05
_CHUNK = 2_000_000


def _inverse_power_sums(src: np.ndarray, dst: np.ndarray, alpha: float, side: float,
                        exclude_self: bool = False) -> np.ndarray:
    """For each point of ``src``: sum over ``dst`` of r^-alpha, chunked."""
    out = np.zeros(len(src))
    if len(src) == 0 or len(dst) == 0:
        return out
    step = max(1, _CHUNK // len(dst))
    for lo in range(0, len(src), step):
        a = src[lo:lo + step]
        d2 = ((a[:, None, :] - dst[None, :, :]) ** 2).sum(axis=-1)
        if exclude_self:
            rows = np.arange(len(a))
            d2[rows, lo + rows] = np.inf
        if np.any(d2 < (NEAR_FIELD_FRACTION * side) ** 2):
            raise NearFieldViolation("coincident nodes")
        out[lo:lo + step] = np.sum(d2 ** (-alpha / 2), axis=1)
    return out


def dense_simo_upper_bound(instance: NetworkInstance, params: ChannelParams) -> float:
    """sum_s log2(1 + (P/N0) sum_{i != s} G r_is^-alpha)."""
    if instance.regime != DENSE:
        raise InvalidRegime("dense bound needs a dense network")
    pos = instance.positions
    g = _inverse_power_sums(pos, pos, params.alpha, instance.side, exclude_self=True)
    return float(np.sum(np.log2(1 + params.P / params.N0 * params.G * g)))


@dataclass(frozen=True)
class CutGeometry:
    instance: NetworkInstance = field(repr=False)
    cut_x: float
    S: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    V_D: np.ndarray = field(repr=False)
    D_far: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.instance.n


def compute_cut(instance: NetworkInstance) -> CutGeometry:
    """Split at x = side/2; V_D is the unit-width strip right of the cut."""
    if instance.regime != EXTENDED:
        raise InvalidRegime("the cut applies to extended networks")
    pos = instance.positions
    cut = instance.side / 2
    x = pos[:, 0]
    S = np.flatnonzero(x < cut)
    D = np.flatnonzero(x >= cut)
    near = x[D] < cut + 1.0
    return CutGeometry(instance, cut, S, D, D[near], D[~near])


def d_weights(cut: CutGeometry, alpha: float) -> np.ndarray:
    """d_k = sum_{i in D_far} r_ik^-alpha for every k in S (aligned with cut.S)."""
    pos = cut.instance.positions
    return _inverse_power_sums(pos[cut.S], pos[cut.D_far], alpha, cut.instance.side)


def d_weight(cut: CutGeometry, k: int, alpha: float) -> float:
    if k not in set(cut.S.tolist()):
        raise InvalidArgument(f"node {k} is not left of the cut")
    pos = cut.instance.positions
    return float(_inverse_power_sums(pos[[k]], pos[cut.D_far], alpha, cut.instance.side)[0])


def p_tot(cut: CutGeometry, params: ChannelParams) -> float:
    """Total power received in D_far when every source sends at full power."""
    return float(params.P * params.G * np.sum(d_weights(cut, params.alpha)))


def d_regular(k_x: int, k_y: int, sqrt_n: int, alpha: float) -> float:
    """Exact sum over (i_x, i_y) in [1, sqrt_n]^2 of ((i_x+k_x-1)^2 + (i_y-k_y)^2)^(-alpha/2)."""
    if not (1 <= k_x <= sqrt_n and 1 <= k_y <= sqrt_n):
        raise InvalidArgument("need 1 <= k_x, k_y <= sqrt_n")
    i = np.arange(1, sqrt_n + 1, dtype=float)
    dx2 = (i + k_x - 1) ** 2
    dy2 = (i - k_y) ** 2
    return float(np.sum((dx2[:, None] + dy2[None, :]) ** (-alpha / 2)))


def d_regular_grid(sqrt_n: int, alpha: float) -> np.ndarray:
    """d_regular for all (k_x, k_y) at once; entry [k_x-1, k_y-1].

    Summed in x through cumulative sums, then in y through a sliding
    window over the difference i_y - k_y.
    """
    N = int(sqrt_n)
    x = np.arange(1, 2 * N, dtype=float)          # i_x + k_x - 1 ranges over 1..2N-1
    y = np.arange(-(N - 1), N, dtype=float)      # i_y - k_y ranges over -(N-1)..N-1
    f = (x[:, None] ** 2 + y[None, :] ** 2) ** (-alpha / 2)
    cx = np.vstack([np.zeros((1, f.shape[1])), np.cumsum(f, axis=0)])
    # rows k_x: sum of x from k_x to k_x+N-1 -> indices k_x-1 .. k_x+N-2
    kx = np.arange(1, N + 1)
    row_sums = cx[kx + N - 1] - cx[kx - 1]       # (N, 2N-1) over y offsets
    cy = np.hstack([np.zeros((N, 1)), np.cumsum(row_sums, axis=1)])
    ky = np.arange(1, N + 1)
    # i_y - k_y for i_y = 1..N is 1-k_y .. N-k_y -> offset index (1-k_y)+(N-1) = N-k_y
    lo = N - ky
    return cy[:, lo + N] - cy[:, lo]


# (K2', K3') per alpha, regenerated by scripts/regen_constants.py
DK_BOUND_CONSTANTS = {
    2.0: (7.769324712837903, 0.2),
    2.5: (11.42477796076938, 0.1337480609952844),
    3.0: (8.283185307179586, 0.08944271909999159),
    4.0: (6.71238898038469, 0.04),
}


def k3_prime(alpha: float) -> float:
    """Lower constant 5^(-alpha/2).

    The k_x^2 terms with i_x <= k_x and |i_y - k_y| < k_x all lie within
    sqrt(5) k_x of the source, so d >= k_x^2 (5 k_x^2)^(-alpha/2).
    """
    if alpha < 2:
        raise InvalidArgument("alpha must be >= 2")
    return 5.0 ** (-alpha / 2)


def k2_prime(alpha: float) -> float:
    """Upper constant from the near-term, strip and angular integral bounds.

    alpha > 2: d <= k^-alpha + (1+pi) k^(1-alpha) + pi/(alpha-2) k^(2-alpha)
    <= (2 + pi + pi/(alpha-2)) k^(2-alpha).
    alpha = 2: d <= 2 + pi + pi log(3 sqrt(n)), which is <= K log n for n >= 4.
    """
    if alpha < 2:
        raise InvalidArgument("alpha must be >= 2")
    if alpha == 2:
        return (2 + math.pi + math.pi * math.log(3)) / math.log(4) + math.pi / 2
    return 2 + math.pi + math.pi / (alpha - 2)


def dk_closed_bounds(k_x: int, n: int, alpha: float) -> tuple:
    """(lower, upper) sandwich for d_regular(k_x, ., sqrt n); alpha = 2 needs n >= 4."""
    if k_x < 1:
        raise InvalidArgument("k_x must be >= 1")
    lower = k3_prime(alpha) * k_x ** (2 - alpha)
    if alpha == 2:
        if n < 4:
            raise InvalidArgument("the alpha = 2 upper bound needs n >= 4")
        upper = k2_prime(alpha) * math.log(n)
    else:
        upper = k2_prime(alpha) * k_x ** (2 - alpha)
    return lower, upper


def displaced_regular_bound(cut: CutGeometry, params: ChannelParams) -> float:
    """2 (log n)^2 P G sum_{k_x, k_y} d_regular(k_x, k_y, sqrt n)."""
    n = cut.n
    sqrt_n = max(1, int(math.ceil(math.sqrt(n))))
    grid = d_regular_grid(sqrt_n, params.alpha)
    return float(2 * math.log(n) ** 2 * params.P * params.G * grid.sum())


@dataclass(frozen=True)
class EqualizedMatrix:
    """H~_ik = exp(j theta) r_ik^(-alpha/2) / sqrt(d_k), rows D_far, columns S."""

    entries: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    dropped: np.ndarray = field(repr=False)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.entries)

    @property
    def shape(self):
        return self.entries.shape


def build_equalized_matrix(cut: CutGeometry, alpha: float, seed=0) -> EqualizedMatrix:
    if len(cut.D_far) == 0:
        raise InvalidArgument("D_far is empty")
    pos = cut.instance.positions
    r2 = ((pos[cut.D_far][:, None, :] - pos[cut.S][None, :, :]) ** 2).sum(axis=-1)
    if np.any(r2 < (NEAR_FIELD_FRACTION * cut.instance.side) ** 2):
        raise NearFieldViolation("coincident nodes")
    mag = r2 ** (-alpha / 4)
    d = np.sum(mag ** 2, axis=0)
    keep = d > 0
    mag = mag[:, keep] / np.sqrt(d[keep])
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "equalized")
    entries = mag * np.exp(1j * rng.uniform(0, 2 * np.pi, mag.shape))
    return EqualizedMatrix(entries, d[keep], cut.D_far, cut.S[keep], cut.S[~keep])


def equalized_from_magnitudes(mag, seed=0) -> EqualizedMatrix:
    """Equalized matrix from an arbitrary non-negative magnitude matrix."""
    mag = np.asarray(mag, dtype=float)
    d = np.sum(mag ** 2, axis=0)
    if np.any(d <= 0):
        raise InvalidArgument("every column needs a non-zero entry")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "equalized")
    m = mag / np.sqrt(d)
    ent = m * np.exp(1j * rng.uniform(0, 2 * np.pi, m.shape))
    return EqualizedMatrix(ent, d, np.arange(m.shape[0]), np.arange(m.shape[1]), np.array([], dtype=int))


def spectral_norm_sq(m, tol: float = 1e-8, max_iter: int = 20000) -> float:
    """Largest eigenvalue of A*A by power iteration from the all-ones vector."""
    a = m.entries if isinstance(m, EqualizedMatrix) else np.asarray(m)
    if a.size == 0:
        raise InvalidArgument("empty matrix")
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite entries")
    ah = np.conj(a.T)
    v = np.ones(a.shape[1], dtype=complex) / math.sqrt(a.shape[1])
    lam = 0.0
    for _ in range(max_iter):
        w = ah @ (a @ v)
        new = float(np.real(np.vdot(v, w)))
        nrm = np.linalg.norm(w)
        if nrm == 0:
            # start vector in the null space; the all-ones start is deterministic,
            # so fall back to the first basis vector
            v = np.zeros_like(v)
            v[int(np.argmax(np.sum(np.abs(a) ** 2, axis=0)))] = 1
            continue
        v = w / nrm
        if abs(new - lam) <= tol * abs(new):
            # Rayleigh quotient at the final iterate
            return float(np.real(np.vdot(v, ah @ (a @ v))))
        lam = new
    raise NumericError(f"power iteration did not converge in {max_iter} steps")


def trace_power(a: np.ndarray, l: int) -> float:
    """Tr((A*A)^l) for one realisation."""
    g = np.conj(a.T) @ a if a.shape[1] <= a.shape[0] else a @ np.conj(a.T)
    return float(np.real(np.trace(np.linalg.matrix_power(g, l))))


def trace_moment(m: EqualizedMatrix, l: int, trials: int = 200, seed=0, exact: bool = False) -> float:
    """E over phases of Tr((H~* H~)^l).

    ``exact`` averages over the grid of (l+1) equally spaced phases per
    entry, which reproduces the expectation over uniform phases exactly
    (every phase enters with exponent at most l); only feasible for tiny
    matrices.
    """
    if l < 1:
        raise InvalidArgument("l must be >= 1")
    mag = m.magnitude
    if exact:
        K = l + 1
        cells = mag.size
        if K ** cells > 2_000_000:
            raise InvalidArgument("matrix too large for exact phase enumeration")
        grid = np.exp(2j * np.pi * np.arange(K) / K)
        total = 0.0
        for idx in np.ndindex(*([K] * cells)):
            ph = grid[list(idx)].reshape(mag.shape)
            total += trace_power(mag * ph, l)
        return total / K ** cells
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "trace-moment", l)
    vals = [trace_power(mag * np.exp(1j * rng.uniform(0, 2 * np.pi, mag.shape)), l) for _ in range(trials)]
    return float(np.mean(vals))


def trace_moment_l2(mag) -> float:
    """Expansion of E Tr((H*H)^2) over phases.

    sum_{i1,i2,k} |H_i1k|^2 |H_i2k|^2 + sum_{i, k1 != k2} |H_ik1|^2 |H_ik2|^2
    """
    p = np.asarray(mag, dtype=float) ** 2
    col = p.sum(axis=0)
    row = p.sum(axis=1)
    first = float(np.sum(col ** 2))
    second = float(np.sum(row ** 2) - np.sum(p ** 2))
    return first + second


def catalan(l: int) -> int:
    """(2l)! / (l! (l+1)!) in exact integer arithmetic."""
    if l < 0:
        raise InvalidArgument("l must be >= 0")
    return math.comb(2 * l, l) // (l + 1)


def vd_miso_term(cut: CutGeometry, params: ChannelParams) -> float:
    """sum_{i in V_D} log2(1 + (P/N0) (sum_{k in S} sqrt(G) r_ik^(-alpha/2))^2).

    Each V_D node is bounded by a MISO channel whose transmitters beamform
    coherently.
    """
    if len(cut.V_D) == 0 or len(cut.S) == 0:
        return 0.0
    pos = cut.instance.positions
    amp = _inverse_power_sums(pos[cut.V_D], pos[cut.S], params.alpha / 2, cut.instance.side)
    return float(np.sum(np.log2(1 + params.P / params.N0 * params.G * amp ** 2)))


def cutset_upper_bound(cut: CutGeometry, params: ChannelParams, epsilon: float = DEFAULT_EPSILON) -> float:
    """4 x (V_D MISO term + n^eps P_tot / N0 log2 e).

    The far term bounds log det(I + H Q H*) by the trace once the spectral
    norm of the equalized matrix is below n^eps (a high-probability event).
    The factor 4 accounts for a quarter of all flows crossing the cut.
    """
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be positive")
    near = vd_miso_term(cut, params)
    far = cut.n ** epsilon * p_tot(cut, params) / params.N0 * LOG2E if len(cut.D_far) else 0.0
    return 4.0 * (near + far)


def scaling_exponent_theory(alpha: float) -> float:
    if alpha < 2:
        raise InvalidArgument("alpha must be >= 2")
    return 2 - alpha / 2 if alpha <= 3 else 0.5


@dataclass(frozen=True)
class CutsetReport:
    n: int
    alpha: float
    seed: Optional[int]
    n_S: int
    n_V_D: int
    n_D_far: int
    p_tot: float
    vd_term: float
    bound_value: float
    epsilon: float
    theory_exponent: float
    spectral_norm_sq: Optional[float] = None
    d_summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def cutset_report(instance: NetworkInstance, params: ChannelParams, epsilon: float = DEFAULT_EPSILON,
                  seed: int = 0, with_spectral: bool = False) -> CutsetReport:
    cut = compute_cut(instance)
    d = d_weights(cut, params.alpha)
    pt = float(params.P * params.G * d.sum())
    near = vd_miso_term(cut, params)
    bound = cutset_upper_bound(cut, params, epsilon)
    spectral = None
    if with_spectral and len(cut.D_far) and len(cut.S):
        spectral = spectral_norm_sq(build_equalized_matrix(cut, params.alpha, seed))
    summary = {}
    if d.size:
        summary = {"min": float(d.min()), "max": float(d.max()), "mean": float(d.mean())}
    return CutsetReport(instance.n, params.alpha, seed, len(cut.S), len(cut.V_D), len(cut.D_far),
                        pt, near, bound, epsilon, scaling_exponent_theory(params.alpha), spectral, summary)
