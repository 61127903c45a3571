"""Distributed MIMO between two clusters.

Mutual information of the virtual M x M link, the Paley-Zygmund lower
bound on it, received-power bounds, and the quantize-and-forward channel
in which each receive observation carries additive noise of variance
Delta^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hiercoop.channel import ChannelMatrix, ChannelParams, channel_magnitudes
from hiercoop.errors import InvalidArgument, NumericError
from hiercoop.streams import make_rng

SQ2 = math.sqrt(2.0)
DEFAULT_TRIALS = 200


@dataclass(frozen=True)
class MimoSession:
    """Transmit and receive node sets of one long-range MIMO transmission."""

    src_cluster: int
    dst_cluster: int
    tx_nodes: np.ndarray
    rx_nodes: np.ndarray
    r_SD: float
    per_node_power: float
    neighbor_mode: bool
    M: float

    @property
    def blocks_per_node(self) -> float:
        """Sub-blocks each transmitter carries (2 for far halves)."""
        return self.M / len(self.tx_nodes) if len(self.tx_nodes) else 0.0


def build_session(instance, grid, src_cluster: int, dst_cluster: int, params: ChannelParams) -> MimoSession:
    """Session from cell ``src_cluster`` to cell ``dst_cluster``.

    Neighbouring cells use the far half of each cell (relative to the
    other) so the transmit-receive distances stay comparable to r_SD.
    """
    if src_cluster == dst_cluster:
        raise InvalidArgument("source and destination clusters coincide")
    r_sd = float(np.linalg.norm(grid.cell_center(src_cluster) - grid.cell_center(dst_cluster)))
    m_src = len(grid.cells[src_cluster])
    neighbor = grid.are_neighbors(src_cluster, dst_cluster)
    if neighbor:
        d = grid.direction(src_cluster, dst_cluster)
        back = grid.direction(dst_cluster, src_cluster)
        tx = grid.halves[src_cluster][d][1]
        rx = grid.halves[dst_cluster][back][1]
    else:
        tx = grid.cells[src_cluster]
        rx = grid.cells[dst_cluster]
    sigma = params.P * r_sd ** params.alpha / max(m_src, 1)
    return MimoSession(src_cluster, dst_cluster, np.asarray(tx), np.asarray(rx),
                       r_sd, sigma, neighbor, float(m_src))


def session_channel(instance, session: MimoSession, params: ChannelParams, seed=0) -> ChannelMatrix:
    pos = instance.positions
    mag = channel_magnitudes(params, pos[session.tx_nodes], pos[session.rx_nodes], instance.side)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "session")
    return ChannelMatrix(mag, rng.uniform(0, 2 * np.pi, mag.shape),
                         tuple(session.rx_nodes.tolist()), tuple(session.tx_nodes.tolist()))


@dataclass(frozen=True)
class QuantizerSpec:
    delta_sq: float
    rate_Q: float

    def __post_init__(self):
        if not self.delta_sq > 0:
            raise InvalidArgument("delta_sq must be positive")


def received_power_bounds(params: ChannelParams) -> tuple:
    """(P1, P2): the range of E|Y_d|^2 for non-neighbour sessions."""
    gp = params.G * params.P
    p1 = (SQ2 / (SQ2 + 1)) ** params.alpha * gp + params.N0
    p2 = (SQ2 / (SQ2 - 1)) ** params.alpha * gp + params.N0
    return p1, p2


def rho_range(alpha: float) -> tuple:
    """(a, b): extremes of rho_ik = (r_SD / r_ik)^(alpha/2), non-neighbour cells."""
    return (SQ2 / (SQ2 + 1)) ** (alpha / 2), (SQ2 / (SQ2 - 1)) ** (alpha / 2)


def rho_range_neighbor(alpha: float) -> tuple:
    """(a, b) for far-half sessions between adjacent cells.

    With cell width w, cardinal neighbours have r_SD = w and far-half
    distances in [w, sqrt(5) w]; diagonal neighbours have r_SD = sqrt(2) w
    and distances in [sqrt(2) w, 2 sqrt(2) w]. The cardinal case is the
    binding one for a, and rho never exceeds 1.
    """
    return min(5 ** (-alpha / 4), 2 ** (-alpha / 2)), 1.0


def default_quantizer(params: ChannelParams, epsilon: float = 0.1, delta_sq: float = None) -> QuantizerSpec:
    _, p2 = received_power_bounds(params)
    d2 = p2 if delta_sq is None else delta_sq
    return QuantizerSpec(d2, quantizer_rate(p2, d2, epsilon))


def quantizer_rate(P2: float, delta_sq: float, epsilon: float = 0.0) -> float:
    """log2(1 + P2 / Delta^2) + epsilon bits per observation."""
    if not delta_sq > 0:
        raise InvalidArgument("delta_sq must be positive")
    return math.log2(1 + P2 / delta_sq) + epsilon


def _magnitude(H) -> np.ndarray:
    mag = np.asarray(H.magnitude if isinstance(H, ChannelMatrix) else np.abs(H), dtype=float)
    if mag.ndim != 2 or min(mag.shape) < 1:
        raise InvalidArgument("channel matrix must be 2-D and non-empty")
    if not np.all(np.isfinite(mag)):
        raise NumericError("non-finite channel entries")
    return mag


def log2det(entries, snr: float) -> float:
    """log2 det(I + snr H H*) for one fixed complex matrix."""
    h = np.atleast_2d(np.asarray(entries, dtype=complex))
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite channel entries")
    if h.shape[0] > h.shape[1]:
        h = h.T
    gram = np.eye(h.shape[0]) + snr * (h @ np.conj(h.T))
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericError("log-det argument not positive definite") from exc
    return float(2 * np.sum(np.log2(np.real(np.diag(chol)))))


def logdet_samples(H, snr: float, trials: int = DEFAULT_TRIALS, seed=0) -> np.ndarray:
    """log2 det(I + snr H H*) for ``trials`` independent phase draws.

    Works on the smaller Gram matrix and uses a Cholesky factor.
    """
    mag = _magnitude(H)
    if not math.isfinite(snr) or snr < 0:
        raise NumericError(f"invalid snr {snr}")
    if snr == 0:
        return np.zeros(trials)
    if mag.shape[0] > mag.shape[1]:
        mag = mag.T
    m, k = mag.shape
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "fading")
    out = np.empty(trials)
    chunk = max(1, min(trials, 2_000_000 // (m * max(m, k))))
    eye = np.eye(m)
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        h = mag[None] * np.exp(1j * rng.uniform(0, 2 * np.pi, (t, m, k)))
        gram = eye + snr * (h @ np.conj(np.swapaxes(h, 1, 2)))
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            raise NumericError("log-det argument not positive definite") from exc
        diag = np.real(np.diagonal(chol, axis1=1, axis2=2))
        out[done:done + t] = 2 * np.sum(np.log2(diag), axis=1)
        done += t
    return out


def mimo_mutual_information(H, sigma_sq: float, noise: float, trials: int = DEFAULT_TRIALS, seed=0) -> float:
    """E log2 det(I + (sigma^2 / noise) H H*) over fading draws."""
    if not noise > 0:
        raise InvalidArgument("noise must be positive")
    return float(np.mean(logdet_samples(H, sigma_sq / noise, trials, seed)))


def mi_with_stderr(H, sigma_sq: float, noise: float, trials: int = DEFAULT_TRIALS, seed=0) -> tuple:
    """(mean, standard error) of the mutual information estimate."""
    if not noise > 0:
        raise InvalidArgument("noise must be positive")
    s = logdet_samples(H, sigma_sq / noise, trials, seed)
    se = float(np.std(s, ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return float(np.mean(s)), se


def paley_zygmund_bound(a: float, b: float, snr: float, M, t: float) -> float:
    """M log2(1 + snr t) (a^2 - t)^2 / (2 b^4)."""
    if t < 0 or t >= a * a:
        raise InvalidArgument(f"need 0 <= t < a^2 = {a * a:.6g}, got t={t}")
    return M * math.log2(1 + snr * t) * (a * a - t) ** 2 / (2 * b ** 4)


def pz_threshold(a: float) -> float:
    """The t used for the bound: a/2 when that is below a^2, else a^2/2."""
    return a / 2 if a / 2 < a * a else a * a / 2


@dataclass(frozen=True)
class EigenMoments:
    mean_lambda: float
    mean_lambda_sq: float
    stderr_lambda: float
    stderr_lambda_sq: float


def eigen_moment_stats(F, trials: int = DEFAULT_TRIALS, seed=0) -> EigenMoments:
    """E(lambda) and E(lambda^2) for lambda uniform over eig((1/M) F F*).

    Uses Tr(F F*) / M^2 and ||F F*||_F^2 / M^3; M is the column count.
    """
    rho = _magnitude(F)
    rows, M = rho.shape
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "moments")
    lam = np.full(trials, np.sum(rho ** 2) / (M * rows))
    lam2 = np.empty(trials)
    for t in range(trials):
        f = rho * np.exp(1j * rng.uniform(0, 2 * np.pi, rho.shape))
        g = f @ f.conj().T
        lam2[t] = np.sum(np.abs(g) ** 2) / (M * M * rows)
    se2 = float(np.std(lam2, ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return EigenMoments(float(lam.mean()), float(lam2.mean()), 0.0, se2)


def quantized_mutual_information(H, sigma_sq: float, noise: float, q: QuantizerSpec,
                                 trials: int = DEFAULT_TRIALS, seed=0) -> float:
    """MI when every observation also carries quantization noise Delta^2."""
    return mimo_mutual_information(H, sigma_sq, noise + q.delta_sq, trials, seed)


def scaled_quantizer_gain(p2: float, interference: float) -> float:
    """q = sqrt(P2 / (P2 + I)), normalising the observation back to power P2."""
    if interference < 0:
        raise InvalidArgument("interference power must be >= 0")
    return math.sqrt(p2 / (p2 + interference))


def log_m_scaled_quantized_mi(H, sigma_sq: float, noise: float, interference: float,
                              q: QuantizerSpec, trials: int = DEFAULT_TRIALS, seed=0,
                              p2: float = None) -> float:
    """MI of Y^ = s (H X + Z + I) + D with s = sqrt(P2 / (P2 + I)).

    ``interference`` is the extra Gaussian-equivalent power at each receiver
    (K_I log M under 9-TDMA at alpha = 2); with zero interference this is
    the plain quantized channel.
    """
    p2 = q.delta_sq if p2 is None else p2
    s2 = scaled_quantizer_gain(p2, interference) ** 2
    eff_noise = noise + interference + q.delta_sq / s2
    return mimo_mutual_information(H, sigma_sq, eff_noise, trials, seed)


def sample_session_geometry(M: int, params: ChannelParams, seed=0, separation: float = 2.0,
                            width: float = 1.0) -> tuple:
    """Two cells of width ``width`` with M uniform nodes each.

    Cell centres are ``separation`` widths apart along x. Returns
    (ChannelMatrix, r_SD, rho) where rho = (r_SD / r_ik)^(alpha/2).
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "session-geometry", M)
    tx = rng.random((M, 2)) * width
    rx = rng.random((M, 2)) * width + np.array([separation * width, 0.0])
    r_sd = separation * width
    mag = channel_magnitudes(params, tx, rx, width)
    rho = mag * r_sd ** (params.alpha / 2) / math.sqrt(params.G)
    H = ChannelMatrix(mag, rng.uniform(0, 2 * np.pi, mag.shape))
    return H, r_sd, rho


def sample_neighbor_geometry(M: int, params: ChannelParams, seed=0, diagonal: bool = False,
                             width: float = 1.0) -> tuple:
    """Far-half session between adjacent cells, M/2 nodes per far half."""
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "neighbor-geometry", M, diagonal)
    k = max(1, M // 2)

    def far_half(n_pts, sign):
        pts = []
        while len(pts) < n_pts:
            p = rng.random(2) * width
            c = p - width / 2
            proj = (c[0] + c[1]) if diagonal else c[0]
            if sign * proj <= 0:
                pts.append(p)
        return np.array(pts)

    tx = far_half(k, +1)
    rx = far_half(k, -1) + (np.array([width, width]) if diagonal else np.array([width, 0.0]))
    r_sd = width * (SQ2 if diagonal else 1.0)
    mag = channel_magnitudes(params, tx, rx, width)
    rho = mag * r_sd ** (params.alpha / 2) / math.sqrt(params.G)
    return ChannelMatrix(mag, rng.uniform(0, 2 * np.pi, mag.shape)), r_sd, rho


def received_power_mc(H, sigma_sq: float, noise: float, trials: int = 2000, seed=0) -> tuple:
    """Monte Carlo E|Y_d|^2 per receiver with CN(0, sigma^2) symbols.

    Returns (estimate, standard error, closed form) arrays over receivers.
    """
    mag = _magnitude(H)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "rx-power")
    r, k = mag.shape
    acc = np.zeros(r)
    acc2 = np.zeros(r)
    for _ in range(trials):
        h = mag * np.exp(1j * rng.uniform(0, 2 * np.pi, mag.shape))
        x = math.sqrt(sigma_sq / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
        z = math.sqrt(noise / 2) * (rng.standard_normal(r) + 1j * rng.standard_normal(r))
        y = np.abs(h @ x + z) ** 2
        acc += y
        acc2 += y * y
    mean = acc / trials
    var = np.maximum(acc2 / trials - mean ** 2, 0.0)
    closed = sigma_sq * np.sum(mag ** 2, axis=1) + noise
    return mean, np.sqrt(var / trials), closed
