"""Line-of-sight channel with random phases.

H_ik = sqrt(G) r_ik^(-alpha/2) exp(j theta_ik), theta_ik i.i.d. uniform on
[0, 2pi), redrawn once per fading block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from hiercoop.errors import InvalidArgument, NearFieldViolation
from hiercoop.streams import make_rng

NEAR_FIELD_FRACTION = 1e-9


@dataclass(frozen=True)
class ChannelParams:
    G: float = 1.0
    alpha: float = 2.0
    P: float = 1.0
    N0: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 2:
            raise InvalidArgument(f"path loss exponent must be >= 2, got {self.alpha}")
        if not (self.G > 0 and self.P > 0 and self.N0 > 0):
            raise InvalidArgument("G, P and N0 must be positive")

    def with_alpha(self, alpha: float) -> "ChannelParams":
        return ChannelParams(self.G, alpha, self.P, self.N0)

    @property
    def snr(self) -> float:
        return self.G * self.P / self.N0


def gain(params: ChannelParams, r):
    """Power gain G r^-alpha (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise NearFieldViolation("distance must be positive")
    out = params.G * r_arr ** (-params.alpha)
    return float(out) if np.ndim(out) == 0 else out


def friis_gain(wavelength: float, g_tx: float = 1.0, g_rx: float = 1.0) -> float:
    """G constant of free-space propagation, for use with alpha = 2."""
    return g_tx * g_rx * wavelength ** 2 / (16 * math.pi ** 2)


def distances(tx, rx, side: float = 1.0) -> np.ndarray:
    """rx-by-tx matrix of Euclidean distances with the near-field guard."""
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    d = np.sqrt(((rx[:, None, :] - tx[None, :, :]) ** 2).sum(axis=-1))
    if d.size and d.min() < NEAR_FIELD_FRACTION * side:
        raise NearFieldViolation(f"nodes closer than {NEAR_FIELD_FRACTION * side:g}")
    return d


@dataclass(frozen=True)
class ChannelMatrix:
    """One fading realization between a transmit and a receive node set.

    ``magnitude`` is |H_ik| (rows: receivers, columns: transmitters); it does
    not depend on the fading draw, only ``phase`` does.
    """

    magnitude: np.ndarray
    phase: np.ndarray
    rows: tuple = ()
    cols: tuple = ()

    @property
    def entries(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)

    @property
    def shape(self):
        return self.magnitude.shape

    def redraw(self, rng: np.random.Generator) -> "ChannelMatrix":
        """Same geometry, fresh i.i.d. phases."""
        phase = rng.uniform(0, 2 * np.pi, self.magnitude.shape)
        return ChannelMatrix(self.magnitude, phase, self.rows, self.cols)


def channel_magnitudes(params: ChannelParams, tx, rx, side: float = 1.0) -> np.ndarray:
    return np.sqrt(params.G) * distances(tx, rx, side) ** (-params.alpha / 2)


def sample_channel_matrix(params: ChannelParams, tx, rx, seed=0, side: float = 1.0,
                          tx_ids=(), rx_ids=()) -> ChannelMatrix:
    """Channel from positions ``tx`` to positions ``rx`` with uniform phases."""
    mag = channel_magnitudes(params, tx, rx, side)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "channel")
    phase = rng.uniform(0, 2 * np.pi, mag.shape)
    return ChannelMatrix(mag, phase, tuple(rx_ids), tuple(tx_ids))


def interference_bound(params: ChannelParams, per_node_power: float, terms: int) -> float:
    """sum_{i=1}^{terms} 8 i G p / (3i - 1)^alpha.

    Rings of co-coloured clusters: ring i holds at most 8i clusters, all
    farther than (3i - 1) cell widths from the victim cluster.
    """
    terms = int(terms)
    if terms < 1:
        raise InvalidArgument("terms must be >= 1")
    i = np.arange(1, terms + 1, dtype=float)
    s = np.sum(8 * i / (3 * i - 1) ** params.alpha)
    return float(params.G * per_node_power * s)


def interference_bound_limit(params: ChannelParams, per_node_power: float) -> float:
    """Closed form of the infinite ring sum through Hurwitz zeta values.

    8i/(3i-1)^a = (8/3)[(3i-1)^(1-a) + (3i-1)^(-a)], and
    sum_i (3i-1)^-s = 3^-s zeta(s, 2/3). Diverges for alpha <= 2.
    """
    a = params.alpha
    if a <= 2:
        return math.inf
    s = (8 / 3) * (3 ** (1 - a) * zeta(a - 1, 2 / 3) + 3 ** (-a) * zeta(a, 2 / 3))
    return float(params.G * per_node_power * s)


def cluster_interference(params: ChannelParams, n_clusters: int, per_cluster_power: float = None) -> float:
    """Interference budget K_I for 9-TDMA on a g x g grid with n_clusters cells."""
    if n_clusters < 9:
        return 0.0
    p = params.P if per_cluster_power is None else per_cluster_power
    return interference_bound(params, p, n_clusters)


@dataclass(frozen=True)
class InterferenceMeasurement:
    mean_power: float
    exact_power: float
    cross_correlation: complex
    second_probe_power: float
    n_interferers: int


def measured_interference(instance, grid, color: int, probe: int, params: ChannelParams,
                          seed=0, trials: int = 2000) -> InterferenceMeasurement:
    """Monte Carlo interference at ``probe`` from co-coloured cells under 9-TDMA.

    Every node of every other cell of ``color`` transmits an independent
    CN(0, P A_c^(alpha/2) / M) symbol. ``cross_correlation`` is the sample
    mean of I_v conj(I_v') for a second node v' of the probe's cell.
    """
    cell = int(grid.cell_of[probe])
    if grid.coloring[cell] != color:
        raise InvalidArgument(f"probe {probe} is not in a cell of colour {color}")
    others = [c for c in grid.cells_of_color(color) if c != cell]
    tx = np.concatenate([grid.cells[c] for c in others]) if others else np.array([], dtype=np.int64)
    if tx.size == 0:
        return InterferenceMeasurement(0.0, 0.0, 0j, 0.0, 0)

    pos = instance.positions
    members = grid.cells[cell]
    mates = members[members != probe]
    probes = [probe] + ([int(mates[0])] if mates.size else [])
    mag = channel_magnitudes(params, pos[tx], pos[probes], instance.side)
    p_node = params.P * grid.cell_area ** (params.alpha / 2) / grid.M
    exact = float(np.sum(mag[0] ** 2) * p_node)

    rng = make_rng(seed, "interference", probe, color)
    acc_p = np.zeros(len(probes))
    acc_x = 0j
    done = 0
    chunk = max(1, min(trials, 4_000_000 // (tx.size * len(probes))))
    while done < trials:
        k = min(chunk, trials - done)
        x = np.sqrt(p_node / 2) * (rng.standard_normal((k, tx.size)) + 1j * rng.standard_normal((k, tx.size)))
        theta = rng.uniform(0, 2 * np.pi, (k, len(probes), tx.size))
        i_v = np.einsum("kpt,kt->kp", mag[None] * np.exp(1j * theta), x)
        acc_p += np.sum(np.abs(i_v) ** 2, axis=0)
        if len(probes) > 1:
            acc_x += np.sum(i_v[:, 0] * np.conj(i_v[:, 1]))
        done += k
    power = acc_p / trials
    return InterferenceMeasurement(
        mean_power=float(power[0]),
        exact_power=exact,
        cross_correlation=complex(acc_x / trials),
        second_probe_power=float(power[1]) if len(probes) > 1 else 0.0,
        n_interferers=int(tx.size),
    )
