"""Random network geometry.

Node placement, source-destination pairing, the cluster grid used by the
hierarchical scheme (cells, half-cells, 9-colour reuse pattern) and the
occupancy statistics the scheme relies on.

Positions are stored in unit coordinates; ``side`` scales them, so dense
(side 1) and extended (side sqrt(n)) instances share all geometry code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from hiercoop.errors import InvalidArgument, InvalidRegime
from hiercoop.streams import make_rng

DENSE = "dense"
EXTENDED = "extended"
REGIMES = (DENSE, EXTENDED)

# (dx, dy) unit directions towards a neighbouring cell
DIRECTIONS = {
    "E": (1, 0),
    "W": (-1, 0),
    "N": (0, 1),
    "S": (0, -1),
    "NE": (1, 1),
    "NW": (-1, 1),
    "SE": (1, -1),
    "SW": (-1, -1),
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkInstance:
    """Node placement for one network realization.

    ``unit_positions`` has shape (n, 2) with coordinates in [0, 1];
    ``pairing[s]`` is the destination of source ``s`` (0-based), or None
    when no pairing has been drawn yet.
    """

    n: int
    regime: str
    unit_positions: np.ndarray = field(repr=False)
    pairing: Optional[np.ndarray] = field(default=None, repr=False)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidArgument(f"unknown regime {self.regime!r}")
        pos = np.asarray(self.unit_positions, dtype=float)
        if pos.shape != (self.n, 2):
            raise InvalidArgument(f"positions must have shape ({self.n}, 2)")
        object.__setattr__(self, "unit_positions", _frozen(pos))
        if self.pairing is not None:
            pairing = np.asarray(self.pairing, dtype=np.int64)
            if sorted(pairing.tolist()) != list(range(self.n)):
                raise InvalidArgument("pairing must be a permutation of 0..n-1")
            object.__setattr__(self, "pairing", _frozen(pairing))

    @property
    def side(self) -> float:
        return 1.0 if self.regime == DENSE else math.sqrt(self.n)

    @property
    def positions(self) -> np.ndarray:
        return self.unit_positions * self.side

    def with_pairing(self, pairing) -> "NetworkInstance":
        return NetworkInstance(self.n, self.regime, self.unit_positions, pairing, self.seed)

    def rescaled_to_dense(self) -> "NetworkInstance":
        """Same unit geometry viewed as a dense (unit-area) network."""
        return NetworkInstance(self.n, DENSE, self.unit_positions, self.pairing, self.seed)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "regime": self.regime,
            "side": self.side,
            "positions": self.positions.tolist(),
            "pairing": None if self.pairing is None else self.pairing.tolist(),
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkInstance":
        n = int(d["n"])
        regime = d["regime"]
        side = 1.0 if regime == DENSE else math.sqrt(n)
        pos = np.asarray(d["positions"], dtype=float) / side
        return cls(n, regime, pos, d.get("pairing"), d.get("seed"))

    @classmethod
    def from_json(cls, text: str) -> "NetworkInstance":
        return cls.from_dict(json.loads(text))


def from_positions(positions, regime: str = DENSE, pairing=None) -> NetworkInstance:
    """Build an instance from absolute coordinates (engineered placements)."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    side = 1.0 if regime == DENSE else math.sqrt(n)
    if np.any(pos < 0) or np.any(pos > side):
        raise InvalidArgument(f"positions must lie in [0, {side}]^2")
    return NetworkInstance(n, regime, pos / side, pairing)


def lattice_network(per_axis: int, regime: str = DENSE) -> NetworkInstance:
    """Regular lattice: one node at the centre of each of per_axis^2 tiles."""
    c = (np.arange(per_axis) + 0.5) / per_axis
    xx, yy = np.meshgrid(c, c, indexing="ij")
    unit = np.column_stack([xx.ravel(), yy.ravel()])
    return NetworkInstance(per_axis * per_axis, regime, unit)


def sample_network(n: int, regime: str = DENSE, seed: int = 0) -> NetworkInstance:
    """n nodes i.i.d. uniform on the square; pairing left unset."""
    if n < 2:
        raise InvalidArgument("need at least 2 nodes")
    if regime not in REGIMES:
        raise InvalidArgument(f"unknown regime {regime!r}")
    rng = make_rng(seed, "placement")
    return NetworkInstance(n, regime, rng.random((n, 2)), None, seed)


def random_pairing(instance: NetworkInstance, seed: int = 0) -> NetworkInstance:
    """Uniform random permutation with every fixed point swapped away."""
    n = instance.n
    if n < 2:
        raise InvalidArgument("need at least 2 nodes")
    rng = make_rng(seed, "pairing")
    perm = rng.permutation(n)
    fixed = np.flatnonzero(perm == np.arange(n))
    while fixed.size:
        for i in fixed:
            if perm[i] != i:
                continue
            j = int(rng.integers(n - 1))
            j += j >= i
            perm[i], perm[j] = perm[j], perm[i]
        fixed = np.flatnonzero(perm == np.arange(n))
    return instance.with_pairing(perm)


def crossing_count(instance: NetworkInstance) -> int:
    """Number of pairs with source left and destination right of x = side/2."""
    if instance.pairing is None:
        raise InvalidArgument("pairing not set")
    x = instance.unit_positions[:, 0]
    left = x < 0.5
    return int(np.sum(left & ~left[instance.pairing]))


@dataclass(frozen=True)
class ClusterGrid:
    """Square cells tiling the network, with half-cells and 9-colouring.

    Cell ``c`` sits at grid column ``c // g`` and row ``c % g``.
    ``halves[c][d]`` is ``(near, far)``: members of cell c in the half
    closer to / farther from the neighbour in direction d.
    """

    M: float
    g: int
    side: float
    cell_of: np.ndarray = field(repr=False)
    cells: tuple = field(repr=False)
    halves: tuple = field(repr=False)
    coloring: np.ndarray = field(repr=False)

    @property
    def num_cells(self) -> int:
        return self.g * self.g

    @property
    def cell_width(self) -> float:
        return self.side / self.g

    @property
    def cell_area(self) -> float:
        return self.cell_width ** 2

    def cell_xy(self, c: int) -> tuple:
        return divmod(int(c), self.g)

    def cell_center(self, c: int) -> np.ndarray:
        ix, iy = self.cell_xy(c)
        return (np.array([ix, iy], dtype=float) + 0.5) * self.cell_width

    def cells_of_color(self, color: int) -> np.ndarray:
        return np.flatnonzero(self.coloring == color)

    def are_neighbors(self, c1: int, c2: int) -> bool:
        x1, y1 = self.cell_xy(c1)
        x2, y2 = self.cell_xy(c2)
        return c1 != c2 and max(abs(x1 - x2), abs(y1 - y2)) == 1

    def direction(self, c_from: int, c_to: int) -> str:
        """Compass direction from one neighbouring cell to another."""
        x1, y1 = self.cell_xy(c_from)
        x2, y2 = self.cell_xy(c_to)
        step = (int(np.sign(x2 - x1)), int(np.sign(y2 - y1)))
        for name, d in DIRECTIONS.items():
            if d == step:
                return name
        raise InvalidArgument("cells coincide")


def grid_dim(n: int, M: float) -> int:
    """Per-axis cell count: sqrt(n/M) rounded down, at least 1."""
    return max(1, int(math.floor(math.sqrt(n / M) + 1e-9)))


def build_cluster_grid(instance: NetworkInstance, M: float) -> ClusterGrid:
    """Partition the square into cells holding M nodes on average."""
    n = instance.n
    if M < 1 or M > n:
        raise InvalidArgument(f"cluster size M={M} must lie in [1, n={n}]")
    g = grid_dim(n, M)
    u = instance.unit_positions * g
    idx = np.minimum(np.floor(u).astype(np.int64), g - 1)
    frac = u - idx - 0.5
    cell_of = idx[:, 0] * g + idx[:, 1]

    order = np.argsort(cell_of, kind="stable")
    bounds = np.searchsorted(cell_of[order], np.arange(g * g + 1))
    cells = tuple(_frozen(order[bounds[c]:bounds[c + 1]]) for c in range(g * g))

    proj = {name: frac @ np.array(d, dtype=float) for name, d in DIRECTIONS.items()}
    halves = []
    for members in cells:
        per_dir = {}
        for name in DIRECTIONS:
            p = proj[name][members]
            per_dir[name] = (_frozen(members[p > 0]), _frozen(members[p <= 0]))
        halves.append(per_dir)

    ix, iy = np.divmod(np.arange(g * g), g)
    coloring = _frozen((ix % 3) * 3 + iy % 3)
    return ClusterGrid(float(n) / (g * g), g, instance.side, _frozen(cell_of),
                       cells, tuple(halves), coloring)


@dataclass(frozen=True)
class OccupancyStats:
    min_count: int
    max_count: int
    half_min_count: int


def cell_occupancy_stats(grid: ClusterGrid) -> OccupancyStats:
    """Exact min/max cell counts and the min over all 8 half-cells per cell."""
    counts = [len(c) for c in grid.cells]
    half_min = min(min(len(near), len(far)) for per_dir in grid.halves
                   for near, far in per_dir.values())
    return OccupancyStats(min(counts), max(counts), half_min)


def occupancy_failure(stats: OccupancyStats, M: float, delta: float) -> Optional[str]:
    """Reason string if cell counts leave the ((1-d)M, (1+d)M) band."""
    if stats.min_count == 0:
        return "empty cell"
    if stats.half_min_count == 0:
        return "empty half-cell"
    if stats.min_count <= (1 - delta) * M or stats.max_count >= (1 + delta) * M:
        return f"cell count outside ({(1 - delta) * M:.1f}, {(1 + delta) * M:.1f})"
    if stats.half_min_count <= (1 - delta) * M / 2:
        return f"half-cell count <= {(1 - delta) * M / 2:.1f}"
    return None


def lambda_plus(delta: float) -> float:
    """Chernoff exponent (1+d)log(1+d) - d of the upper tail."""
    return (1 + delta) * math.log1p(delta) - delta


def lambda_minus(delta: float) -> float:
    """Chernoff exponent (1-d)log(1-d) + d of the lower tail."""
    if delta >= 1:
        return 1.0
    return (1 - delta) * math.log1p(-delta) + delta


def cell_band_violation_bound(n: int, M: float, delta: float) -> float:
    """Union bound (n/M) exp(-Lambda(d) M) on any cell leaving the band."""
    return (n / M) * math.exp(-lambda_plus(delta) * M)


@dataclass(frozen=True)
class SquareletChecks:
    max_unit_occupancy: int
    all_2logn_occupied: bool
    crossing_count: Optional[int]


def squarelet_checks(instance: NetworkInstance) -> SquareletChecks:
    """Occupancy of unit and (2 log n)-area squarelets plus the cut crossing count."""
    if instance.regime != EXTENDED:
        raise InvalidRegime("squarelet checks apply to extended networks")
    n = instance.n
    g1 = max(1, int(math.floor(instance.side + 1e-9)))
    idx = np.minimum(np.floor(instance.unit_positions * g1).astype(np.int64), g1 - 1)
    unit_counts = np.bincount(idx[:, 0] * g1 + idx[:, 1], minlength=g1 * g1)

    g2 = max(1, int(math.floor(instance.side / math.sqrt(2 * math.log(n)) + 1e-9)))
    idx2 = np.minimum(np.floor(instance.unit_positions * g2).astype(np.int64), g2 - 1)
    big_counts = np.bincount(idx2[:, 0] * g2 + idx2[:, 1], minlength=g2 * g2)

    crossing = crossing_count(instance) if instance.pairing is not None else None
    return SquareletChecks(int(unit_counts.max()), bool(np.all(big_counts > 0)), crossing)


def unit_occupancy_violation_bound(n: int) -> float:
    """Chernoff/union bound on some unit squarelet holding >= log n nodes.

    Per squarelet the count has mean 1, so P(X >= k) <= e^{-1} (e/k)^k.
    """
    k = math.log(n)
    return min(1.0, n * math.exp(-1.0) * (math.e / k) ** k)


def min_pairwise_distance(instance: NetworkInstance) -> float:
    """Exact minimum Euclidean distance over all node pairs."""
    if instance.n < 2:
        raise InvalidArgument("need at least 2 nodes")
    tree = cKDTree(instance.positions)
    d, _ = tree.query(instance.positions, k=2)
    return float(d[:, 1].min())
