"""Spatial layer: hexagonal multi-cell layout, UE and D2D pair placement.

Cells are flat-top hexagons on a lattice with cell 0 at the origin. D2D
transmitters form a homogeneous Poisson process over a disk large enough that
interference from beyond its edge is negligible; each receiver sits at a fixed
distance from its transmitter in a uniformly random direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import sample_shadowing
from .seeding import substream

_SQRT3 = math.sqrt(3.0)

# Stream tags within one drop seed.
_TAG_GEOM = 0
_TAG_SHADOW_BS = 1
_TAG_SHADOW_RX = 2


@dataclass(frozen=True)
class CellLayout:
    """Flat-top hexagonal cells; ``centers[0]`` is the origin."""

    centers: np.ndarray  # (num_cells, 2)
    side: float

    @property
    def num_cells(self) -> int:
        return len(self.centers)

    @property
    def cell_area(self) -> float:
        return 1.5 * _SQRT3 * self.side**2

    @property
    def circumradius(self) -> float:
        """Radius of the smallest origin-centered disk covering every cell."""
        return float(np.max(np.linalg.norm(self.centers, axis=1))) + self.side

    def contains(self, points: np.ndarray, cell: int) -> np.ndarray:
        """Vectorized point-in-hexagon test for one cell."""
        p = np.atleast_2d(points) - self.centers[cell]
        half_height = 0.5 * _SQRT3 * self.side
        inside = np.abs(p[:, 1]) <= half_height
        inside &= np.abs(0.5 * (_SQRT3 * p[:, 0] + p[:, 1])) <= half_height
        inside &= np.abs(0.5 * (_SQRT3 * p[:, 0] - p[:, 1])) <= half_height
        return inside


def build_hex_layout(num_rings: int, r_c: float) -> CellLayout:
    """Hexagonal lattice with ``1 + sum(6r)`` cells; two rings give 19."""
    if num_rings < 0:
        raise ValueError("num_rings must be non-negative")
    if r_c <= 0:
        raise ValueError("cell side length must be positive")
    coords = []
    for q in range(-num_rings, num_rings + 1):
        for s in range(-num_rings, num_rings + 1):
            if max(abs(q), abs(s), abs(q + s)) <= num_rings:
                coords.append((q, s))
    # Sort by ring then angle so cell 0 is the origin and order is stable.
    def sort_key(c):
        q, s = c
        x, y = 1.5 * q, _SQRT3 * (0.5 * q + s)
        return (max(abs(q), abs(s), abs(q + s)), math.atan2(y, x) % (2 * math.pi))

    coords.sort(key=sort_key)
    centers = np.array(
        [(1.5 * q * r_c, _SQRT3 * (0.5 * q + s) * r_c) for q, s in coords], dtype=float
    )
    return CellLayout(centers=centers, side=float(r_c))


def drop_cellular_ues(layout: CellLayout, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform UE positions per cell via rejection from the bounding box."""
    if k < 1:
        raise ValueError("at least one UE per cell required")
    out = np.empty((layout.num_cells, k, 2))
    half_height = 0.5 * _SQRT3 * layout.side
    for b in range(layout.num_cells):
        got = 0
        while got < k:
            batch = max(8, 2 * (k - got))
            cand = rng.uniform(
                [-layout.side, -half_height], [layout.side, half_height], size=(batch, 2)
            )
            cand += layout.centers[b]
            cand = cand[layout.contains(cand, b)]
            take = min(len(cand), k - got)
            out[b, got : got + take] = cand[:take]
            got += take
    return out


def drop_d2d_pairs(
    region_radius: float,
    density: float,
    distance: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """PPP transmitters in an origin-centered disk, receivers at fixed range."""
    if density < 0 or distance < 0 or region_radius <= 0:
        raise ValueError("region radius must be positive; density and distance non-negative")
    count = rng.poisson(density * math.pi * region_radius**2)
    radii = region_radius * np.sqrt(rng.uniform(size=count))
    angles = rng.uniform(0.0, 2.0 * math.pi, size=count)
    tx = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    directions = rng.uniform(0.0, 2.0 * math.pi, size=count)
    rx = tx + distance * np.column_stack([np.cos(directions), np.sin(directions)])
    return tx, rx


def partition_by_cell(points: np.ndarray, layout: CellLayout) -> list[np.ndarray]:
    """Disjoint index sets per cell plus a final out-of-coverage set.

    A point belongs to the cell of its nearest center when it lies inside
    that cell's hexagon, otherwise to the trailing set. Hexagons tile the
    lattice, so membership and nearest-center agree away from boundaries;
    argmin tie-breaking keeps boundary assignments deterministic.
    """
    points = np.atleast_2d(points)
    sets: list[np.ndarray] = []
    if len(points) == 0:
        return [np.empty(0, dtype=int) for _ in range(layout.num_cells + 1)]
    d2 = ((points[:, None, :] - layout.centers[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    assigned = np.full(len(points), layout.num_cells, dtype=int)
    for b in range(layout.num_cells):
        mask = nearest == b
        if np.any(mask):
            inside = layout.contains(points[mask], b)
            idx = np.nonzero(mask)[0]
            assigned[idx[inside]] = b
    for b in range(layout.num_cells + 1):
        sets.append(np.nonzero(assigned == b)[0])
    return sets


def nearest_interferers(ref_point: np.ndarray, candidates: np.ndarray, m: int) -> np.ndarray:
    """Indices of the ``min(m, len)`` nearest candidates, ties by index."""
    if m < 0:
        raise ValueError("m must be non-negative")
    candidates = np.atleast_2d(candidates)
    if m == 0 or len(candidates) == 0:
        return np.empty(0, dtype=int)
    dists = np.linalg.norm(candidates - np.asarray(ref_point), axis=1)
    order = np.argsort(dists, kind="stable")
    return order[: min(m, len(candidates))]


@dataclass
class NetworkDrop:
    """One realization of the spatial layer plus per-link shadowing.

    Shadowing into the central BS is stored; shadowing into individual D2D
    receivers is derived lazily from the drop seed so that drops stay cheap
    when only the cellular side is evaluated.
    """

    layout: CellLayout
    cellular: np.ndarray  # (num_cells, K, 2)
    d2d_tx: np.ndarray  # (n, 2)
    d2d_rx: np.ndarray  # (n, 2)
    d2d_distance: float
    shadow_cell_bs: np.ndarray  # (num_cells, K)
    shadow_d2d_bs: np.ndarray  # (n,)
    sigma_db: float
    seed: int
    region_radius: float
    _rx_shadow_cache: dict = field(default_factory=dict, repr=False)

    @property
    def k_per_cell(self) -> int:
        return self.cellular.shape[1]

    @property
    def num_d2d(self) -> int:
        return len(self.d2d_tx)

    def rx_shadowing(self, pair: int) -> tuple[np.ndarray, np.ndarray]:
        """Shadowing of every transmitter into receiver ``pair``.

        Returns (cellular gains shaped like ``cellular[:, :, 0]``, D2D gains
        of length ``num_d2d``). Deterministic given the drop seed.
        """
        if pair not in self._rx_shadow_cache:
            rng = substream(self.seed, _TAG_SHADOW_RX, pair)
            cell = sample_shadowing(self.sigma_db, rng, self.cellular.shape[:2])
            d2d = sample_shadowing(self.sigma_db, rng, self.num_d2d)
            self._rx_shadow_cache[pair] = (cell, d2d)
        return self._rx_shadow_cache[pair]

    def central_cell_pairs(self) -> np.ndarray:
        """Indices of D2D pairs whose receiver lies inside the central cell."""
        if self.num_d2d == 0:
            return np.empty(0, dtype=int)
        inside = self.layout.contains(self.d2d_rx, 0)
        return np.nonzero(inside)[0]


def build_drop(
    layout: CellLayout,
    k_per_cell: int,
    density: float,
    d2d_distance: float,
    sigma_db: float,
    seed: int,
    region_multiplier: float = 3.0,
) -> NetworkDrop:
    """Generate a full network drop from a single integer seed.

    The PPP region is a disk of ``region_multiplier`` times the layout
    circumradius; beyond that the shot-noise tail contributes a negligible
    fraction of the mean interference for the exponents used here.
    """
    geom_rng = substream(seed, _TAG_GEOM)
    cellular = drop_cellular_ues(layout, k_per_cell, geom_rng)
    region_radius = region_multiplier * layout.circumradius
    d2d_tx, d2d_rx = drop_d2d_pairs(region_radius, density, d2d_distance, geom_rng)

    shadow_rng = substream(seed, _TAG_SHADOW_BS)
    shadow_cell = sample_shadowing(sigma_db, shadow_rng, cellular.shape[:2])
    shadow_d2d = sample_shadowing(sigma_db, shadow_rng, len(d2d_tx))

    return NetworkDrop(
        layout=layout,
        cellular=cellular,
        d2d_tx=d2d_tx,
        d2d_rx=d2d_rx,
        d2d_distance=float(d2d_distance),
        shadow_cell_bs=shadow_cell,
        shadow_d2d_bs=shadow_d2d,
        sigma_db=float(sigma_db),
        seed=int(seed),
        region_radius=float(region_radius),
    )
