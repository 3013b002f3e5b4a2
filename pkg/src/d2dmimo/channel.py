"""Link-budget arithmetic: pathloss, shadowing, fading and received powers.

All powers are linear (mW). Pathloss references are given in dB at 1 m and
folded into the linear gain, so a link's received power is always
``P * shadow * pathloss_gain(dist, alpha, c0_db)``. Links into a base station
use (alpha_c, c_c0_db) and the BS noise power; links into a UE receiver use
(alpha_d, c_d0_db) and the UE noise power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .netgeom import NetworkDrop

_LN10_OVER_10 = math.log(10.0) / 10.0


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_mw(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0)


@dataclass(frozen=True)
class LinkBudget:
    """Transmit powers, pathloss model and noise for both receiver roles.

    Attributes
    ----------
    p_c, p_d : float
        Cellular / D2D transmit powers, linear mW.
    alpha_c, alpha_d : float
        Pathloss exponents for UE->BS and UE->UE links. Both must exceed 2,
        otherwise aggregate interference moments diverge.
    c_c0_db, c_d0_db : float
        Pathloss reference offsets (dB at 1 m) for UE->BS and UE->UE links.
    n0_bs, n0_ue : float
        Noise power over the channel bandwidth, including the receiver noise
        figure, linear mW, per receiver role.
    sigma_db : float
        Lognormal shadowing standard deviation in dB.
    t_c : int
        Training length in symbols.
    """

    p_c: float
    p_d: float
    alpha_c: float = 3.76
    alpha_d: float = 4.37
    c_c0_db: float = 15.3
    c_d0_db: float = 38.5
    n0_bs: float = dbm_to_mw(-98.0)
    n0_ue: float = dbm_to_mw(-95.0)
    sigma_db: float = 7.0
    t_c: int = 8

    def __post_init__(self) -> None:
        if self.p_c <= 0 or self.p_d <= 0:
            raise ValueError("transmit powers must be strictly positive")
        if self.alpha_c <= 2 or self.alpha_d <= 2:
            raise ValueError("pathloss exponents must exceed 2")
        if self.n0_bs < 0 or self.n0_ue < 0:
            raise ValueError("noise powers must be non-negative")
        if self.sigma_db < 0:
            raise ValueError("shadowing deviation must be non-negative")
        if self.t_c < 1:
            raise ValueError("training length must be at least 1 symbol")

    # Effective powers with the pathloss reference folded in, for closed-form
    # expressions where the pathloss is written as a bare dist**-alpha.
    @property
    def p_c_bs(self) -> float:
        return self.p_c * db_to_linear(-self.c_c0_db)

    @property
    def p_d_bs(self) -> float:
        return self.p_d * db_to_linear(-self.c_c0_db)

    @property
    def p_c_ue(self) -> float:
        return self.p_c * db_to_linear(-self.c_d0_db)

    @property
    def p_d_ue(self) -> float:
        return self.p_d * db_to_linear(-self.c_d0_db)

    @property
    def shadow_mean(self) -> float:
        return lognormal_moment(self.sigma_db)


def default_budget(**overrides) -> LinkBudget:
    """Urban-macro defaults: 2 GHz, 10 MHz bandwidth, 23/13 dBm tx powers."""
    params = dict(p_c=dbm_to_mw(23.0), p_d=dbm_to_mw(13.0))
    params.update(overrides)
    return LinkBudget(**params)


def pathloss_gain(dist, alpha: float, c0_db: float):
    """Linear pathloss gain ``10**(-c0/10) * dist**-alpha``; dist in meters."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise ValueError("pathloss is singular at zero distance")
    return db_to_linear(-c0_db) * dist ** (-alpha)


def lognormal_moment(sigma_db: float, power: float = 1.0) -> float:
    """E[Xi**power] for lognormal shadowing Xi = 10**(N(0, sigma_db^2)/10)."""
    return math.exp((power * sigma_db * _LN10_OVER_10) ** 2 / 2.0)


def sample_shadowing(sigma_db: float, rng: np.random.Generator, size=None):
    """Linear shadowing gains, lognormal with the given dB deviation."""
    if sigma_db < 0:
        raise ValueError("shadowing deviation must be non-negative")
    return 10.0 ** (rng.normal(0.0, sigma_db, size) / 10.0)


def sample_fading(rng: np.random.Generator, dim: int, count: int | None = None):
    """i.i.d. CN(0, 1) fading vectors, shape (dim,) or (count, dim)."""
    if dim < 1:
        raise ValueError("fading dimension must be at least 1")
    shape = (dim, 2) if count is None else (count, dim, 2)
    z = rng.standard_normal(shape)
    z *= math.sqrt(0.5)
    return z.view(np.complex128)[..., 0]


def snr_linear(p: float, shadow, dist, alpha: float, c0_db: float, n0: float):
    """Received SNR of a single link: P * Xi * pathloss / N0."""
    return p * shadow * pathloss_gain(dist, alpha, c0_db) / n0


@dataclass(frozen=True)
class CellularTarget:
    """Detection of cellular UE ``ue`` of the central cell at the central BS."""

    ue: int


@dataclass(frozen=True)
class D2dTarget:
    """Detection of D2D pair ``pair`` at its own receiver."""

    pair: int


@dataclass
class LinkGeometry:
    """Large-scale state of one detection problem (fixed within a drop).

    Interferer arrays are aligned: entry j of coeffs/dists/ids describes the
    same transmitter. ``cell_ids`` are flattened (cell*K + ue) indices,
    ``d2d_ids`` index into the drop's D2D transmitter list.
    """

    desired_coeff: float
    desired_dist: float
    cell_coeffs: np.ndarray
    cell_dists: np.ndarray
    cell_ids: np.ndarray
    d2d_coeffs: np.ndarray
    d2d_dists: np.ndarray
    d2d_ids: np.ndarray
    noise_power: float


@dataclass
class ChannelSet:
    """One fading realization on top of a LinkGeometry.

    ``desired`` has unit-variance CN entries; the received power of a link is
    its coefficient times |w* h|^2 for the matched filter output.
    """

    geometry: LinkGeometry
    desired: np.ndarray
    cell_vecs: np.ndarray
    d2d_vecs: np.ndarray

    @property
    def noise_power(self) -> float:
        return self.geometry.noise_power

    @property
    def dim(self) -> int:
        return self.desired.shape[0]


def link_geometry(drop: "NetworkDrop", target, budget: LinkBudget) -> LinkGeometry:
    """Coefficients and distances of every link of one detection problem."""
    num_cells, k_per_cell, _ = drop.cellular.shape
    cell_flat = drop.cellular.reshape(-1, 2)

    if isinstance(target, CellularTarget):
        if not 0 <= target.ue < k_per_cell:
            raise ValueError("cellular target UE index out of range")
        rx = np.zeros(2)
        alpha, c0, n0 = budget.alpha_c, budget.c_c0_db, budget.n0_bs
        desired_id = target.ue  # cell 0 occupies the first K flattened slots
        shadow_cell = drop.shadow_cell_bs.reshape(-1)
        shadow_d2d = drop.shadow_d2d_bs
        d2d_ids = np.arange(len(drop.d2d_tx))
    elif isinstance(target, D2dTarget):
        if not 0 <= target.pair < len(drop.d2d_tx):
            raise ValueError("d2d target pair index out of range")
        rx = drop.d2d_rx[target.pair]
        alpha, c0, n0 = budget.alpha_d, budget.c_d0_db, budget.n0_ue
        shadow_cell, shadow_d2d_full = drop.rx_shadowing(target.pair)
        shadow_cell = shadow_cell.reshape(-1)
        desired_id = target.pair
        shadow_d2d = shadow_d2d_full
        d2d_ids = np.arange(len(drop.d2d_tx))
    else:
        raise TypeError(f"unsupported detection target: {target!r}")

    cell_dists = np.linalg.norm(cell_flat - rx, axis=1)
    d2d_dists = np.linalg.norm(drop.d2d_tx - rx, axis=1)

    if isinstance(target, CellularTarget):
        desired_dist = cell_dists[desired_id]
        desired_shadow = shadow_cell[desired_id]
        desired_coeff = budget.p_c * desired_shadow * pathloss_gain(desired_dist, alpha, c0)
        keep = np.ones(len(cell_flat), dtype=bool)
        keep[desired_id] = False
        cell_ids = np.nonzero(keep)[0]
        d2d_keep = np.ones(len(d2d_ids), dtype=bool)
    else:
        desired_dist = float(np.linalg.norm(drop.d2d_tx[desired_id] - rx))
        desired_shadow = shadow_d2d[desired_id]
        desired_coeff = budget.p_d * desired_shadow * pathloss_gain(desired_dist, alpha, c0)
        cell_ids = np.arange(len(cell_flat))
        d2d_keep = np.ones(len(d2d_ids), dtype=bool)
        d2d_keep[desired_id] = False

    d2d_ids = d2d_ids[d2d_keep]
    cell_coeffs = budget.p_c * shadow_cell[cell_ids] * pathloss_gain(cell_dists[cell_ids], alpha, c0)
    d2d_coeffs = budget.p_d * shadow_d2d[d2d_ids] * pathloss_gain(d2d_dists[d2d_ids], alpha, c0)

    return LinkGeometry(
        desired_coeff=float(desired_coeff),
        desired_dist=float(desired_dist),
        cell_coeffs=np.asarray(cell_coeffs, dtype=float),
        cell_dists=cell_dists[cell_ids],
        cell_ids=cell_ids,
        d2d_coeffs=np.asarray(d2d_coeffs, dtype=float),
        d2d_dists=d2d_dists[d2d_ids],
        d2d_ids=d2d_ids,
        noise_power=n0,
    )


def assemble_channel_set(
    drop: "NetworkDrop",
    target,
    budget: LinkBudget,
    dim: int,
    rng: np.random.Generator,
) -> ChannelSet:
    """Draw one full fading realization for a detection problem."""
    geom = link_geometry(drop, target, budget)
    desired = sample_fading(rng, dim)
    cell_vecs = sample_fading(rng, dim, len(geom.cell_ids))
    d2d_vecs = sample_fading(rng, dim, len(geom.d2d_ids))
    return ChannelSet(geometry=geom, desired=desired, cell_vecs=cell_vecs, d2d_vecs=d2d_vecs)
