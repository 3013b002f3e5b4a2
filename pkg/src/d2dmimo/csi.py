"""Pilot-based channel estimation and the interference floors it leaves.

During training, the K cellular UEs of every cell plus each cell's nearest
coordinated D2D transmitters send orthogonal pilots (reused across cells, at
cellular power); the remaining D2D transmitters either send independent data
symbols ("active" mode) or stay silent ("silenced" mode). Estimation is
linear MMSE on the pilot-projected receive matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LinkBudget, pathloss_gain, sample_shadowing
from .netgeom import CellLayout, NetworkDrop, nearest_interferers, partition_by_cell

TRAINING_MODES = ("active", "silenced")


class InfeasibleTrainingError(ValueError):
    """Training length too short for the requested number of sequences."""


def make_pilots(t_c: int, n_seq: int) -> np.ndarray:
    """Orthonormal pilot matrix, shape (t_c, n_seq), from a DFT basis.

    Columns satisfy Q* Q = I. Any orthonormal family is statistically
    equivalent here; the DFT choice is fixed for reproducibility.
    """
    if t_c < n_seq:
        raise InfeasibleTrainingError(
            f"training length {t_c} cannot carry {n_seq} orthogonal sequences"
        )
    if n_seq < 1:
        raise ValueError("at least one pilot sequence required")
    n = np.arange(t_c)
    q = np.exp(-2j * math.pi * np.outer(n, n[:n_seq]) / t_c) / math.sqrt(t_c)
    return q


def coordination_plan(drop: NetworkDrop, m_d: int) -> list[np.ndarray]:
    """Per-cell D2D transmitters coordinated during training.

    Cell b coordinates the ``min(m_d, |Phi_b|)`` D2D transmitters inside its
    own coverage that are nearest to its own BS; rank i uses pilot column
    K + i. Returns global D2D indices per cell, rank-ordered. Out-of-coverage
    transmitters are never coordinated.
    """
    cell_sets = partition_by_cell(drop.d2d_tx, drop.layout)
    plan: list[np.ndarray] = []
    for b in range(drop.layout.num_cells):
        members = cell_sets[b]
        if m_d == 0 or len(members) == 0:
            plan.append(np.empty(0, dtype=int))
            continue
        order = nearest_interferers(drop.layout.centers[b], drop.d2d_tx[members], m_d)
        plan.append(members[order])
    return plan


def uncoordinated_d2d(drop: NetworkDrop, plan: list[np.ndarray]) -> np.ndarray:
    """Global indices of D2D transmitters not coordinated by any cell."""
    mask = np.ones(drop.num_d2d, dtype=bool)
    for members in plan:
        mask[members] = False
    return np.nonzero(mask)[0]


def training_rx(
    h_cell: np.ndarray,
    h_d2d: np.ndarray,
    drop: NetworkDrop,
    budget: LinkBudget,
    pilots: np.ndarray,
    plan: list[np.ndarray],
    mode: str,
    rng: np.random.Generator,
    pc_scale: float = 1.0,
) -> np.ndarray:
    """Baseband receive matrix (M x T_c) at the central BS during training.

    ``h_cell`` (num_cells*K, M) and ``h_d2d`` (n, M) are the fading vectors of
    the current coherence block; they are shared with the data phase, which is
    what couples training-phase D2D activity to data-phase interference.
    Coordinated D2D transmitters send pilots at the (scaled) cellular power.
    """
    if mode not in TRAINING_MODES:
        raise ValueError(f"training mode must be one of {TRAINING_MODES}")
    t_c, n_seq = pilots.shape
    k = drop.k_per_cell
    num_cells = drop.layout.num_cells
    m = h_cell.shape[1]
    p_c = budget.p_c * pc_scale

    cell_dists = np.linalg.norm(drop.cellular.reshape(-1, 2), axis=1)
    gain_cell = drop.shadow_cell_bs.reshape(-1) * pathloss_gain(
        cell_dists, budget.alpha_c, budget.c_c0_db
    )
    amp_cell = np.sqrt(t_c * p_c * gain_cell)

    # Cellular pilots: UE k of every cell reuses column k.
    y = np.zeros((m, t_c), dtype=complex)
    weighted = amp_cell[:, None] * h_cell
    for kk in range(k):
        rows = weighted[kk::k]
        y += rows.sum(axis=0)[:, None] * pilots[:, kk].conj()[None, :]

    if drop.num_d2d:
        d2d_dists = np.linalg.norm(drop.d2d_tx, axis=1)
        gain_d2d = drop.shadow_d2d_bs * pathloss_gain(d2d_dists, budget.alpha_c, budget.c_c0_db)

    if mode == "active":
        for members in plan:
            for rank, idx in enumerate(members):
                if k + rank >= n_seq:
                    raise InfeasibleTrainingError(
                        "pilot book too small for the coordinated D2D ranks"
                    )
                amp = math.sqrt(t_c * p_c * gain_d2d[idx])
                y += amp * np.outer(h_d2d[idx], pilots[:, k + rank].conj())
        uncoord = uncoordinated_d2d(drop, plan)
        if len(uncoord):
            amp_u = np.sqrt(budget.p_d * gain_d2d[uncoord])
            symbols = rng.standard_normal((2, len(uncoord), t_c))
            u = (symbols[0] + 1j * symbols[1]) * math.sqrt(0.5)
            y += (amp_u[:, None] * h_d2d[uncoord]).T @ u.conj()

    noise = rng.standard_normal((2, m, t_c))
    y += (noise[0] + 1j * noise[1]) * math.sqrt(0.5 * budget.n0_bs)
    return y


@dataclass(frozen=True)
class MmseEstimate:
    """Linear MMSE channel estimate and its quality scalar.

    ``xi`` is the fraction of the unit channel variance captured by the
    estimate; the per-entry error variance is 1 - xi.
    """

    h_hat: np.ndarray
    xi: float

    @property
    def error_variance(self) -> float:
        return 1.0 - self.xi


def estimation_quality(
    own_gain: float,
    beta_sum: float,
    d2d_interference_sum: float,
    n0: float,
    t_c: int,
    p_c: float,
) -> float:
    """Quality scalar of the pilot-projected observation.

    ``own_gain`` is the desired link's shadowing times pathloss gain,
    ``beta_sum`` the summed large-scale ratios of same-pilot transmitters in
    other cells, ``d2d_interference_sum`` the total received power of D2D
    transmitters sending data during training.
    """
    if own_gain <= 0:
        raise ValueError("own-link large-scale gain must be positive")
    return 1.0 / (1.0 + beta_sum + (d2d_interference_sum + n0) / (t_c * p_c * own_gain))


def mmse_estimate(
    y: np.ndarray,
    pilot: np.ndarray,
    own_gain: float,
    beta_sum: float,
    d2d_interference_sum: float,
    n0: float,
    t_c: int,
    p_c: float,
) -> MmseEstimate:
    """LMMSE estimate of the desired channel from the training matrix."""
    xi = estimation_quality(own_gain, beta_sum, d2d_interference_sum, n0, t_c, p_c)
    y_proj = y @ pilot / math.sqrt(t_c * p_c * own_gain)
    return MmseEstimate(h_hat=xi * y_proj, xi=xi)


def estimation_stats(
    drop: NetworkDrop,
    budget: LinkBudget,
    ue: int,
    plan: list[np.ndarray] | None = None,
    mode: str = "active",
    pc_scale: float = 1.0,
) -> tuple[float, float, float]:
    """(own_gain, beta_sum, d2d_sum) for estimating central-cell UE ``ue``."""
    k = drop.k_per_cell
    gains = drop.shadow_cell_bs * pathloss_gain(
        np.linalg.norm(drop.cellular, axis=2), budget.alpha_c, budget.c_c0_db
    )
    own = float(gains[0, ue])
    beta_sum = float(np.sum(gains[1:, ue]) / own)
    if mode == "silenced" or drop.num_d2d == 0:
        d2d_sum = 0.0
    else:
        if plan is None:
            plan = []
        idx = uncoordinated_d2d(drop, plan)
        d2d_dists = np.linalg.norm(drop.d2d_tx[idx], axis=1)
        d2d_sum = float(
            np.sum(
                budget.p_d
                * drop.shadow_d2d_bs[idx]
                * pathloss_gain(d2d_dists, budget.alpha_c, budget.c_c0_db)
            )
        )
    return own, beta_sum, d2d_sum


def contamination_power_terms(
    drop: NetworkDrop, budget: LinkBudget
) -> tuple[np.ndarray, np.ndarray, float]:
    """Large-antenna interference-floor powers for MRC with estimated CSI.

    Returns per-UE desired terms, per-UE pilot-contamination terms and the
    shared D2D contamination term, all deterministic given the drop. Their
    ratio is the large-antenna SINR limit when no interferer is canceled.
    """
    gains = drop.shadow_cell_bs * pathloss_gain(
        np.linalg.norm(drop.cellular, axis=2), budget.alpha_c, budget.c_c0_db
    )
    sq = (budget.p_c * gains) ** 2
    s_hat = budget.t_c * sq[0]
    i_cc = budget.t_c * np.sum(sq[1:], axis=0)
    if drop.num_d2d:
        d2d_gain = drop.shadow_d2d_bs * pathloss_gain(
            np.linalg.norm(drop.d2d_tx, axis=1), budget.alpha_c, budget.c_c0_db
        )
        i_dc = float(np.sum((budget.p_d * d2d_gain) ** 2))
    else:
        i_dc = 0.0
    return s_hat, i_cc, i_dc


def silenced_training_limit_sinr(drop: NetworkDrop, budget: LinkBudget) -> np.ndarray:
    """Per-UE large-antenna SINR with D2D silent in training and scaled power.

    This is the limit approached when the cellular transmit power shrinks
    like 1/sqrt(M): squared-SNR pilot contamination plus first-order D2D
    interference plus unit noise. Uses ``budget.t_c``.
    """
    t_c = budget.t_c
    gains = drop.shadow_cell_bs * pathloss_gain(
        np.linalg.norm(drop.cellular, axis=2), budget.alpha_c, budget.c_c0_db
    )
    snr = budget.p_c * gains / budget.n0_bs
    num = t_c * snr[0] ** 2
    denom = t_c * np.sum(snr[1:] ** 2, axis=0) + 1.0
    if drop.num_d2d:
        d2d_gain = drop.shadow_d2d_bs * pathloss_gain(
            np.linalg.norm(drop.d2d_tx, axis=1), budget.alpha_c, budget.c_c0_db
        )
        denom = denom + np.sum(budget.p_d * d2d_gain / budget.n0_bs)
    return num / denom


def sample_contamination_terms(
    layout: CellLayout,
    budget: LinkBudget,
    n: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo samples of the desired and pilot-contamination floors.

    Draws ``n`` independent placements of one pilot-sharing UE per cell
    (uniform in its hexagon, independent shadowing into the central BS) and
    returns the corresponding desired-power and contamination-power samples.
    Cheap compared to full drops: no D2D process and no fading are needed.
    """
    s = np.empty(n)
    i_cc = np.empty(n)
    block = max(1, min(n, 4096))
    done = 0
    while done < n:
        take = min(block, n - done)
        batch_s = np.empty(take)
        batch_i = np.zeros(take)
        for b in range(layout.num_cells):
            pts = _uniform_hex(layout, b, take, rng)
            shadow = sample_shadowing(budget.sigma_db, rng, take)
            gain = shadow * pathloss_gain(
                np.linalg.norm(pts, axis=1), budget.alpha_c, budget.c_c0_db
            )
            term = budget.t_c * (budget.p_c * gain) ** 2
            if b == 0:
                batch_s[:] = term
            else:
                batch_i += term
        s[done : done + take] = batch_s
        i_cc[done : done + take] = batch_i
        done += take
    return s, i_cc


def _uniform_hex(layout: CellLayout, cell: int, n: int, rng: np.random.Generator) -> np.ndarray:
    half_height = 0.5 * math.sqrt(3.0) * layout.side
    out = np.empty((n, 2))
    got = 0
    while got < n:
        batch = max(16, 2 * (n - got))
        cand = rng.uniform([-layout.side, -half_height], [layout.side, half_height], (batch, 2))
        cand += layout.centers[cell]
        cand = cand[layout.contains(cand, cell)]
        take = min(len(cand), n - got)
        out[got : got + take] = cand[:take]
        got += take
    return out


def sample_d2d_contamination(
    density: float,
    region_radius: float,
    budget: LinkBudget,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo samples of the D2D contamination floor over PPP drops."""
    if density == 0:
        return np.zeros(n)
    mean_count = density * math.pi * region_radius**2
    counts = rng.poisson(mean_count, size=n)
    out = np.empty(n)
    p_eff = budget.p_d_bs
    for i, c in enumerate(counts):
        if c == 0:
            out[i] = 0.0
            continue
        r = region_radius * np.sqrt(rng.uniform(size=c))
        shadow = sample_shadowing(budget.sigma_db, rng, c)
        out[i] = float(np.sum((p_eff * shadow * r ** (-budget.alpha_c)) ** 2))
    return out
