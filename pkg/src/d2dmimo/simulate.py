"""Drop-level Monte Carlo samplers and their analytic companions.

One "fade" is one coherence block: a fresh fading realization shared by the
training and data phases. Expectations over fading are estimated by repeated
fades on a fixed drop; position/shadowing averages by repeated drops. The
per-fade inner products are batched over the central cell's UEs, which keeps
the large-antenna cases dominated by the fading draw itself.
"""

from __future__ import annotations

import math

import numpy as np

from .analytic import cellular_se_lower_bound, mean_residual_interference
from .channel import (
    ChannelSet,
    CellularTarget,
    D2dTarget,
    LinkBudget,
    link_geometry,
    pathloss_gain,
    sample_fading,
)
from .csi import coordination_plan, make_pilots, training_rx
from .netgeom import NetworkDrop
from .pzf import PzfParams, pzf_filter, select_cancellation_targets, sinr_d2d

CSI_MODES = ("perfect", "estimated-active", "estimated-silenced")


def power_scale_factor(power_scaling: str, antennas: int) -> float:
    """Cellular transmit power multiplier for the requested scaling law."""
    if power_scaling == "none":
        return 1.0
    if power_scaling == "pc_over_m":
        return 1.0 / antennas
    if power_scaling == "pc_over_sqrt_m":
        return 1.0 / math.sqrt(antennas)
    raise ValueError(f"unknown power scaling {power_scaling!r}")


class _BsProblem:
    """Per-drop state of the central-BS detection problems (all K UEs)."""

    def __init__(self, drop: NetworkDrop, budget: LinkBudget, pc_scale: float):
        self.drop = drop
        self.k = drop.k_per_cell
        cell_dists = np.linalg.norm(drop.cellular.reshape(-1, 2), axis=1)
        self.coeff_cell = (
            budget.p_c
            * pc_scale
            * drop.shadow_cell_bs.reshape(-1)
            * pathloss_gain(cell_dists, budget.alpha_c, budget.c_c0_db)
        )
        if drop.num_d2d:
            d2d_dists = np.linalg.norm(drop.d2d_tx, axis=1)
            self.coeff_d2d = (
                budget.p_d
                * drop.shadow_d2d_bs
                * pathloss_gain(d2d_dists, budget.alpha_c, budget.c_c0_db)
            )
        else:
            d2d_dists = np.empty(0)
            self.coeff_d2d = np.empty(0)
        self.cell_dists = cell_dists
        self.d2d_dists = d2d_dists
        self.noise = budget.n0_bs

    def cancellation(self, m_c: int, m_d: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """Global ids of the canceled links for each central-cell UE."""
        out = []
        for kk in range(self.k):
            dists = self.cell_dists.copy()
            dists[kk] = np.inf  # desired UE is never an interference target
            order = np.argsort(dists, kind="stable")
            cancel_c = order[: min(m_c, len(order) - 1)]
            order_d = np.argsort(self.d2d_dists, kind="stable")
            cancel_d = order_d[: min(m_d, len(order_d))]
            out.append((cancel_c, cancel_d))
        return out

    def sinr_components(
        self,
        h_cell: np.ndarray,
        h_d2d: np.ndarray,
        filters: np.ndarray,
        canceled: list[tuple[np.ndarray, np.ndarray]] | None,
    ) -> np.ndarray:
        """(K, 4) array of signal, cellular, D2D and noise powers per UE."""
        pc = np.abs(h_cell @ filters.conj()) ** 2  # (C, K)
        tot_c = self.coeff_cell @ pc  # (K,)
        if len(self.coeff_d2d):
            pd = np.abs(h_d2d @ filters.conj()) ** 2
            tot_d = self.coeff_d2d @ pd
        else:
            pd = None
            tot_d = np.zeros(self.k)
        out = np.empty((self.k, 4))
        for kk in range(self.k):
            signal = self.coeff_cell[kk] * pc[kk, kk]
            i_cell = tot_c[kk] - signal
            i_d2d = tot_d[kk]
            if canceled is not None:
                cc, cd = canceled[kk]
                if len(cc):
                    i_cell -= float(self.coeff_cell[cc] @ pc[cc, kk])
                if len(cd) and pd is not None:
                    i_d2d -= float(self.coeff_d2d[cd] @ pd[cd, kk])
            norm2 = float(np.vdot(filters[:, kk], filters[:, kk]).real)
            out[kk] = (signal, max(i_cell, 0.0), max(i_d2d, 0.0), norm2 * self.noise)
        return out


def _draw_bs_fading(rng, drop: NetworkDrop, antennas: int):
    h_cell = sample_fading(rng, antennas, drop.layout.num_cells * drop.k_per_cell)
    h_d2d = sample_fading(rng, antennas, drop.num_d2d)
    return h_cell, h_d2d


def _perfect_filters(h_cell, h_d2d, canceled, antennas, k) -> np.ndarray:
    filters = np.empty((antennas, k), dtype=complex)
    for kk in range(k):
        cc, cd = canceled[kk]
        parts = []
        if len(cc):
            parts.append(h_cell[cc])
        if len(cd):
            parts.append(h_d2d[cd])
        null = np.vstack(parts) if parts else None
        filters[:, kk] = pzf_filter(h_cell[kk], null)
    return filters


def cellular_se_samples(
    drop: NetworkDrop,
    budget: LinkBudget,
    antennas: int,
    m_c: int,
    m_d: int,
    fades: int,
    rng: np.random.Generator,
    csi_mode: str = "perfect",
    pc_scale: float = 1.0,
) -> np.ndarray:
    """log2(1 + SINR) samples for every central-cell UE, shape (fades, K).

    With perfect CSI the PZF filter nulls the true channels of the nearest
    ``m_c`` cellular and ``m_d`` D2D interferers, whose terms are excluded
    from the interference sums exactly. With estimated CSI the filter is
    built from pilot projections of the training observation, cancellation
    is imperfect, and every interference term is kept.
    """
    if csi_mode not in CSI_MODES:
        raise ValueError(f"csi_mode must be one of {CSI_MODES}")
    params = PzfParams(cancel_cellular=m_c, cancel_d2d=m_d, antennas=antennas)
    params.check_bs_feasible(drop.layout.num_cells * drop.k_per_cell)

    prob = _BsProblem(drop, budget, pc_scale)
    k = prob.k
    out = np.empty((fades, k))

    if csi_mode == "perfect":
        canceled = prob.cancellation(m_c, m_d)
        for f in range(fades):
            h_cell, h_d2d = _draw_bs_fading(rng, drop, antennas)
            filters = _perfect_filters(h_cell, h_d2d, canceled, antennas, k)
            comp = prob.sinr_components(h_cell, h_d2d, filters, canceled)
            out[f] = np.log2(1.0 + comp[:, 0] / comp[:, 1:].sum(axis=1))
        return out

    mode = "active" if csi_mode == "estimated-active" else "silenced"
    if mode == "silenced" and m_d > 0:
        raise ValueError("cannot cancel D2D interferers when D2D is silent in training")
    if m_c > k - 1:
        raise ValueError("estimated CSI only supports intra-cell cellular cancellation")
    n_seq = k + m_d
    pilots = make_pilots(budget.t_c, n_seq)
    plan = (
        coordination_plan(drop, m_d)
        if mode == "active"
        else [np.empty(0, dtype=int) for _ in range(drop.layout.num_cells)]
    )
    n_coord0 = len(plan[0])
    own_order = {
        kk: sorted((j for j in range(k) if j != kk), key=lambda j: prob.cell_dists[j])[:m_c]
        for kk in range(k)
    }

    for f in range(fades):
        h_cell, h_d2d = _draw_bs_fading(rng, drop, antennas)
        y = training_rx(h_cell, h_d2d, drop, budget, pilots, plan, mode, rng, pc_scale)
        est = y @ pilots  # column j: estimate direction for pilot j
        filters = np.empty((antennas, k), dtype=complex)
        for kk in range(k):
            dirs = [est[:, j] for j in own_order[kk]]
            dirs.extend(est[:, k + r] for r in range(n_coord0))
            null = np.vstack(dirs) if dirs else None
            filters[:, kk] = pzf_filter(est[:, kk], null)
        comp = prob.sinr_components(h_cell, h_d2d, filters, None)
        out[f] = np.log2(1.0 + comp[:, 0] / comp[:, 1:].sum(axis=1))
    return out


def cellular_power_ratio(
    drop: NetworkDrop,
    budget: LinkBudget,
    antennas: int,
    fades: int,
    rng: np.random.Generator,
    mode: str = "active",
    pc_scale: float = 1.0,
) -> np.ndarray:
    """Fade-averaged power-ratio SINR per UE under MRC with estimated CSI.

    Averages the signal, interference and noise powers separately over fades
    before taking the ratio; this is the quantity that approaches the
    deterministic large-antenna limits as the array grows.
    """
    prob = _BsProblem(drop, budget, pc_scale)
    k = prob.k
    pilots = make_pilots(budget.t_c, k)
    plan = [np.empty(0, dtype=int) for _ in range(drop.layout.num_cells)]
    acc = np.zeros((k, 4))
    for _ in range(fades):
        h_cell, h_d2d = _draw_bs_fading(rng, drop, antennas)
        y = training_rx(h_cell, h_d2d, drop, budget, pilots, plan, mode, rng, pc_scale)
        est = y @ pilots
        filters = est / np.linalg.norm(est, axis=0, keepdims=True)
        acc += prob.sinr_components(h_cell, h_d2d, filters, None)
    return acc[:, 0] / acc[:, 1:].sum(axis=1)


def d2d_se_samples(
    drop: NetworkDrop,
    budget: LinkBudget,
    antennas: int,
    n_c: int,
    n_d: int,
    fades: int,
    rng: np.random.Generator,
    pairs: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """log2(1 + SINR) samples for D2D pairs, shape (fades, num_pairs).

    By default evaluates the pairs whose receiver lies in the central cell,
    which avoids the boundary inhomogeneity of cellular-to-D2D interference.
    """
    if pairs is None:
        pairs = drop.central_cell_pairs()
    pairs = np.asarray(pairs, dtype=int)
    if len(pairs) == 0:
        return np.empty((fades, 0)), pairs
    params = PzfParams(cancel_cellular=n_c, cancel_d2d=n_d, antennas=antennas)
    params.check_ue_feasible(drop.layout.num_cells * drop.k_per_cell)

    geoms = [link_geometry(drop, D2dTarget(int(r)), budget) for r in pairs]
    canceled = [select_cancellation_targets(g, n_c, n_d) for g in geoms]
    num_cell = drop.layout.num_cells * drop.k_per_cell

    out = np.empty((fades, len(pairs)))
    for f in range(fades):
        for j, geom in enumerate(geoms):
            g_cell = sample_fading(rng, antennas, num_cell)
            g_d2d = sample_fading(rng, antennas, drop.num_d2d)
            desired = g_d2d[pairs[j]]
            cell_vecs = g_cell[geom.cell_ids]
            d2d_vecs = g_d2d[geom.d2d_ids]
            cc, cd = canceled[j]
            parts = []
            if len(cc):
                parts.append(cell_vecs[cc])
            if len(cd):
                parts.append(d2d_vecs[cd])
            w = pzf_filter(desired, np.vstack(parts) if parts else None)
            ch = ChannelSet(geom, desired, cell_vecs, d2d_vecs)
            out[f, j] = math.log2(1.0 + sinr_d2d(ch, w, cc, cd).sinr)
    return out, pairs


def cellular_bounds(
    drop: NetworkDrop,
    budget: LinkBudget,
    antennas: int,
    m_c: int,
    m_d: int,
    density: float,
    pc_scale: float = 1.0,
) -> np.ndarray:
    """Per-UE Jensen lower bound on cellular SE for this drop.

    Uses the same cancellation sets as the simulator; the residual D2D term
    is the closed-form mean over the point process and its shadowing.
    """
    params = PzfParams(cancel_cellular=m_c, cancel_d2d=m_d, antennas=antennas)
    residual = mean_residual_interference(
        m_d, budget.alpha_c, density, budget.p_d_bs, budget.shadow_mean, budget.n0_bs
    )
    prob = _BsProblem(drop, budget, pc_scale)
    canceled = prob.cancellation(m_c, 0)
    out = np.empty(prob.k)
    for kk in range(prob.k):
        cc, _ = canceled[kk]
        snr = prob.coeff_cell / prob.noise
        interf = float(np.sum(snr)) - snr[kk] - float(np.sum(snr[cc]))
        out[kk] = cellular_se_lower_bound(snr[kk], interf, params, residual)
    return out


def d2d_bounds(
    drop: NetworkDrop,
    budget: LinkBudget,
    antennas: int,
    n_c: int,
    n_d: int,
    density: float,
    pairs: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair Jensen lower bound on D2D SE for this drop."""
    if pairs is None:
        pairs = drop.central_cell_pairs()
    pairs = np.asarray(pairs, dtype=int)
    params = PzfParams(cancel_cellular=n_c, cancel_d2d=n_d, antennas=antennas)
    residual = mean_residual_interference(
        n_d, budget.alpha_d, density, budget.p_d_ue, budget.shadow_mean, budget.n0_ue
    )
    out = np.empty(len(pairs))
    for j, r in enumerate(pairs):
        geom = link_geometry(drop, D2dTarget(int(r)), budget)
        cc, _ = select_cancellation_targets(geom, n_c, 0)
        mask = np.ones(len(geom.cell_coeffs), dtype=bool)
        mask[cc] = False
        interf_snr = float(np.sum(geom.cell_coeffs[mask])) / geom.noise_power
        snr0 = geom.desired_coeff / geom.noise_power
        out[j] = cellular_se_lower_bound(snr0, interf_snr, params, residual)
    return out, pairs
