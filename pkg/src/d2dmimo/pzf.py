"""Partial zero-forcing receivers and post-processing SINR evaluation.

A PZF filter is the projection of the desired channel vector onto the
orthogonal complement of the span of the canceled interferers' channels,
normalized to unit norm. With zero canceled vectors this reduces to maximum
ratio combining; with dim-1 canceled vectors it is full zero forcing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, LinkGeometry

ORTHOGONALITY_TOL = 1e-10


class InfeasiblePzfError(ValueError):
    """Requested cancellation exceeds the available degrees of freedom."""


class NumericalRankError(ValueError):
    """Canceled set is numerically rank deficient."""


@dataclass(frozen=True)
class PzfParams:
    """Degrees-of-freedom split: how many interferers of each kind to cancel."""

    cancel_cellular: int
    cancel_d2d: int
    antennas: int

    def __post_init__(self) -> None:
        if self.cancel_cellular < 0 or self.cancel_d2d < 0:
            raise ValueError("cancellation counts must be non-negative")
        if self.antennas < 1:
            raise ValueError("at least one antenna required")

    def check_bs_feasible(self, total_cellular_ues: int) -> None:
        if self.cancel_cellular > total_cellular_ues - 1:
            raise InfeasiblePzfError(
                f"cannot cancel {self.cancel_cellular} cellular interferers with "
                f"{total_cellular_ues} cellular UEs in the network"
            )
        if self.cancel_cellular + self.cancel_d2d > self.antennas - 1:
            raise InfeasiblePzfError(
                f"cancellation order {self.cancel_cellular}+{self.cancel_d2d} exceeds "
                f"M-1 = {self.antennas - 1}"
            )

    def check_ue_feasible(self, total_cellular_ues: int) -> None:
        if self.cancel_cellular > total_cellular_ues:
            raise InfeasiblePzfError(
                f"cannot cancel {self.cancel_cellular} cellular interferers with "
                f"{total_cellular_ues} cellular UEs in the network"
            )
        if self.cancel_cellular + self.cancel_d2d > self.antennas - 1:
            raise InfeasiblePzfError(
                f"cancellation order {self.cancel_cellular}+{self.cancel_d2d} exceeds "
                f"N-1 = {self.antennas - 1}"
            )


def pzf_filter(desired: np.ndarray, canceled: np.ndarray | None = None) -> np.ndarray:
    """Unit-norm filter orthogonal to every canceled vector.

    Parameters
    ----------
    desired : complex vector
    canceled : (m, dim) array of channel vectors to null, or None/empty.

    Uses a Householder QR of the canceled set for numerically stable
    orthogonalization at large antenna counts, then projects the desired
    vector onto the orthogonal complement and normalizes.
    """
    desired = np.asarray(desired)
    dim = desired.shape[0]
    if canceled is None or len(canceled) == 0:
        norm = np.linalg.norm(desired)
        if norm == 0:
            raise NumericalRankError("desired vector is zero")
        return desired / norm

    canceled = np.atleast_2d(np.asarray(canceled))
    m = canceled.shape[0]
    if m >= dim:
        raise InfeasiblePzfError(f"cannot null {m} vectors in dimension {dim}")

    q, r = np.linalg.qr(canceled.conj().T.astype(complex), mode="reduced")
    diag = np.abs(np.diagonal(r))
    if np.min(diag) <= max(dim, m) * np.finfo(float).eps * np.max(diag):
        raise NumericalRankError("canceled vectors are numerically rank deficient")

    w = desired - q @ (q.conj().T @ desired)
    norm = np.linalg.norm(w)
    if norm <= ORTHOGONALITY_TOL * np.linalg.norm(desired):
        raise NumericalRankError("desired vector lies in the canceled span")
    return w / norm


def select_cancellation_targets(
    geom: LinkGeometry, cancel_cellular: int, cancel_d2d: int
) -> tuple[np.ndarray, np.ndarray]:
    """Positions (into the geometry's interferer arrays) of the links to null.

    Picks the nearest interferers by distance to the receiver, ties broken by
    array index. Requests beyond the number of available candidates cancel
    everything available.
    """
    if cancel_cellular < 0 or cancel_d2d < 0:
        raise ValueError("cancellation counts must be non-negative")
    order_c = np.argsort(geom.cell_dists, kind="stable")
    order_d = np.argsort(geom.d2d_dists, kind="stable")
    return (
        order_c[: min(cancel_cellular, len(order_c))],
        order_d[: min(cancel_d2d, len(order_d))],
    )


@dataclass(frozen=True)
class SinrBreakdown:
    """Post-processing powers of one detection: signal, interference, noise."""

    signal: float
    cellular_interf: float
    d2d_interf: float
    noise: float

    @property
    def sinr(self) -> float:
        return self.signal / (self.cellular_interf + self.d2d_interf + self.noise)


def _sinr(
    channels: ChannelSet,
    w: np.ndarray,
    canceled_cell,
    canceled_d2d,
    exclude_canceled: bool,
) -> SinrBreakdown:
    geom = channels.geometry
    signal = geom.desired_coeff * abs(np.vdot(w, channels.desired)) ** 2

    cell_p = np.abs(channels.cell_vecs @ w.conj()) ** 2 if len(channels.cell_vecs) else np.empty(0)
    d2d_p = np.abs(channels.d2d_vecs @ w.conj()) ** 2 if len(channels.d2d_vecs) else np.empty(0)

    mask_c = np.ones(len(cell_p), dtype=bool)
    mask_d = np.ones(len(d2d_p), dtype=bool)
    if exclude_canceled:
        # Nulled terms are ~0 anyway; dropping them keeps invariants exact.
        mask_c[np.asarray(canceled_cell, dtype=int)] = False
        mask_d[np.asarray(canceled_d2d, dtype=int)] = False

    cellular = float(np.sum(geom.cell_coeffs[mask_c] * cell_p[mask_c])) if len(cell_p) else 0.0
    d2d = float(np.sum(geom.d2d_coeffs[mask_d] * d2d_p[mask_d])) if len(d2d_p) else 0.0
    noise = float(np.vdot(w, w).real) * geom.noise_power
    return SinrBreakdown(signal=float(signal), cellular_interf=cellular, d2d_interf=d2d, noise=noise)


def sinr_cellular(
    channels: ChannelSet,
    w: np.ndarray,
    canceled_cell=(),
    canceled_d2d=(),
    exclude_canceled: bool = True,
) -> SinrBreakdown:
    """SINR of a cellular uplink detection with filter ``w`` at the BS."""
    return _sinr(channels, w, canceled_cell, canceled_d2d, exclude_canceled)


def sinr_d2d(
    channels: ChannelSet,
    w: np.ndarray,
    canceled_cell=(),
    canceled_d2d=(),
    exclude_canceled: bool = True,
) -> SinrBreakdown:
    """SINR of a D2D detection at its receiver; same algebra as the BS side,
    the receiver role (exponent, reference, noise figure) lives in the
    channel set's geometry."""
    return _sinr(channels, w, canceled_cell, canceled_d2d, exclude_canceled)


@dataclass(frozen=True)
class SeEstimate:
    """Spectral efficiency estimate with a normal-approximation CI."""

    se: float
    stderr: float
    ci_halfwidth: float
    samples: int


def spectral_efficiency(sinr_samples) -> SeEstimate:
    """Mean log2(1 + SINR) over samples with a 95% confidence half-width."""
    samples = np.asarray(sinr_samples, dtype=float)
    if samples.size == 0:
        raise ValueError("at least one SINR sample required")
    se_samples = np.log2(1.0 + samples)
    mean = float(np.mean(se_samples))
    if samples.size > 1:
        stderr = float(np.std(se_samples, ddof=1) / math.sqrt(samples.size))
    else:
        stderr = 0.0
    return SeEstimate(se=mean, stderr=stderr, ci_halfwidth=1.96 * stderr, samples=samples.size)
