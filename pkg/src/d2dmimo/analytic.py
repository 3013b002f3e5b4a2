"""Closed-form spectral-efficiency evaluators and their numerical companions.

Transmit powers passed to these functions must already include the pathloss
reference offset (see LinkBudget.p_c_bs and friends), so that pathloss enters
every formula as a bare dist**-alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .channel import sample_shadowing
from .pzf import PzfParams

LOG2E = 1.0 / math.log(2.0)


class InfeasibleBoundError(ValueError):
    """Bound preconditions violated (antenna budget or divergent residual)."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def mean_residual_interference(
    num_canceled: int,
    alpha: float,
    density: float,
    tx_power: float,
    shadow_mean: float,
    noise_power: float,
) -> float:
    """Noise-normalized mean interference left after nulling the nearest points.

    For a plane PPP of interferers with pathloss exponent ``alpha``, canceling
    the ``num_canceled`` nearest leaves a mean aggregate interference of

        2 (pi density)^(alpha/2) P Xi_bar Gamma(m + 1 - alpha/2)
        -----------------------------------------------------------
                 (alpha - 2) N0 Gamma(m)

    which is finite only when m + 1 > alpha / 2 with m >= 1; otherwise the
    mean diverges and +inf is returned (the corresponding bounds go vacuous).
    """
    if alpha <= 2:
        raise ValueError("pathloss exponent must exceed 2")
    if num_canceled < 0:
        raise ValueError("cancellation count must be non-negative")
    if density < 0:
        raise ValueError("density must be non-negative")
    if density == 0:
        return 0.0
    m = num_canceled
    if m < 1 or m + 1 <= alpha / 2:
        return math.inf
    log_ratio = gammaln(m + 1 - alpha / 2) - gammaln(m)
    return (
        2.0
        * (math.pi * density) ** (alpha / 2)
        * tx_power
        * shadow_mean
        * math.exp(log_ratio)
        / ((alpha - 2.0) * noise_power)
    )


def cellular_se_lower_bound(
    snr_desired: float,
    interferer_snr_sum: float,
    pzf: PzfParams,
    residual: float,
) -> float:
    """Jensen lower bound on cellular SE, conditioned on positions/shadowing.

    ``interferer_snr_sum`` sums the SNRs of the uncanceled cellular
    interferers; ``residual`` is the mean residual D2D interference from
    :func:`mean_residual_interference`.
    """
    m_free = pzf.antennas - pzf.cancel_cellular - pzf.cancel_d2d - 1
    if m_free < 0:
        raise InfeasibleBoundError(
            f"bound needs antennas >= cancellations + 1, got {pzf.antennas} antennas"
        )
    if not math.isfinite(residual):
        raise InfeasibleBoundError(
            "mean residual D2D interference diverges; cancel more D2D interferers"
        )
    return math.log2(1.0 + m_free * snr_desired / (interferer_snr_sum + residual + 1.0))


def d2d_se_lower_bound(
    snr_desired: float,
    cellular_interferer_snr_sum: float,
    pzf: PzfParams,
    residual: float,
) -> float:
    """Jensen lower bound on D2D SE; mirror of the cellular bound with the
    UE-side antenna count, exponent and noise baked into the inputs."""
    return cellular_se_lower_bound(snr_desired, cellular_interferer_snr_sum, pzf, residual)


def asymptotic_se_bound(snr_desired: float, residual: float) -> float:
    """Large-antenna SE bound under 1/M power scaling: log2(1 + SNR/(rho+1)).

    A divergent residual makes the bound vacuous (0), matching the regime
    where too few D2D interferers are canceled.
    """
    if not math.isfinite(residual):
        return 0.0
    return math.log2(1.0 + snr_desired / (residual + 1.0))


class GammaRatio(NamedTuple):
    exact: float
    asymptote: float
    rel_gap: float


def stirling_gamma_ratio(m: int, alpha: float) -> GammaRatio:
    """Gamma(m+1-alpha/2)/Gamma(m), exactly and via its large-m power law.

    The asymptote (m - alpha/2)^(1 - alpha/2) drives the vanishing of the
    residual interference when the cancellation order grows without bound.
    """
    if m < 1 or m + 1 <= alpha / 2:
        raise ValueError("requires m >= 1 and m + 1 > alpha/2")
    exact = math.exp(gammaln(m + 1 - alpha / 2) - gammaln(m))
    base = m - alpha / 2
    asymptote = base ** (1.0 - alpha / 2) if base > 0 else math.inf
    rel_gap = abs(exact - asymptote) / exact
    return GammaRatio(exact=exact, asymptote=asymptote, rel_gap=rel_gap)


def scaled_power_se_limit_mc(
    snr_desired: float,
    num_canceled: int,
    alpha: float,
    density: float,
    tx_power: float,
    sigma_db: float,
    noise_power: float,
    rng: np.random.Generator,
    drops: int = 20000,
    rel_truncation: float = 1e-3,
) -> float:
    """Monte Carlo of the large-antenna SE limit with scaled cellular power.

    Averages log2(1 + SNR / (residual-interference + 1)) over PPP drops with
    lognormal shadowing and unit-mean exponential fading marks, canceling the
    ``num_canceled`` nearest interferers. The PPP is truncated where the
    shot-noise tail falls below ``rel_truncation`` of the retained mean.
    """
    if density == 0:
        return math.log2(1.0 + snr_desired)
    shadow_mean = math.exp((sigma_db * math.log(10) / 10.0) ** 2 / 2.0)
    mean_resid = mean_residual_interference(
        max(num_canceled, 1), alpha, density, tx_power, shadow_mean, noise_power
    )
    r_max = _truncation_radius(
        density, alpha, tx_power, shadow_mean, noise_power,
        mean_resid if math.isfinite(mean_resid) else 1.0, rel_truncation, num_canceled,
    )
    resid = _residual_interference_samples(
        density, alpha, num_canceled, tx_power, sigma_db, noise_power, r_max, drops, rng,
        exp_marks=True,
    )
    return float(np.mean(np.log2(1.0 + snr_desired / (resid + 1.0))))


def _truncation_radius(
    density, alpha, tx_power, shadow_mean, noise_power, scale, rel, num_canceled=0
) -> float:
    # Solve 2 pi lam P Xi r^(2-alpha) / ((alpha-2) N0) = rel * scale for r.
    tail_coeff = 2.0 * math.pi * density * tx_power * shadow_mean / ((alpha - 2.0) * noise_power)
    r = (rel * scale / tail_coeff) ** (1.0 / (2.0 - alpha))
    # Region must hold the canceled points plus a healthy residual population.
    r_min = math.sqrt((3.0 * num_canceled + 30.0) / (math.pi * density))
    return max(r, r_min)


def _residual_interference_samples(
    density: float,
    alpha: float,
    num_canceled: int,
    tx_power: float,
    sigma_db: float,
    noise_power: float,
    r_max: float,
    drops: int,
    rng: np.random.Generator,
    exp_marks: bool = False,
) -> np.ndarray:
    """Noise-normalized residual shot-noise samples, nearest points removed.

    Vectorized over drops: point counts are Poisson, squared radii uniform on
    the disk; rows are padded to a common width. Marks are attached after the
    per-row distance sort (i.i.d. marks are exchangeable, so this is exact).
    """
    mean_count = density * math.pi * r_max**2
    counts = rng.poisson(mean_count, size=drops)
    width = int(max(counts.max(initial=0), num_canceled + 1))
    r2 = r_max**2 * rng.uniform(size=(drops, width))
    valid = np.arange(width)[None, :] < counts[:, None]
    r2[~valid] = np.inf
    r2.sort(axis=1)
    gains = np.where(np.isinf(r2), 0.0, r2 ** (-alpha / 2.0))
    marks = sample_shadowing(sigma_db, rng, (drops, width))
    if exp_marks:
        marks = marks * rng.exponential(size=(drops, width))
    gains *= marks
    if num_canceled > 0:
        gains[:, :num_canceled] = 0.0
    return tx_power * gains.sum(axis=1) / noise_power


def contaminated_se_quadrature(
    signal_samples: np.ndarray,
    interference_samples: np.ndarray,
    density: float,
    tx_power: float,
    alpha: float,
    shadow_frac_moment: float,
    rel_tol: float = 1e-8,
    floor: float = 0.0,
) -> float:
    """Contaminated-SE expectation via the exponential-integral identity.

    Evaluates E[log2(1 + S / (I + D + floor))] where S and I are the sampled
    desired and pilot-contamination floors and D is the aggregate D2D
    contamination of a plane PPP, whose Laplace transform is known in closed
    form:

        E[exp(-z D)] = exp(-pi density Gamma(1 - 1/alpha)
                           tx_power^(2/alpha) shadow_frac_moment z^(1/alpha))

    ``shadow_frac_moment`` is E[Xi^(2/alpha)] of the shadowing law;
    ``tx_power`` is the squared-pathloss mark's power factor (reference
    folded). The z-integral runs over t = log z, where the integrand decays
    exponentially on the left and doubly exponentially on the right.
    """
    s = np.asarray(signal_samples, dtype=float)
    i_cc = np.asarray(interference_samples, dtype=float) + floor
    if s.size == 0:
        raise ValueError("at least one signal sample required")
    if np.any(s <= 0):
        raise ValueError("signal samples must be positive")
    if density < 0:
        raise ValueError("density must be non-negative")
    if density == 0 and floor == 0 and np.all(i_cc == 0):
        raise QuadratureError("no damping term: SE diverges with zero interference")

    lap_coeff = 0.0
    if density > 0:
        lap_coeff = (
            math.pi
            * density
            * math.gamma(1.0 - 1.0 / alpha)
            * tx_power ** (2.0 / alpha)
            * shadow_frac_moment
        )

    damped_cc = bool(np.any(i_cc > 0))

    def integrand(t: float) -> float:
        if t > _T_MAX:
            return 0.0
        z = math.exp(t)
        one_minus_ls = -np.expm1(-z * s)  # 1 - exp(-z S), stable for small z
        val = float(np.mean(one_minus_ls))
        if val == 0.0:
            return 0.0
        if damped_cc:
            val *= float(np.mean(np.exp(-z * i_cc)))
        if lap_coeff > 0.0:
            val *= math.exp(-min(lap_coeff * z ** (1.0 / alpha), 745.0))
        return val

    # Center the window on the scale where z * median(S) ~ 1.
    t0 = -math.log(float(np.median(s)))
    lo, hi = _integration_window(integrand, t0)
    value, err = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=400)
    if value <= 0:
        return 0.0
    if err > 100 * rel_tol * value:
        raise QuadratureError(f"quadrature error {err:.3e} exceeds tolerance for value {value:.3e}")
    return LOG2E * value


_T_MAX = 690.0  # exp() overflows just above this; all physical scales sit far below


def _integration_window(integrand, t0: float, drop: float = 1e-14) -> tuple[float, float]:
    """Expand [t0-step, t0+step] until the integrand is negligible outside."""
    peak = max(integrand(t0), 1e-300)
    lo = t0
    while integrand(lo) > drop * peak:
        lo -= 10.0
        if t0 - lo > 600:
            break
    hi = t0
    while integrand(hi) > drop * peak:
        peak = max(peak, integrand(hi))
        hi += 10.0
        if hi >= _T_MAX:
            raise QuadratureError("integrand tail does not decay; check input scales")
    return lo, min(hi, _T_MAX)
