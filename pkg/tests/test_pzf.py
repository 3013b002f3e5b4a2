import math

import numpy as np
import pytest
from scipy import integrate, stats

from d2dmimo import (
    CellularTarget,
    InfeasiblePzfError,
    NumericalRankError,
    PzfParams,
    assemble_channel_set,
    build_drop,
    build_hex_layout,
    link_geometry,
    pzf_filter,
    sample_fading,
    select_cancellation_targets,
    sinr_cellular,
    sinr_d2d,
    spectral_efficiency,
)
from d2dmimo import scaled_power_se_limit_mc
from d2dmimo.channel import ChannelSet
from d2dmimo.pzf import SinrBreakdown
from d2dmimo import simulate
from d2dmimo.seeding import substream

from conftest import TABLE_DENSITY


class TestPzfFilter:
    def test_mrc_is_normalized_desired(self):
        h = sample_fading(substream(1, 0), 32)
        w = pzf_filter(h, None)
        assert np.allclose(w, h / np.linalg.norm(h))
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-13)

    def test_orthogonal_to_every_canceled_vector(self):
        rng = substream(1, 1)
        h = sample_fading(rng, 128)
        canceled = sample_fading(rng, 128, 20)
        w = pzf_filter(h, canceled)
        resid = np.abs(canceled @ w.conj()) / np.linalg.norm(canceled, axis=1)
        assert np.max(resid) < 1e-10
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)

    def test_hand_computable_projection(self):
        e1 = np.array([1, 0, 0, 0], dtype=complex)
        e2 = np.array([0, 1, 0, 0], dtype=complex)
        w = pzf_filter(e1 + e2, e1.reshape(1, -1))
        assert np.allclose(w, e2)

    def test_too_many_canceled(self):
        rng = substream(1, 2)
        with pytest.raises(InfeasiblePzfError):
            pzf_filter(sample_fading(rng, 4), sample_fading(rng, 4, 4))

    def test_rank_deficient_canceled_set(self):
        rng = substream(1, 3)
        v = sample_fading(rng, 16)
        with pytest.raises(NumericalRankError):
            pzf_filter(sample_fading(rng, 16), np.vstack([v, 2 * v]))

    def test_desired_inside_canceled_span(self):
        rng = substream(1, 4)
        v = sample_fading(rng, 16)
        with pytest.raises(NumericalRankError):
            pzf_filter(3 * v, v.reshape(1, -1))

    def test_maximizes_projection(self):
        # |w* h| equals the norm of the orthogonal-complement projection,
        # the maximum over unit vectors orthogonal to the canceled set.
        rng = substream(1, 5)
        h = sample_fading(rng, 64)
        canceled = sample_fading(rng, 64, 8)
        w = pzf_filter(h, canceled)
        q, _ = np.linalg.qr(canceled.conj().T)
        proj = h - q @ (q.conj().T @ h)
        assert abs(np.vdot(w, h)) == pytest.approx(np.linalg.norm(proj), rel=1e-10)


class TestPzfParams:
    def test_bs_feasibility(self):
        PzfParams(3, 8, 100).check_bs_feasible(76)
        with pytest.raises(InfeasiblePzfError):
            PzfParams(76, 0, 100).check_bs_feasible(76)
        with pytest.raises(InfeasiblePzfError):
            PzfParams(50, 50, 100).check_bs_feasible(200)

    def test_ue_feasibility(self):
        PzfParams(4, 0, 8).check_ue_feasible(4)
        with pytest.raises(InfeasiblePzfError):
            PzfParams(5, 0, 8).check_ue_feasible(4)
        with pytest.raises(InfeasiblePzfError):
            PzfParams(0, 8, 8).check_ue_feasible(4)


class TestCancellationSelection:
    def test_zero_cancellation(self, layout19, budget):
        drop = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=2)
        geom = link_geometry(drop, CellularTarget(0), budget)
        cc, cd = select_cancellation_targets(geom, 0, 0)
        assert len(cc) == 0 and len(cd) == 0

    def test_request_beyond_population_cancels_all(self, layout1, budget):
        drop = build_drop(layout1, 2, 2.0 / (math.pi * 500**2), 20.0, 7.0, seed=3)
        geom = link_geometry(drop, CellularTarget(0), budget)
        cc, cd = select_cancellation_targets(geom, 10, drop.num_d2d + 5)
        assert len(cc) == 1  # only the other UE exists
        assert len(cd) == drop.num_d2d

    def test_selection_is_prefix_of_distance_order(self, layout19, budget):
        drop = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=4)
        geom = link_geometry(drop, CellularTarget(1), budget)
        cc, cd = select_cancellation_targets(geom, 5, 3)
        order_c = np.argsort(geom.cell_dists, kind="stable")
        order_d = np.argsort(geom.d2d_dists, kind="stable")
        assert list(cc) == list(order_c[:5])
        assert list(cd) == list(order_d[:3])


def _toy_channelset(dim, cell_coeffs, d2d_coeffs, noise, rng):
    from d2dmimo.channel import LinkGeometry

    geom = LinkGeometry(
        desired_coeff=1.0,
        desired_dist=10.0,
        cell_coeffs=np.asarray(cell_coeffs, dtype=float),
        cell_dists=np.arange(1, len(cell_coeffs) + 1, dtype=float),
        cell_ids=np.arange(len(cell_coeffs)),
        d2d_coeffs=np.asarray(d2d_coeffs, dtype=float),
        d2d_dists=np.arange(1, len(d2d_coeffs) + 1, dtype=float),
        d2d_ids=np.arange(len(d2d_coeffs)),
        noise_power=noise,
    )
    return ChannelSet(
        geometry=geom,
        desired=sample_fading(rng, dim),
        cell_vecs=sample_fading(rng, dim, len(cell_coeffs)),
        d2d_vecs=sample_fading(rng, dim, len(d2d_coeffs)),
    )


class TestSinr:
    def test_breakdown_identity(self):
        b = SinrBreakdown(signal=4.0, cellular_interf=1.0, d2d_interf=2.0, noise=1.0)
        assert b.sinr == pytest.approx(1.0)

    def test_canceled_terms_contribute_exactly_zero(self):
        rng = substream(2, 0)
        ch = _toy_channelset(16, [], [5.0], 1e-3, rng)
        w = pzf_filter(ch.desired, ch.d2d_vecs)
        b = sinr_cellular(ch, w, canceled_d2d=[0])
        assert b.d2d_interf == 0.0

    def test_adding_interferer_never_increases_sinr(self):
        rng = substream(2, 1)
        ch_small = _toy_channelset(16, [1.0], [], 1e-3, rng)
        ch_big = ChannelSet(
            geometry=ch_small.geometry,
            desired=ch_small.desired,
            cell_vecs=ch_small.cell_vecs,
            d2d_vecs=sample_fading(rng, 16, 1),
        )
        ch_big.geometry.d2d_coeffs = np.array([0.5])
        ch_big.geometry.d2d_ids = np.array([0])
        w = pzf_filter(ch_small.desired)
        assert sinr_d2d(ch_big, w).sinr <= sinr_cellular(ch_small, w).sinr

    def test_siso_reduction(self):
        rng = substream(2, 2)
        ch = _toy_channelset(1, [2.0], [3.0], 0.7, rng)
        w = pzf_filter(ch.desired)
        b = sinr_cellular(ch, w)
        expect = (
            1.0
            * abs(ch.desired[0]) ** 2
            / (2.0 * abs(ch.cell_vecs[0, 0]) ** 2 + 3.0 * abs(ch.d2d_vecs[0, 0]) ** 2 + 0.7)
        )
        assert b.sinr == pytest.approx(expect, rel=1e-12)

    def test_noise_scales_with_filter_norm(self):
        rng = substream(2, 3)
        ch = _toy_channelset(8, [], [], 0.25, rng)
        w = pzf_filter(ch.desired)
        assert sinr_cellular(ch, w).noise == pytest.approx(0.25, rel=1e-12)


class TestFadingDistributions:
    """Desired and interferer powers through the PZF filter."""

    M = 64
    CANCELED = 10

    def test_desired_power_gamma(self):
        rng = substream(3, 0)
        canceled = sample_fading(rng, self.M, self.CANCELED)
        q, _ = np.linalg.qr(canceled.conj().T)
        h = sample_fading(rng, self.M, 100_000)
        # |w* h|^2 equals the squared norm of the orthocomplement projection
        proj = h - (h @ q.conj()) @ q.T
        samples = np.sum(np.abs(proj) ** 2, axis=1)
        dof = self.M - self.CANCELED
        assert np.mean(samples) == pytest.approx(dof, rel=0.01)
        sub = samples[:2_000]
        direct = np.array(
            [abs(np.vdot(pzf_filter(hv, canceled), hv)) ** 2 for hv in h[:2_000]]
        )
        assert np.allclose(direct, sub, rtol=1e-9)
        _, pvalue = stats.kstest(samples, "gamma", args=(dof,))
        assert pvalue > 0.01

    def test_interferer_power_exponential(self):
        rng = substream(3, 1)
        canceled = sample_fading(rng, self.M, self.CANCELED)
        w = pzf_filter(sample_fading(rng, self.M), canceled)
        h = sample_fading(rng, self.M, 100_000)
        samples = np.abs(h @ w.conj()) ** 2
        assert np.mean(samples) == pytest.approx(1.0, rel=0.01)
        assert np.var(samples, ddof=1) == pytest.approx(1.0, rel=0.03)
        _, pvalue = stats.kstest(samples, "expon")
        assert pvalue > 0.01


class TestSpectralEfficiency:
    def test_unit_sinr(self):
        est = spectral_efficiency([1.0, 1.0, 1.0])
        assert est.se == pytest.approx(1.0)
        assert est.stderr == 0.0

    def test_zero_sinr(self):
        assert spectral_efficiency([0.0]).se == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            spectral_efficiency([])

    def test_matches_quadrature_oracle_for_lognormal_sinr(self):
        # E[log2(1 + X)], X lognormal, via numerical integration.
        mu, sd = 1.0, 0.8

        def integrand(x):
            return math.log2(1 + math.exp(x)) * stats.norm.pdf(x, mu, sd)

        truth, _ = integrate.quad(integrand, mu - 10 * sd, mu + 10 * sd)
        rng = substream(4, 0)
        est = spectral_efficiency(np.exp(rng.normal(mu, sd, 200_000)))
        assert abs(est.se - truth) < 3 * est.stderr + 1e-4

    def test_ci_coverage(self):
        # 95% CI covers the quadrature truth in 91..99% of repeated runs.
        mu, sd = 0.5, 1.0

        def integrand(x):
            return math.log2(1 + math.exp(x)) * stats.norm.pdf(x, mu, sd)

        truth, _ = integrate.quad(integrand, mu - 10 * sd, mu + 10 * sd)
        rng = substream(4, 1)
        hits = 0
        runs = 200
        for _ in range(runs):
            est = spectral_efficiency(np.exp(rng.normal(mu, sd, 400)))
            if abs(est.se - truth) <= est.ci_halfwidth:
                hits += 1
        assert 0.91 * runs <= hits <= 0.99 * runs


class TestAsymptoticTrends:
    """Large-antenna behavior on a fixed drop."""

    def _fixed_drop(self):
        layout = build_hex_layout(1, 500.0)
        density = 4.0 / (math.pi * 500.0**2)
        drop = build_drop(layout, 2, density, 20.0, 7.0, seed=42, region_multiplier=2.0)
        drop.cellular[0, 0] = (250.0, 0.0)
        drop.shadow_cell_bs[0, 0] = 1.0
        return drop

    def test_normalized_signal_and_interference(self, budget):
        # Desired power over M^2 approaches its deterministic large-scale
        # value; normalized interference plus noise shrinks with M.
        drop = self._fixed_drop()
        geom = link_geometry(drop, CellularTarget(0), budget)
        rng = substream(5, 0)
        fades = 60
        med_interf = []
        for m in (16, 64, 256, 1024):
            sig, interf = [], []
            for _ in range(fades):
                ch = assemble_channel_set(drop, CellularTarget(0), budget, m, rng)
                w = pzf_filter(ch.desired) * np.linalg.norm(ch.desired)  # unnormalized MRC
                b = sinr_cellular(ch, w)
                sig.append(b.signal / m**2)
                interf.append((b.cellular_interf + b.d2d_interf + b.noise) / m**2)
            med_interf.append(np.median(interf))
            if m == 1024:
                assert np.median(sig) == pytest.approx(geom.desired_coeff, rel=0.1)
        assert all(a > b for a, b in zip(med_interf, med_interf[1:]))

    def test_scaled_power_se_approaches_limit(self, budget):
        # With 1/M power scaling and MRC-style PZF, the simulated SE tends to
        # the Monte Carlo of the limiting expression on the same drops.
        density = 4.0 / (math.pi * 500.0**2)
        m_d = 2
        snr0 = 35.78867067697121
        oracle = scaled_power_se_limit_mc(
            snr0,
            m_d,
            budget.alpha_c,
            density,
            budget.p_d_bs,
            budget.sigma_db,
            budget.n0_bs,
            substream(5, 1),
            drops=60_000,
        )
        layout = build_hex_layout(0, 500.0)
        gaps = []
        for m in (64, 256, 1024):
            vals = []
            for j in range(40):
                drop = build_drop(layout, 1, density, 20.0, 7.0, seed=1000 + j,
                                  region_multiplier=2.5)
                drop.cellular[0, 0] = (250.0, 0.0)
                drop.shadow_cell_bs[0, 0] = 1.0
                rng = substream(5, 2, m, j)
                s = simulate.cellular_se_samples(
                    drop, budget, m, 0, m_d, 25, rng, pc_scale=1.0 / m
                )
                vals.append(s.mean())
            gaps.append(abs(np.mean(vals) - oracle))
        assert gaps[-1] < 0.25
        assert gaps[0] > gaps[-1]
