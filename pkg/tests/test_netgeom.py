import math

import numpy as np
import pytest
from scipy import stats

from d2dmimo import build_drop, build_hex_layout, drop_cellular_ues, drop_d2d_pairs
from d2dmimo.netgeom import nearest_interferers, partition_by_cell
from d2dmimo.seeding import substream

from conftest import TABLE_DENSITY


class TestHexLayout:
    def test_single_cell(self):
        lay = build_hex_layout(0, 500.0)
        assert lay.num_cells == 1
        assert np.allclose(lay.centers[0], 0.0)

    def test_two_rings_gives_19_cells(self):
        assert build_hex_layout(2, 500.0).num_cells == 19

    def test_ring_counts(self):
        for rings, expected in [(1, 7), (3, 37), (4, 61)]:
            assert build_hex_layout(rings, 500.0).num_cells == expected

    def test_neighbor_distance(self):
        lay = build_hex_layout(1, 500.0)
        dists = np.linalg.norm(lay.centers[1:], axis=1)
        assert np.allclose(dists, math.sqrt(3.0) * 500.0)

    def test_cells_tile_without_overlap(self):
        # Point-in-polygon brute force: no point may sit in two hexagons, and
        # points safely inside the layout must sit in exactly one.
        lay = build_hex_layout(1, 500.0)
        rng = substream(11, 0)
        pts = rng.uniform(-1500, 1500, size=(5000, 2))
        membership = np.stack([lay.contains(pts, b) for b in range(lay.num_cells)])
        counts = membership.sum(axis=0)
        assert counts.max() <= 1
        inner = np.linalg.norm(pts, axis=1) < 0.5 * math.sqrt(3) * 500  # inside cell 0's inradius
        assert np.all(counts[inner] == 1)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            build_hex_layout(-1, 500.0)
        with pytest.raises(ValueError):
            build_hex_layout(2, 0.0)


class TestCellularDrops:
    def test_points_inside_own_hexagon(self, layout1):
        pts = drop_cellular_ues(layout1, 4, substream(1, 0))
        assert pts.shape == (1, 4, 2)
        assert layout1.contains(pts[0], 0).all()

    def test_table_count(self, layout19):
        pts = drop_cellular_ues(layout19, 4, substream(2, 0))
        assert pts.shape == (19, 4, 2)
        for b in range(19):
            assert layout19.contains(pts[b], b).all()

    def test_mean_is_cell_center(self, layout1):
        n = 100_000
        pts = drop_cellular_ues(layout1, 1, substream(3, 0)).reshape(-1, 2)
        # accumulate more single-UE drops cheaply via one big rejection run
        rng = substream(3, 1)
        many = drop_cellular_ues(layout1, n, rng)[0]
        mean = many.mean(axis=0)
        sigma = many.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(mean) < 3.0 * sigma + 1e-9)
        assert pts.shape == (1, 2)


class TestD2dDrops:
    def test_zero_density(self):
        tx, rx = drop_d2d_pairs(1000.0, 0.0, 20.0, substream(4, 0))
        assert len(tx) == 0 and len(rx) == 0

    def test_poisson_mean_count(self):
        radius = 1000.0
        mean = TABLE_DENSITY * math.pi * radius**2
        rng = substream(4, 1)
        counts = [len(drop_d2d_pairs(radius, TABLE_DENSITY, 20.0, rng)[0]) for _ in range(10_000)]
        sample_mean = np.mean(counts)
        tol = 4.0 * math.sqrt(mean / 10_000)
        assert abs(sample_mean - mean) < tol

    def test_pair_separation_exact(self):
        tx, rx = drop_d2d_pairs(1000.0, TABLE_DENSITY, 20.0, substream(4, 2))
        assert np.allclose(np.linalg.norm(rx - tx, axis=1), 20.0)

    def test_count_distribution_poisson(self):
        # Chi-square goodness of fit of PPP counts in a fixed sub-region.
        radius = 300.0
        mean = TABLE_DENSITY * math.pi * radius**2
        rng = substream(4, 3)
        counts = np.array(
            [len(drop_d2d_pairs(radius, TABLE_DENSITY, 0.0, rng)[0]) for _ in range(10_000)]
        )
        hi = int(stats.poisson.ppf(0.999, mean))
        observed = np.bincount(np.minimum(counts, hi), minlength=hi + 1)
        expected = stats.poisson.pmf(np.arange(hi + 1), mean) * len(counts)
        expected[hi] = len(counts) - expected[:hi].sum()
        keep = expected >= 5
        chi2 = float(np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep]))
        pvalue = stats.chi2.sf(chi2, keep.sum() - 1)
        assert pvalue > 0.01


class TestPartition:
    def test_origin_in_cell_zero(self, layout19):
        sets = partition_by_cell(np.array([[0.0, 0.0]]), layout19)
        assert 0 in sets[0]

    def test_far_point_out_of_coverage(self, layout19):
        sets = partition_by_cell(np.array([[5000.0, 0.0]]), layout19)
        assert 0 in sets[-1]

    def test_partition_is_complete_and_disjoint(self, layout19):
        rng = substream(5, 0)
        pts = rng.uniform(-4000, 4000, size=(3000, 2))
        sets = partition_by_cell(pts, layout19)
        assert len(sets) == layout19.num_cells + 1
        joined = np.concatenate(sets)
        assert len(joined) == len(pts)
        assert len(np.unique(joined)) == len(pts)

    def test_agrees_with_hexagon_membership(self, layout19):
        rng = substream(5, 1)
        pts = rng.uniform(-2000, 2000, size=(500, 2))
        sets = partition_by_cell(pts, layout19)
        for b in range(layout19.num_cells):
            if len(sets[b]):
                assert layout19.contains(pts[sets[b]], b).all()


class TestNearestInterferers:
    def test_zero_m(self):
        assert len(nearest_interferers([0, 0], np.array([[1.0, 0.0]]), 0)) == 0

    def test_collinear(self):
        cands = np.array([[2.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
        idx = nearest_interferers([0.0, 0.0], cands, 2)
        assert list(idx) == [1, 0]

    def test_m_exceeds_candidates(self):
        cands = np.array([[1.0, 0.0], [2.0, 0.0]])
        assert len(nearest_interferers([0, 0], cands, 5)) == 2

    def test_tie_break_by_index(self):
        cands = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        idx = nearest_interferers([0.0, 0.0], cands, 2)
        assert list(idx) == [0, 1]

    def test_mth_nearest_distance_distribution(self):
        # lam*pi*r_m^2 of the m-th nearest PPP point is Gamma(m, 1).
        m = 3
        density = TABLE_DENSITY
        mean_needed = m + 10 * math.sqrt(m) + 20
        radius = math.sqrt(mean_needed / (math.pi * density))
        rng = substream(6, 0)
        samples = []
        for _ in range(10_000):
            tx, _ = drop_d2d_pairs(radius, density, 0.0, rng)
            if len(tx) < m:
                continue
            idx = nearest_interferers([0.0, 0.0], tx, m)
            r = np.linalg.norm(tx[idx[-1]])
            samples.append(density * math.pi * r**2)
        assert len(samples) > 9_900
        _, pvalue = stats.kstest(samples, "gamma", args=(m,))
        assert pvalue > 0.01


class TestNetworkDrop:
    def test_same_seed_bit_identical(self, layout19):
        a = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=77)
        b = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=77)
        assert np.array_equal(a.cellular, b.cellular)
        assert np.array_equal(a.d2d_tx, b.d2d_tx)
        assert np.array_equal(a.d2d_rx, b.d2d_rx)
        assert np.array_equal(a.shadow_cell_bs, b.shadow_cell_bs)
        assert np.array_equal(a.shadow_d2d_bs, b.shadow_d2d_bs)

    def test_different_seeds_differ(self, layout19):
        a = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=77)
        b = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=78)
        assert not np.array_equal(a.cellular, b.cellular)

    def test_shadowing_positive(self, layout19):
        d = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=1)
        assert np.all(d.shadow_cell_bs > 0)
        assert np.all(d.shadow_d2d_bs > 0)

    def test_rx_shadowing_deterministic_and_cached(self, layout19):
        d = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=9)
        d2 = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=9)
        c1, g1 = d.rx_shadowing(0)
        c2, g2 = d2.rx_shadowing(0)
        assert np.array_equal(c1, c2) and np.array_equal(g1, g2)
        again = d.rx_shadowing(0)
        assert again[0] is c1  # cached object

    def test_fixed_pair_distance(self, layout19):
        d = build_drop(layout19, 4, TABLE_DENSITY, 35.0, 7.0, seed=5)
        assert np.allclose(np.linalg.norm(d.d2d_rx - d.d2d_tx, axis=1), 35.0)

    def test_central_pairs_inside_cell_zero(self, layout19):
        d = build_drop(layout19, 4, TABLE_DENSITY, 20.0, 7.0, seed=5)
        pairs = d.central_cell_pairs()
        assert layout19.contains(d.d2d_rx[pairs], 0).all()
