"""Quick property checks runnable from the CLI without pytest.

Covers the load-bearing invariants at reduced scale: drop determinism,
partition completeness, filter orthogonality and its fading distributions,
the residual-interference scaling law, and byte-identical sweep output
across worker counts. Returns True when every check passes.
"""

from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np

from . import harness, simulate
from .analytic import mean_residual_interference
from .channel import LinkBudget, dbm_to_mw, sample_fading
from .netgeom import build_drop, build_hex_layout, partition_by_cell
from .pzf import pzf_filter
from .seeding import substream


def _check(name: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
    return ok


def run_selftest() -> bool:
    ok = True
    layout = build_hex_layout(2, 500.0)
    budget = LinkBudget(p_c=dbm_to_mw(23), p_d=dbm_to_mw(13))
    density = 12.0 / (math.pi * 500.0**2)

    drop_a = build_drop(layout, 4, density, 20.0, 7.0, seed=42)
    drop_b = build_drop(layout, 4, density, 20.0, 7.0, seed=42)
    ok &= _check(
        "drop determinism",
        np.array_equal(drop_a.cellular, drop_b.cellular)
        and np.array_equal(drop_a.d2d_tx, drop_b.d2d_tx)
        and np.array_equal(drop_a.shadow_cell_bs, drop_b.shadow_cell_bs),
    )

    sets = partition_by_cell(drop_a.d2d_tx, layout)
    union = np.sort(np.concatenate(sets))
    ok &= _check(
        "partition completeness",
        len(union) == drop_a.num_d2d and np.array_equal(union, np.arange(drop_a.num_d2d)),
    )

    rng = substream(7, 0)
    desired = sample_fading(rng, 64)
    canceled = sample_fading(rng, 64, 10)
    w = pzf_filter(desired, canceled)
    resid = np.max(np.abs(canceled @ w.conj()) / np.linalg.norm(canceled, axis=1))
    ok &= _check(
        "filter orthogonality",
        abs(np.linalg.norm(w) - 1) < 1e-12 and resid < 1e-10,
        f"max residual {resid:.2e}",
    )

    powers = np.abs(sample_fading(rng, 64, 4000) @ w.conj()) ** 2
    ok &= _check(
        "uncanceled interferer power is unit exponential",
        abs(np.mean(powers) - 1.0) < 0.08,
        f"mean {np.mean(powers):.3f}",
    )

    r1 = mean_residual_interference(2, 3.76, density, budget.p_d_bs, budget.shadow_mean, budget.n0_bs)
    r4 = mean_residual_interference(2, 3.76, 4 * density, budget.p_d_bs, budget.shadow_mean, budget.n0_bs)
    ok &= _check(
        "residual interference density scaling",
        abs(r4 / r1 - 4.0**1.88) < 1e-9,
        f"ratio {r4 / r1:.6f}",
    )

    cfg = harness.preset("props-suite")
    cfg = harness.apply_overrides(cfg, {"run.drops": "6", "run.fades": "4"})
    with tempfile.TemporaryDirectory() as tmp:
        p1, p2 = Path(tmp) / "a.csv", Path(tmp) / "b.csv"
        harness.emit_csv(harness.run_experiment(cfg, workers=1), p1)
        harness.emit_csv(harness.run_experiment(cfg, workers=2), p2)
        ok &= _check("worker-count determinism", p1.read_bytes() == p2.read_bytes())

    sim = harness.run_experiment(cfg, workers=1)
    ok &= _check(
        "bound does not exceed simulation",
        all(r.analytic_se <= r.sim_se + r.ci_halfwidth + 0.3 for r in sim if r.error is None),
    )
    return bool(ok)
