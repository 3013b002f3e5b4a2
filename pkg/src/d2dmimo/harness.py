"""Experiment driver: configuration, presets, sweeps, CSV emission.

A run sweeps one variable over a list of values. For every sweep point it
generates independent network drops (seeded from the master seed, the sweep
index and the drop index, so results never depend on scheduling), samples
fading realizations per drop, and attaches the matching analytic value when
the preset defines one.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic import (
    InfeasibleBoundError,
    asymptotic_se_bound,
    contaminated_se_quadrature,
    mean_residual_interference,
)
from .channel import LinkBudget, dbm_to_mw, lognormal_moment
from .csi import sample_contamination_terms
from .netgeom import build_drop, build_hex_layout
from .pzf import InfeasiblePzfError, PzfParams
from .seeding import derive_seed, substream
from . import simulate

_TAG_DROP = 1
_TAG_FADE = 2
_TAG_ANALYTIC = 3

SWEEP_VARS = ("M", "N", "K", "m_d", "D", "d2d_per_cell", "power_scaling", "pzf")
SIDES = ("cellular", "d2d")
ANALYTIC_KINDS = (
    "cellular_bound",
    "d2d_bound",
    "scaled_power_limit",
    "silenced_training_limit",
    "contamination",
)
PRESET_NAMES = ("fig2", "fig3", "fig4", "fig5", "fig7", "fig8", "props-suite")


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "custom"
    sweep_var: str = "M"
    sweep_values: tuple = (100,)
    drops: int = 200
    fades: int = 50
    master_seed: int = 1
    budget: LinkBudget = field(default_factory=lambda: LinkBudget(p_c=dbm_to_mw(23), p_d=dbm_to_mw(13)))
    num_rings: int = 2
    r_c: float = 500.0
    region_multiplier: float = 3.0
    k_per_cell: int = 4
    d2d_per_cell: float = 12.0  # mean D2D transmitters per pi*r_c^2 of area
    d2d_distance: float = 20.0
    m_antennas: int = 100
    n_antennas: int = 4
    m_c: int = 0
    m_d: int = 0
    n_c: int = 0
    n_d: int = 0
    side: str = "cellular"
    csi_mode: str = "perfect"
    power_scaling: str = "none"
    m_d_policy: str = "fixed"  # "fixed" | "sqrt_m" (m_d = ceil(sqrt(M)))
    analytic: str | None = None

    def validate(self) -> None:
        if self.sweep_var not in SWEEP_VARS:
            raise ValueError(f"unknown sweep variable {self.sweep_var!r}")
        if not self.sweep_values:
            raise ValueError("sweep values must be non-empty")
        if self.drops < 1 or self.fades < 1:
            raise ValueError("drops and fades must be at least 1")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        if self.csi_mode not in simulate.CSI_MODES:
            raise ValueError(f"csi_mode must be one of {simulate.CSI_MODES}")
        if self.analytic is not None and self.analytic not in ANALYTIC_KINDS:
            raise ValueError(f"unknown analytic companion {self.analytic!r}")
        if self.m_d_policy not in ("fixed", "sqrt_m"):
            raise ValueError("m_d_policy must be 'fixed' or 'sqrt_m'")
        if self.k_per_cell < 1 or self.num_rings < 0:
            raise ValueError("invalid geometry")
        if self.d2d_per_cell < 0 or self.d2d_distance < 0:
            raise ValueError("invalid D2D settings")

    @property
    def density(self) -> float:
        return self.d2d_per_cell / (math.pi * self.r_c**2)


@dataclass(frozen=True)
class PointSettings:
    """Effective per-sweep-point knobs after applying the sweep variable."""

    m_antennas: int
    n_antennas: int
    k_per_cell: int
    m_c: int
    m_d: int
    n_c: int
    n_d: int
    d2d_per_cell: float
    d2d_distance: float
    power_scaling: str


def resolve_point(cfg: ExperimentConfig, value) -> PointSettings:
    """Apply one sweep value (and the m_d policy) to the base config."""
    s = dict(
        m_antennas=cfg.m_antennas,
        n_antennas=cfg.n_antennas,
        k_per_cell=cfg.k_per_cell,
        m_c=cfg.m_c,
        m_d=cfg.m_d,
        n_c=cfg.n_c,
        n_d=cfg.n_d,
        d2d_per_cell=cfg.d2d_per_cell,
        d2d_distance=cfg.d2d_distance,
        power_scaling=cfg.power_scaling,
    )
    var = cfg.sweep_var
    if var == "M":
        s["m_antennas"] = int(value)
    elif var == "N":
        s["n_antennas"] = int(value)
    elif var == "K":
        s["k_per_cell"] = int(value)
    elif var == "m_d":
        s["m_d"] = int(value)
    elif var == "D":
        s["d2d_distance"] = float(value)
    elif var == "d2d_per_cell":
        s["d2d_per_cell"] = float(value)
    elif var == "power_scaling":
        s["power_scaling"] = str(value)
    elif var == "pzf":
        s["m_c"], s["m_d"] = int(value[0]), int(value[1])
    if cfg.m_d_policy == "sqrt_m":
        s["m_d"] = int(math.ceil(math.sqrt(s["m_antennas"])))
    return PointSettings(**s)


@dataclass
class SeResult:
    """One sweep point: simulated SE, its CI, the analytic companion."""

    sweep_value: object
    sim_se: float
    ci_halfwidth: float
    analytic_se: float | None
    samples: int
    error: str | None = None


def format_sweep_value(value) -> str:
    if isinstance(value, tuple):
        return "-".join(str(v) for v in value)
    if isinstance(value, str):
        return value
    return format(float(value), ".9g") if isinstance(value, float) else str(value)


def emit_csv(results: list[SeResult], path) -> None:
    """Write results as CSV: header + one row per sweep value, 9 sig digits."""

    def num(x):
        if x is None:
            return ""
        return format(float(x), ".9g")

    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("sweep,sim_se,ci,analytic_se,samples\n")
            for r in results:
                fh.write(
                    f"{format_sweep_value(r.sweep_value)},{num(r.sim_se)},"
                    f"{num(r.ci_halfwidth)},{num(r.analytic_se)},{r.samples}\n"
                )
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _drop_for(cfg: ExperimentConfig, point: PointSettings, sweep_idx: int, drop_idx: int):
    layout = build_hex_layout(cfg.num_rings, cfg.r_c)
    seed = derive_seed(cfg.master_seed, _TAG_DROP, sweep_idx, drop_idx)
    return build_drop(
        layout,
        point.k_per_cell,
        point.d2d_per_cell / (math.pi * cfg.r_c**2),
        point.d2d_distance,
        cfg.budget.sigma_db,
        seed,
        cfg.region_multiplier,
    )


def _run_drop(cfg: ExperimentConfig, sweep_idx: int, drop_idx: int, bounds_only: bool):
    """Simulate one drop of one sweep point; returns (sim_mean, n, analytic)."""
    point = resolve_point(cfg, cfg.sweep_values[sweep_idx])
    drop = _drop_for(cfg, point, sweep_idx, drop_idx)
    density = point.d2d_per_cell / (math.pi * cfg.r_c**2)
    pc_scale = simulate.power_scale_factor(point.power_scaling, point.m_antennas)
    rng = substream(cfg.master_seed, _TAG_FADE, sweep_idx, drop_idx)

    sim_mean, n_samples = math.nan, 0
    if not bounds_only:
        if cfg.side == "cellular":
            samples = simulate.cellular_se_samples(
                drop,
                cfg.budget,
                point.m_antennas,
                point.m_c,
                point.m_d,
                cfg.fades,
                rng,
                csi_mode=cfg.csi_mode,
                pc_scale=pc_scale,
            )
        else:
            samples, _ = simulate.d2d_se_samples(
                drop, cfg.budget, point.n_antennas, point.n_c, point.n_d, cfg.fades, rng
            )
        if samples.size:
            sim_mean = float(np.mean(samples))
            n_samples = int(samples.size)

    analytic_mean = _analytic_for_drop(cfg, point, drop, density, pc_scale)
    return sim_mean, n_samples, analytic_mean


def _analytic_for_drop(cfg, point, drop, density, pc_scale):
    if cfg.analytic is None or cfg.analytic == "contamination":
        return None
    if cfg.analytic == "cellular_bound":
        vals = simulate.cellular_bounds(
            drop, cfg.budget, point.m_antennas, point.m_c, point.m_d, density, pc_scale
        )
        return float(np.mean(vals))
    if cfg.analytic == "d2d_bound":
        vals, _ = simulate.d2d_bounds(
            drop, cfg.budget, point.n_antennas, point.n_c, point.n_d, density
        )
        return float(np.mean(vals)) if len(vals) else None
    if cfg.analytic == "scaled_power_limit":
        residual = mean_residual_interference(
            point.m_d,
            cfg.budget.alpha_c,
            density,
            cfg.budget.p_d_bs,
            cfg.budget.shadow_mean,
            cfg.budget.n0_bs,
        )
        prob = simulate._BsProblem(drop, cfg.budget, 1.0)
        snr0 = prob.coeff_cell[: drop.k_per_cell] / prob.noise
        return float(np.mean([asymptotic_se_bound(s, residual) for s in snr0]))
    if cfg.analytic == "silenced_training_limit":
        from .csi import silenced_training_limit_sinr

        return float(np.mean(np.log2(1.0 + silenced_training_limit_sinr(drop, cfg.budget))))
    raise ValueError(f"unknown analytic companion {cfg.analytic!r}")


def _contamination_analytic(cfg: ExperimentConfig, point: PointSettings, sweep_idx: int) -> float:
    """Quadrature value of the contaminated-SE expectation for one point."""
    rng = substream(cfg.master_seed, _TAG_ANALYTIC, sweep_idx)
    layout = build_hex_layout(cfg.num_rings, cfg.r_c)
    n = max(20000, cfg.drops * 50)
    s, i_cc = sample_contamination_terms(layout, cfg.budget, n, rng)
    density = point.d2d_per_cell / (math.pi * cfg.r_c**2)
    return contaminated_se_quadrature(
        s,
        i_cc,
        density,
        cfg.budget.p_d_bs,
        cfg.budget.alpha_c,
        lognormal_moment(cfg.budget.sigma_db, 2.0 / cfg.budget.alpha_c),
    )


def _check_point_feasible(cfg: ExperimentConfig, point: PointSettings) -> None:
    total_ues = (1 + sum(6 * r for r in range(1, cfg.num_rings + 1))) * point.k_per_cell
    if cfg.side == "cellular":
        PzfParams(point.m_c, point.m_d, point.m_antennas).check_bs_feasible(total_ues)
        if cfg.csi_mode != "perfect":
            n_seq = point.k_per_cell + (point.m_d if cfg.csi_mode == "estimated-active" else 0)
            if cfg.budget.t_c < n_seq:
                raise InfeasiblePzfError(
                    f"training length {cfg.budget.t_c} too short for {n_seq} pilots"
                )
    else:
        PzfParams(point.n_c, point.n_d, point.n_antennas).check_ue_feasible(total_ues)


def run_experiment(
    cfg: ExperimentConfig, workers: int = 1, bounds_only: bool = False
) -> list[SeResult]:
    """Run the sweep; results depend only on the config and master seed.

    Each sweep point aggregates per-drop means; the confidence interval is
    the normal-approximation 95% band over the independent drop means. A
    sweep point with an infeasible receiver configuration produces an error
    entry and the run continues.
    """
    cfg.validate()
    results: list[SeResult] = []
    jobs: list[tuple[int, int]] = []
    feasible: dict[int, bool] = {}
    for si, value in enumerate(cfg.sweep_values):
        point = resolve_point(cfg, value)
        try:
            _check_point_feasible(cfg, point)
            feasible[si] = True
            jobs.extend((si, j) for j in range(cfg.drops))
        except InfeasiblePzfError as exc:
            feasible[si] = False
            results.append(
                SeResult(value, math.nan, math.nan, None, 0, error=str(exc))
            )

    per_drop: dict[tuple[int, int], tuple[float, int, float | None]] = {}
    if workers <= 1:
        for si, j in jobs:
            per_drop[(si, j)] = _run_drop(cfg, si, j, bounds_only)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                (si, j): pool.submit(_run_drop, cfg, si, j, bounds_only) for si, j in jobs
            }
            for key, fut in futures.items():
                per_drop[key] = fut.result()

    ordered: list[SeResult] = []
    err_iter = iter(results)
    for si, value in enumerate(cfg.sweep_values):
        if not feasible[si]:
            ordered.append(next(err_iter))
            continue
        rows = [per_drop[(si, j)] for j in range(cfg.drops)]
        sims = np.array([r[0] for r in rows])
        counts = np.array([r[1] for r in rows])
        valid = counts > 0
        if bounds_only or not np.any(valid):
            sim_se, ci = math.nan, math.nan
            total = 0
        else:
            means = sims[valid]
            sim_se = float(np.mean(means))
            sd = float(np.std(means, ddof=1)) if len(means) > 1 else 0.0
            ci = 1.96 * sd / math.sqrt(len(means))
            total = int(np.sum(counts))

        if cfg.analytic == "contamination":
            point = resolve_point(cfg, value)
            analytic = _contamination_analytic(cfg, point, si)
        else:
            avals = [r[2] for r in rows if r[2] is not None]
            analytic = float(np.mean(avals)) if avals else None
        ordered.append(SeResult(value, sim_se, ci, analytic, total))
    return ordered


def optimize_pzf(
    cfg: ExperimentConfig,
    grid: list[tuple[int, int]] | None = None,
    method: str = "sim",
    workers: int = 1,
) -> tuple[tuple[int, int], list[SeResult]]:
    """Exhaustive search of the cancellation split maximizing mean cellular SE.

    Grid defaults to intra-cell cellular cancellation (0..K) crossed with a
    few D2D orders. Ties break toward the smallest total cancellation, then
    the smallest cellular order. ``method="bound"`` ranks by the closed-form
    lower bound instead of simulation.
    """
    if method not in ("sim", "bound"):
        raise ValueError("method must be 'sim' or 'bound'")
    if grid is None:
        grid = [(mc, md) for mc in range(cfg.k_per_cell + 1) for md in (0, 2, 4, 8)]
    sweep_cfg = replace(
        cfg,
        sweep_var="pzf",
        sweep_values=tuple(grid),
        analytic="cellular_bound",
        side="cellular",
    )
    results = run_experiment(sweep_cfg, workers=workers, bounds_only=(method == "bound"))
    best: tuple[int, int] | None = None
    best_score = -math.inf
    for value, res in zip(grid, results):
        if res.error is not None:
            continue
        score = res.analytic_se if method == "bound" else res.sim_se
        if score is None or math.isnan(score):
            continue
        better = score > best_score
        if not better and score == best_score and best is not None:
            better = (sum(value), value[0]) < (sum(best), best[0])
        if better:
            best, best_score = value, score
    if best is None:
        raise InfeasiblePzfError("no feasible cancellation split in the search grid")
    return best, results


# ----------------------------------------------------------------------------
# Presets and the flat key=value configuration surface.

CONFIG_KEYS = {
    "geometry.num_rings": ("num_rings", int),
    "geometry.r_c": ("r_c", float),
    "geometry.region_multiplier": ("region_multiplier", float),
    "net.k_per_cell": ("k_per_cell", int),
    "net.d2d_per_cell": ("d2d_per_cell", float),
    "net.d2d_distance": ("d2d_distance", float),
    "antennas.m": ("m_antennas", int),
    "antennas.n": ("n_antennas", int),
    "pzf.m_c": ("m_c", int),
    "pzf.m_d": ("m_d", int),
    "pzf.n_c": ("n_c", int),
    "pzf.n_d": ("n_d", int),
    "run.drops": ("drops", int),
    "run.fades": ("fades", int),
    "run.side": ("side", str),
    "run.csi_mode": ("csi_mode", str),
    "run.power_scaling": ("power_scaling", str),
    "run.m_d_policy": ("m_d_policy", str),
    "sweep.var": ("sweep_var", str),
    "sweep.values": ("sweep_values", "values"),
}

BUDGET_KEYS = {
    "budget.p_c_dbm": ("p_c", lambda v: dbm_to_mw(float(v))),
    "budget.p_d_dbm": ("p_d", lambda v: dbm_to_mw(float(v))),
    "budget.alpha_c": ("alpha_c", float),
    "budget.alpha_d": ("alpha_d", float),
    "budget.c_c0_db": ("c_c0_db", float),
    "budget.c_d0_db": ("c_d0_db", float),
    "budget.sigma_db": ("sigma_db", float),
    "budget.t_c": ("t_c", int),
    "budget.n0_bs_dbm": ("n0_bs", lambda v: dbm_to_mw(float(v))),
    "budget.n0_ue_dbm": ("n0_ue", lambda v: dbm_to_mw(float(v))),
}


def _parse_values(text: str) -> tuple:
    """Sweep value list: numbers, 'mc-md' pairs, or bare strings."""
    vals: list = []
    for part in text.split(";" if ";" in text else ","):
        part = part.strip()
        if not part:
            continue
        try:
            num = float(part)
            vals.append(int(num) if num.is_integer() else num)
            continue
        except ValueError:
            pass
        if re.fullmatch(r"\d+-\d+", part):
            a, b = part.split("-")
            vals.append((int(a), int(b)))
        else:
            vals.append(part)
    return tuple(vals)


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Apply flat ``section.key=value`` overrides to a config."""
    budget_updates: dict[str, object] = {}
    cfg_updates: dict[str, object] = {}
    for key, raw in overrides.items():
        if key in BUDGET_KEYS:
            attr, conv = BUDGET_KEYS[key]
            budget_updates[attr] = conv(raw)
        elif key in CONFIG_KEYS:
            attr, conv = CONFIG_KEYS[key]
            cfg_updates[attr] = _parse_values(raw) if conv == "values" else conv(raw)
        elif key == "run.master_seed":
            cfg_updates["master_seed"] = int(raw)
        else:
            raise ValueError(f"unknown configuration key {key!r}")
    if budget_updates:
        cfg_updates["budget"] = replace(cfg.budget, **budget_updates)
    return replace(cfg, **cfg_updates)


def parse_config_file(path) -> dict[str, str]:
    """Flat INI-like file: one ``key = value`` per line, '#' comments."""
    overrides: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            overrides[key.strip()] = value.strip()
    return overrides


def preset(name: str) -> ExperimentConfig:
    """Named experiment presets; defaults follow the standard parameter table.

    fig2: cellular SE vs M under PZF, bound companion. Curves for other
          cancellation splits via pzf.m_c / pzf.m_d overrides.
    fig3: D2D SE vs N at (n_c, n_d) = (0, 2); second curve via
          net.d2d_distance=35.
    fig4: bound-based cellular SE vs M with 1/M power scaling and D2D power
          reduced tenfold; scaled-cancellation curve via run.m_d_policy=sqrt_m,
          no-D2D reference via net.d2d_per_cell=0.
    fig5: D2D SE vs K with MRC receivers.
    fig7: contaminated cellular SE vs D2D load under estimated CSI, with the
          quadrature companion.
    fig8: cellular SE over the (m_c, m_d) grid.
    props-suite: small fast sweep used by the self-test.
    """
    base = ExperimentConfig()
    if name == "fig2":
        return replace(
            base,
            preset=name,
            sweep_var="M",
            sweep_values=(20, 40, 60, 100, 140, 200, 300),
            m_c=0,
            m_d=2,
            side="cellular",
            analytic="cellular_bound",
        )
    if name == "fig3":
        return replace(
            base,
            preset=name,
            sweep_var="N",
            sweep_values=(4, 5, 6, 8, 10, 12),
            n_c=0,
            n_d=2,
            side="d2d",
            analytic="d2d_bound",
            d2d_distance=20.0,
        )
    if name == "fig4":
        return replace(
            base,
            preset=name,
            sweep_var="M",
            sweep_values=(16, 32, 64, 128, 256, 512, 1024),
            m_c=0,
            m_d=2,
            power_scaling="pc_over_m",
            budget=replace(base.budget, p_d=base.budget.p_d / 10.0),
            side="cellular",
            analytic="cellular_bound",
        )
    if name == "fig5":
        return replace(
            base,
            preset=name,
            sweep_var="K",
            sweep_values=(2, 4, 6, 8, 10, 12, 16, 20),
            n_c=0,
            n_d=0,
            side="d2d",
            analytic=None,
        )
    if name == "fig7":
        return replace(
            base,
            preset=name,
            sweep_var="d2d_per_cell",
            sweep_values=(0, 1, 2, 4, 8, 16, 22, 32, 40),
            m_c=0,
            m_d=0,
            m_antennas=1024,
            csi_mode="estimated-active",
            budget=replace(base.budget, t_c=4),
            fades=10,
            drops=100,
            side="cellular",
            analytic="contamination",
        )
    if name == "fig8":
        return replace(
            base,
            preset=name,
            sweep_var="pzf",
            sweep_values=tuple((mc, md) for mc in range(5) for md in (0, 2, 4, 8)),
            m_antennas=100,
            drops=150,
            fades=40,
            side="cellular",
            analytic="cellular_bound",
        )
    if name == "props-suite":
        return replace(
            base,
            preset=name,
            sweep_var="M",
            sweep_values=(16, 64),
            drops=25,
            fades=10,
            m_c=0,
            m_d=2,
            side="cellular",
            analytic="cellular_bound",
        )
    raise ValueError(f"unknown preset {name!r}; valid names: {', '.join(PRESET_NAMES)}")
