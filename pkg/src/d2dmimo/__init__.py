"""D2D-underlaid massive MIMO uplink: simulation and closed-form evaluation."""

from .channel import (
    ChannelSet,
    CellularTarget,
    D2dTarget,
    LinkBudget,
    assemble_channel_set,
    dbm_to_mw,
    default_budget,
    link_geometry,
    lognormal_moment,
    pathloss_gain,
    sample_fading,
    sample_shadowing,
    snr_linear,
)
from .netgeom import (
    CellLayout,
    NetworkDrop,
    build_drop,
    build_hex_layout,
    drop_cellular_ues,
    drop_d2d_pairs,
    nearest_interferers,
    partition_by_cell,
)
from .pzf import (
    InfeasiblePzfError,
    NumericalRankError,
    PzfParams,
    SeEstimate,
    SinrBreakdown,
    pzf_filter,
    select_cancellation_targets,
    sinr_cellular,
    sinr_d2d,
    spectral_efficiency,
)
from .csi import (
    InfeasibleTrainingError,
    MmseEstimate,
    contamination_power_terms,
    coordination_plan,
    estimation_quality,
    estimation_stats,
    make_pilots,
    mmse_estimate,
    silenced_training_limit_sinr,
    training_rx,
)
from .analytic import (
    GammaRatio,
    InfeasibleBoundError,
    QuadratureError,
    asymptotic_se_bound,
    cellular_se_lower_bound,
    contaminated_se_quadrature,
    d2d_se_lower_bound,
    mean_residual_interference,
    scaled_power_se_limit_mc,
    stirling_gamma_ratio,
)
from .harness import (
    ExperimentConfig,
    SeResult,
    apply_overrides,
    emit_csv,
    optimize_pzf,
    preset,
    run_experiment,
)
from .seeding import derive_seed, substream

__version__ = "0.1.0"
