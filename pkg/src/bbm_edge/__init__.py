"""Branching Brownian motion at the edge: simulator, estimators and analytic oracles."""

from .bridge import (
    LinearBarrier,
    bridge_below_line_bound,
    bridge_below_line_exact,
    concave_curve_stay_below_bound,
    monotonicity_check,
)
from .engine import (
    CapacityError,
    ExtremalSnapshot,
    GenealogyTree,
    ParticlePath,
    PruneConfig,
    ancestral_path,
    extremal_snapshot,
    overlap_Q,
    resample_positions_on_skeleton,
    simulate,
)
from .envelopes import (
    EnvelopeSpec,
    entropic_envelope,
    f_curve,
    front_m,
    path_crosses_above,
    path_crosses_below,
    rem_front_r,
    upper_envelope,
)
from .extremal import (
    GibbsSample,
    ReplicaSummary,
    SummaryConfig,
    SummarySet,
    derivative_martingale,
    envelope_violation_rate,
    exceedance_counts,
    gap_statistics,
    genealogy_concentration,
    gibbs_overlap_distribution,
    local_finiteness_curve,
    max_law_tail,
    summarize,
)
from .fkpp import FkppState, front_position, step, wave_shape_residual
from .kernels import (
    OffspringLaw,
    RngStream,
    sample_branch_time,
    sample_bridge_path,
    sample_gaussian_increment,
    sample_offspring,
)

__all__ = [name for name in dir() if not name.startswith("_")]
