"""Mean-constrained KL projections, envelopes and LIL trajectory simulation."""

from .envelopes import EnvelopeSpec, Regime, envelope_scale_ratio, envelope_validity_trace, envelope_value
from .errors import *  # noqa: F401,F403
from .measures import (
    DiscreteDistribution,
    EmpiricalAccumulator,
    RunningMoments,
    SupportInterval,
    empirical_from_samples,
    kl_divergence,
    update_moments,
)
from .oracle import klinf_oracle
from .projection import (
    DualSolution,
    TiltResult,
    affine_tilt,
    degenerate_sweep,
    dv_lower_bound,
    klinf_dual,
    klinf_value,
    quadratic_proxy,
    sprinkle,
    taylor_neg_log_bounds,
    tilt_upper_bound,
)
from .samplers import (
    DistributionSpec,
    Kind,
    RngState,
    adversarial_second_moment_quadrature,
    adversarial_survival,
    exceedance_bound_check,
    sample,
    sample_adversarial,
)
from .simulation import (
    Envelope,
    FixedInterval,
    SimConfig,
    TrajectoryRecord,
    aggregate_seeds,
    envelope_collapse_experiment,
    normalized_statistic,
    run_seeds,
    run_trajectory,
)

__version__ = "0.1.0"
