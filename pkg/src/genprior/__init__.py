"""Exact asymptotics for compressed sensing and real-valued phase retrieval
with random multi-layer generative priors: free energies, state evolution,
statistical/algorithmic thresholds, phase diagrams, and a finite-size
multi-layer AMP simulator for cross-validation.
"""

from .quadrature import (
    NumericDomainError,
    QuadratureRule,
    expect_gaussian_1d,
    expect_gaussian_2d,
    gauss_hermite_rule,
    mc_expect,
)
from .channels import (
    ChannelKind,
    ChannelPoint,
    UnsupportedOperation,
    channel_log_partition,
    channel_potential,
    channel_stability_coeff,
    channel_update,
)
from .layers import (
    LatentPrior,
    LayerKind,
    LayerPoint,
    PriorKind,
    layer_log_partition,
    layer_potential,
    layer_stability_coeffs,
    layer_update_out,
    layer_update_x,
    prior_log_partition,
    prior_potential,
    prior_update,
    second_moment_propagate,
    uninformative_fixed_point_exists,
)
from .state_evolution import (
    FixedPointResult,
    InitKind,
    NetworkSpec,
    OverlapState,
    free_energy,
    landscape_profile,
    se_solve,
    se_step,
    se_trajectory,
)
from .thresholds import (
    PhaseRegion,
    ThresholdReport,
    alpha_alg_numeric,
    alpha_c_analytic,
    alpha_c_numeric,
    alpha_it_counting,
    alpha_it_numeric,
    compute_threshold_report,
    jacobian_at_zero,
    phase_region,
    spectral_radius,
)
from .amp import (
    AmpSeRow,
    AmpTrace,
    Instance,
    amp_run,
    compare_amp_se,
    generate_instance,
    realized_spec,
)

__version__ = "0.1.0"
