"""lvsim: information-theoretic location verification.

Synthesizes RSS measurements under legitimate and spoofing hypotheses,
evaluates likelihood-ratio decision rules under several attacker-position
models, and finds thresholds that maximize the mutual information between
the user's type and the verification decision.
"""

from .adversary import (
    FAR_AWAY,
    FarField,
    ThreatModel,
    UniformAnnulus,
    UniformCircle,
    boosted_attacker_means,
    is_far_away,
    kl_divergence_h0_vs_h1,
    optimal_power_boost,
    rho,
    rho_star,
    sample_true_position,
    validate_threat,
)
from .infotheory import (
    BayesCost,
    DegenerateRuleError,
    ThresholdResult,
    bayes_cost,
    binary_entropy,
    conditional_entropy,
    default_log_threshold_grid,
    ffa_alpha,
    ffa_beta,
    ffa_rate_curve,
    ffa_statistic_moments,
    misclassification,
    mutual_information,
    nmi,
    optimize_threshold,
    q_function,
)
from .likelihood import (
    Decision,
    IntegrationSpec,
    decide,
    default_integration,
    ffa_gamma_from_log_threshold,
    ffa_log_threshold_from_gamma,
    ffa_statistic,
    laplace_log_evidence,
    laplace_map_estimate,
    log_lik_h0,
    log_lik_h1_ffa,
    log_lik_h1_given_theta,
    log_lik_h1_laplace,
    log_lik_h1_marginal,
    log_likelihood_ratio,
    prior_nodes,
)
from .model import (
    ChannelParams,
    NetworkGeometry,
    PriorParams,
    claimed_means,
    distance,
    mean_rss,
    sample_far_field,
    sample_legitimate,
    sample_malicious,
)
from .simulator import (
    ExperimentConfig,
    RandomSquareGeometry,
    RocCurve,
    SweepResult,
    config_digest,
    derive_rng,
    estimate_rates,
    nmi_sweep_comparison,
    rates_from_statistics,
    resolve_geometry,
    roc_curve,
    roc_from_statistics,
    rule_statistics,
    synthesize_measurements,
)

__version__ = "0.1.0"
