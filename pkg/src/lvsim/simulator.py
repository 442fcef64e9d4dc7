"""Seeded Monte Carlo engine for rate estimation, NMI sweeps, and ROC curves.

Every experiment is driven by a single 64-bit seed.  Per-trial generators
are derived by counter-based splitting (seed, stream tag, trial index), so
results are bit-reproducible regardless of how work is split across
threads, and the same noise realizations can be replayed under different
decision rules (common random numbers).
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adversary import (
    FarField,
    ThreatModel,
    UniformAnnulus,
    UniformCircle,
    sample_true_position,
    validate_threat,
)
from .infotheory import (
    ffa_statistic_moments,
    misclassification,
    nmi,
    default_log_threshold_grid,
    optimize_threshold,
)
from .likelihood import (
    IntegrationSpec,
    default_integration,
    ffa_gamma_from_log_threshold,
    ffa_statistic,
    log_lik_h0,
    log_lik_h1_ffa,
    log_lik_h1_laplace,
    log_lik_h1_marginal,
)
from .model import (
    ChannelParams,
    NetworkGeometry,
    PriorParams,
    as_point,
    max_perpendicular_deviation,
    sample_far_field,
    sample_legitimate,
    sample_malicious,
)

__all__ = [
    "RULE_KINDS",
    "RandomSquareGeometry",
    "ExperimentConfig",
    "SweepResult",
    "RocCurve",
    "derive_rng",
    "resolve_geometry",
    "config_digest",
    "synthesize_measurements",
    "rule_statistics",
    "rates_from_statistics",
    "estimate_rates",
    "roc_curve",
    "roc_from_statistics",
    "nmi_sweep_comparison",
]

RULE_KINDS = ("exact", "far_field", "laplace", "far_field_linear")

# Stream tags for counter-based RNG derivation.
_GEOMETRY_STREAM = 0
_H0_NOISE_STREAM = 1
_H1_NOISE_STREAM = 2
_H1_POSITION_STREAM = 3

# Fixed work-chunk size: parallelism must not change results.
_CHUNK = 256

# Geometries closer than this to a line are redrawn (meters).
_COLLINEARITY_TOL = 1.0


def derive_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream tag, counter index)."""
    mask = (1 << 64) - 1
    return np.random.default_rng(
        np.random.SeedSequence([int(seed) & mask, int(stream), int(index)])
    )


@dataclass(frozen=True)
class RandomSquareGeometry:
    """Stations drawn uniformly in a square of the given side length
    centered on the claimed position."""

    num_stations: int
    side: float = 200.0
    claimed: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.num_stations <= 2:
            raise ValueError("need more than 2 stations")
        if self.side <= 0:
            raise ValueError("side must be positive")


def resolve_geometry(spec, seed: int, replicate: int = 0) -> NetworkGeometry:
    """Materialize a geometry spec; random layouts are seeded and redrawn
    until comfortably non-collinear."""
    if isinstance(spec, NetworkGeometry):
        return spec
    if not isinstance(spec, RandomSquareGeometry):
        raise TypeError(f"unknown geometry spec {type(spec).__name__}")
    rng = derive_rng(seed, _GEOMETRY_STREAM, replicate)
    claimed = as_point(spec.claimed)
    half = spec.side / 2.0
    while True:
        pts = claimed + rng.uniform(-half, half, size=(spec.num_stations, 2))
        if max_perpendicular_deviation(pts) <= _COLLINEARITY_TOL:
            continue
        try:
            return NetworkGeometry(pts, claimed)
        except ValueError:
            continue


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one seeded rate-estimation experiment."""

    geometry: "NetworkGeometry | RandomSquareGeometry"
    channel: ChannelParams = ChannelParams()
    priors: PriorParams = PriorParams()
    threat: ThreatModel = FarField()
    rule: str = "exact"
    samples_per_station: int = 1
    trials: int = 10000
    seed: int = 42
    log_thresholds: np.ndarray = field(default_factory=default_log_threshold_grid)
    integration: IntegrationSpec | None = None
    threads: int = 1
    geometry_replicate: int = 0

    def __post_init__(self):
        grid = np.asarray(self.log_thresholds, dtype=float).copy()
        grid.setflags(write=False)
        object.__setattr__(self, "log_thresholds", grid)
        if self.rule not in RULE_KINDS:
            raise ValueError(f"rule must be one of {RULE_KINDS}, got {self.rule!r}")
        if self.trials < 1000:
            raise ValueError("trials must be at least 1000 for rate estimation")
        if self.samples_per_station < 1:
            raise ValueError("samples_per_station must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        k = self.geometry.num_stations
        if not 4 <= k <= 64:
            raise ValueError(f"station count must be in [4, 64], got {k}")
        if grid.size == 0 or (grid.size > 1 and not np.all(np.diff(grid) > 0)):
            raise ValueError("log_thresholds must be non-empty and strictly increasing")
        if self.rule == "laplace" and isinstance(self.threat, FarField):
            raise ValueError("laplace rule needs a circle or annulus threat model")


def _config_payload(config: ExperimentConfig) -> dict:
    geom = config.geometry
    if isinstance(geom, NetworkGeometry):
        geom_part = {
            "base_stations": geom.base_stations.tolist(),
            "claimed": geom.claimed.tolist(),
        }
    else:
        geom_part = {
            "random_square": {
                "num_stations": geom.num_stations,
                "side": geom.side,
                "claimed": list(geom.claimed),
            }
        }
    threat = config.threat
    if isinstance(threat, FarField):
        threat_part = {"model": "far_field"}
    elif isinstance(threat, UniformCircle):
        threat_part = {"model": "circle", "radius": threat.radius}
    elif isinstance(threat, UniformAnnulus):
        threat_part = {
            "model": "annulus",
            "inner_radius": threat.inner_radius,
            "outer_radius": threat.outer_radius,
        }
    else:
        threat_part = {"model": type(threat).__name__}
    spec = config.integration
    return {
        "geometry": geom_part,
        "channel": {
            "ref_power_dB": config.channel.ref_power_dB,
            "ref_distance_m": config.channel.ref_distance_m,
            "gamma": config.channel.path_loss_exponent,
            "sigma_dB": config.channel.shadowing_sigma_dB,
        },
        "priors": {"p0": config.priors.legitimate},
        "threat": threat_part,
        "rule": config.rule,
        "samples_per_station": config.samples_per_station,
        "trials": config.trials,
        "seed": config.seed,
        "log_thresholds": config.log_thresholds.tolist(),
        "integration": None
        if spec is None
        else {"method": spec.method, "node_count": spec.node_count, "rng_seed": spec.rng_seed},
        "geometry_replicate": config.geometry_replicate,
    }


def config_digest(config: ExperimentConfig) -> str:
    """Stable short hash of everything that affects the results."""
    blob = json.dumps(_config_payload(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def synthesize_measurements(config: ExperimentConfig, geom: NetworkGeometry):
    """Per-trial measurement batches (trials, K, L) under each hypothesis."""
    k, num_samples = geom.num_stations, config.samples_per_station
    channel, threat = config.channel, config.threat
    m0 = np.empty((config.trials, k, num_samples))
    for t in range(config.trials):
        rng = derive_rng(config.seed, _H0_NOISE_STREAM, t)
        m0[t] = sample_legitimate(geom, channel, num_samples, rng)
    m1 = np.empty((config.trials, k, num_samples))
    if isinstance(threat, FarField):
        for t in range(config.trials):
            rng = derive_rng(config.seed, _H1_NOISE_STREAM, t)
            m1[t] = sample_far_field(geom, channel, num_samples, rng)
    else:
        for t in range(config.trials):
            pos_rng = derive_rng(config.seed, _H1_POSITION_STREAM, t)
            pos = sample_true_position(threat, geom.claimed, pos_rng)
            rng = derive_rng(config.seed, _H1_NOISE_STREAM, t)
            m1[t] = sample_malicious(geom, channel, pos, num_samples, rng)
    return m0, m1


def _map_chunks(fn, total: int, threads: int):
    spans = [(s, min(s + _CHUNK, total)) for s in range(0, total, _CHUNK)]
    if threads <= 1 or len(spans) == 1:
        for span in spans:
            fn(*span)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda span: fn(*span), spans))


def rule_statistics(
    batch: np.ndarray,
    geom: NetworkGeometry,
    config: ExperimentConfig,
    rule: str | None = None,
):
    """Decision statistic per trial for a measurement batch.

    Log likelihood ratios for the "exact", "far_field" and "laplace"
    rules; the raw linear statistic for "far_field_linear".  Returns
    (values, extras) where extras records Laplace fallbacks.
    """
    rule = config.rule if rule is None else rule
    channel, threat = config.channel, config.threat
    extras: dict = {}
    if rule == "far_field":
        return log_lik_h1_ffa(batch, geom, channel) - log_lik_h0(batch, geom, channel), extras
    if rule == "far_field_linear":
        return ffa_statistic(batch, geom, channel), extras
    if rule == "exact":
        if isinstance(threat, FarField):
            return (
                log_lik_h1_ffa(batch, geom, channel) - log_lik_h0(batch, geom, channel),
                extras,
            )
        spec = config.integration or default_integration(threat)
        out = np.empty(batch.shape[0])

        def run_exact(lo, hi):
            out[lo:hi] = log_lik_h1_marginal(
                batch[lo:hi], geom, channel, threat, spec
            ) - log_lik_h0(batch[lo:hi], geom, channel)

        _map_chunks(run_exact, batch.shape[0], config.threads)
        return out, extras
    if rule == "laplace":
        spec = config.integration or default_integration(threat)
        out = np.empty(batch.shape[0])
        flags = np.zeros(batch.shape[0], dtype=bool)

        def run_laplace(lo, hi):
            for t in range(lo, hi):
                value, fell_back = log_lik_h1_laplace(batch[t], geom, channel, threat, spec)
                out[t] = value - log_lik_h0(batch[t], geom, channel)
                flags[t] = fell_back

        _map_chunks(run_laplace, batch.shape[0], config.threads)
        extras["laplace_fallback_rate"] = float(flags.mean())
        return out, extras
    raise ValueError(f"unknown rule {rule!r}")


def rates_from_statistics(stats_h0, stats_h1, thresholds):
    """Empirical (alpha, beta) at each threshold: reject iff stat >= t."""
    stats_h0 = np.asarray(stats_h0, dtype=float)
    stats_h1 = np.asarray(stats_h1, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    alpha = np.mean(stats_h0[:, None] >= thr[None, :], axis=0)
    beta = np.mean(stats_h1[:, None] >= thr[None, :], axis=0)
    return alpha, beta


@dataclass
class SweepResult:
    """Empirical rates over a threshold grid, with binomial standard errors
    and derived NMI / misclassification values."""

    log_thresholds: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    alpha_se: np.ndarray
    beta_se: np.ndarray
    nmi: np.ndarray
    pe: np.ndarray
    rule: str
    trials: int
    seed: int
    priors: PriorParams
    config_digest: str
    extras: dict = field(default_factory=dict)

    def optimal(self, objective="nmi"):
        """Grid optimum of an objective over this (noisy) curve."""
        return optimize_threshold(
            (self.log_thresholds, self.alpha, self.beta),
            self.priors.legitimate,
            objective,
        )

    def rows(self):
        for i in range(self.log_thresholds.size):
            yield {
                "log_threshold": float(self.log_thresholds[i]),
                "alpha": float(self.alpha[i]),
                "alpha_se": float(self.alpha_se[i]),
                "beta": float(self.beta[i]),
                "beta_se": float(self.beta_se[i]),
                "nmi": float(self.nmi[i]),
                "pe": float(self.pe[i]),
            }


def _sweep_from_statistics(
    config: ExperimentConfig,
    geom: NetworkGeometry,
    rule: str,
    stats0: np.ndarray,
    stats1: np.ndarray,
    extras: dict,
) -> SweepResult:
    thr = config.log_thresholds
    if rule == "far_field_linear":
        thr_stat = ffa_gamma_from_log_threshold(
            thr, geom, config.channel, config.samples_per_station
        )
    else:
        thr_stat = thr
    alpha, beta = rates_from_statistics(stats0, stats1, thr_stat)
    n = config.trials
    p0 = config.priors.legitimate
    return SweepResult(
        log_thresholds=thr.copy(),
        alpha=alpha,
        beta=beta,
        alpha_se=np.sqrt(alpha * (1.0 - alpha) / n),
        beta_se=np.sqrt(beta * (1.0 - beta) / n),
        nmi=nmi(p0, alpha, beta),
        pe=misclassification(p0, alpha, beta),
        rule=rule,
        trials=n,
        seed=config.seed,
        priors=config.priors,
        config_digest=config_digest(config),
        extras=extras,
    )


def _check_rule_geometry(config: ExperimentConfig, geom: NetworkGeometry, rule: str):
    validate_threat(config.threat, geom)
    if rule in ("far_field", "far_field_linear"):
        # Raises DegenerateRuleError for symmetric layouts.
        ffa_statistic_moments(geom, config.channel, config.samples_per_station)


def estimate_rates(config: ExperimentConfig) -> SweepResult:
    """Monte Carlo (alpha, beta, NMI, Pe) over the config's threshold grid."""
    geom = resolve_geometry(config.geometry, config.seed, config.geometry_replicate)
    _check_rule_geometry(config, geom, config.rule)
    m0, m1 = synthesize_measurements(config, geom)
    stats0, extras0 = rule_statistics(m0, geom, config)
    stats1, extras1 = rule_statistics(m1, geom, config)
    extras = {f"h0_{k}": v for k, v in extras0.items()}
    extras.update({f"h1_{k}": v for k, v in extras1.items()})
    return _sweep_from_statistics(config, geom, config.rule, stats0, stats1, extras)


@dataclass
class RocCurve:
    """Raw operating points swept over statistic-quantile thresholds,
    sorted by increasing false positive rate."""

    alpha: np.ndarray
    beta: np.ndarray
    thresholds: np.ndarray
    rule: str
    extras: dict = field(default_factory=dict)


def roc_curve(config: ExperimentConfig, resolution: int = 101) -> RocCurve:
    """ROC estimated at `resolution` quantiles of the pooled statistic."""
    geom = resolve_geometry(config.geometry, config.seed, config.geometry_replicate)
    _check_rule_geometry(config, geom, config.rule)
    m0, m1 = synthesize_measurements(config, geom)
    stats0, extras0 = rule_statistics(m0, geom, config)
    stats1, extras1 = rule_statistics(m1, geom, config)
    return roc_from_statistics(stats0, stats1, resolution, config.rule, {**extras0, **extras1})


def roc_from_statistics(
    stats0, stats1, resolution: int = 101, rule: str = "", extras: dict | None = None
) -> RocCurve:
    pooled = np.concatenate([np.asarray(stats0, float), np.asarray(stats1, float)])
    thr = np.quantile(pooled, np.linspace(0.0, 1.0, resolution))
    thr = np.append(thr, pooled.max() + 1.0)  # closes the curve at (0, 0)
    alpha, beta = rates_from_statistics(stats0, stats1, thr)
    order = np.argsort(alpha, kind="stable")
    return RocCurve(
        alpha=alpha[order],
        beta=beta[order],
        thresholds=thr[order],
        rule=rule,
        extras=extras or {},
    )


def nmi_sweep_comparison(config: ExperimentConfig, rules=("exact", "far_field")):
    """Evaluate several rules on identical measurement realizations.

    Returns {rule: SweepResult}; the shared noise makes threshold-location
    comparisons between rules far less sensitive to Monte Carlo error.
    """
    geom = resolve_geometry(config.geometry, config.seed, config.geometry_replicate)
    results: dict[str, SweepResult] = {}
    for rule in rules:
        _check_rule_geometry(config, geom, rule)
    m0, m1 = synthesize_measurements(config, geom)
    for rule in rules:
        stats0, extras0 = rule_statistics(m0, geom, config, rule)
        stats1, extras1 = rule_statistics(m1, geom, config, rule)
        extras = {f"h0_{k}": v for k, v in extras0.items()}
        extras.update({f"h1_{k}": v for k, v in extras1.items()})
        extras["common_random_numbers"] = True
        results[rule] = _sweep_from_statistics(config, geom, rule, stats0, stats1, extras)
    return results
