"""Binary-channel information measures and threshold optimization.

The verification system is a binary channel from user type (legitimate /
malicious) to decision (verified / not verified), characterized by the
false positive rate alpha and detection rate beta.  Mutual information
between input and output, normalized by the input entropy, is the main
objective; misclassification probability and a general two-cost Bayes
objective are provided for comparison.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfc, xlogy

from .likelihood import ffa_gamma_from_log_threshold
from .model import ChannelParams, NetworkGeometry, claimed_means

__all__ = [
    "DegenerateRuleError",
    "BayesCost",
    "ThresholdResult",
    "q_function",
    "binary_entropy",
    "conditional_entropy",
    "mutual_information",
    "nmi",
    "misclassification",
    "bayes_cost",
    "ffa_statistic_moments",
    "ffa_alpha",
    "ffa_beta",
    "ffa_rate_curve",
    "default_log_threshold_grid",
    "optimize_threshold",
]

_LN2 = np.log(2.0)


class DegenerateRuleError(ValueError):
    """The decision statistic carries no information for this geometry."""


def q_function(x):
    """Standard normal tail probability Q(x) = P(Z > x)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(x / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def binary_entropy(p):
    """Entropy in bits of a Bernoulli(p) variable, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    out = -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)) / _LN2
    return float(out) if out.ndim == 0 else out


def _joint(p0, alpha, beta):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    # Entries (x, y): x = 0 legitimate / 1 malicious, y = 0 verified / 1 rejected.
    return (
        p0 * (1.0 - alpha),
        p0 * alpha,
        (1.0 - p0) * (1.0 - beta),
        (1.0 - p0) * beta,
    )


def conditional_entropy(p0, alpha, beta):
    """H(user type | decision) in bits, for scalar or array rates."""
    p00, p01, p10, p11 = _joint(p0, alpha, beta)
    h_joint = -(xlogy(p00, p00) + xlogy(p01, p01) + xlogy(p10, p10) + xlogy(p11, p11))
    py0, py1 = p00 + p10, p01 + p11
    h_y = -(xlogy(py0, py0) + xlogy(py1, py1))
    out = (h_joint - h_y) / _LN2
    return float(out) if np.ndim(out) == 0 else out


def mutual_information(p0, alpha, beta):
    """I(user type; decision) in bits; zero when alpha equals beta."""
    h_x = binary_entropy(p0)
    out = np.clip(h_x - conditional_entropy(p0, alpha, beta), 0.0, h_x)
    return float(out) if np.ndim(out) == 0 else out


def nmi(p0, alpha, beta):
    """Mutual information normalized by the input entropy, in [0, 1]."""
    out = mutual_information(p0, alpha, beta) / binary_entropy(p0)
    return float(out) if np.ndim(out) == 0 else out


def misclassification(p0, alpha, beta):
    """Probability of a wrong decision: p0 * alpha + (1 - p0) * (1 - beta)."""
    out = p0 * np.asarray(alpha, dtype=float) + (1.0 - p0) * (
        1.0 - np.asarray(beta, dtype=float)
    )
    return float(out) if out.ndim == 0 else out


def bayes_cost(p0, alpha, beta, cost_reject_legitimate, cost_accept_malicious):
    """Average cost with per-error costs; reduces to misclassification for
    unit costs."""
    out = p0 * np.asarray(alpha, dtype=float) * cost_reject_legitimate + (
        1.0 - p0
    ) * (1.0 - np.asarray(beta, dtype=float)) * cost_accept_malicious
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BayesCost:
    """Two-cost objective: cost of rejecting a legitimate user and cost of
    accepting a malicious one."""

    cost_reject_legitimate: float
    cost_accept_malicious: float

    def __post_init__(self):
        if self.cost_reject_legitimate <= 0 or self.cost_accept_malicious <= 0:
            raise ValueError("costs must be positive")


def ffa_statistic_moments(
    geom: NetworkGeometry, params: ChannelParams, num_samples: int = 1
):
    """(mean under H0, mean under H1, common std) of the linear far-field
    statistic.  Raises DegenerateRuleError when all claimed means coincide."""
    mu_c = claimed_means(geom, params)
    spread = float(np.sum((mu_c - np.mean(mu_c)) ** 2))
    if spread <= 0.0:
        raise DegenerateRuleError(
            "claimed means are identical; the far-field statistic is constant"
        )
    std = np.sqrt(num_samples * spread) * params.shadowing_sigma_dB
    return -num_samples * spread, 0.0, std


def ffa_alpha(gamma, geom: NetworkGeometry, params: ChannelParams, num_samples: int = 1):
    """Analytic false positive rate of the linear far-field rule at
    statistic threshold gamma."""
    mean_h0, _, std = ffa_statistic_moments(geom, params, num_samples)
    return q_function((np.asarray(gamma, dtype=float) - mean_h0) / std)


def ffa_beta(gamma, geom: NetworkGeometry, params: ChannelParams, num_samples: int = 1):
    """Analytic detection rate of the linear far-field rule at statistic
    threshold gamma."""
    _, mean_h1, std = ffa_statistic_moments(geom, params, num_samples)
    return q_function((np.asarray(gamma, dtype=float) - mean_h1) / std)


def ffa_rate_curve(geom: NetworkGeometry, params: ChannelParams, num_samples: int = 1):
    """Vectorized log-ratio-threshold -> (alpha, beta) callable for the
    analytic far-field rates."""
    ffa_statistic_moments(geom, params, num_samples)  # fail fast if degenerate

    def rates(log_threshold):
        gamma = ffa_gamma_from_log_threshold(log_threshold, geom, params, num_samples)
        return (
            ffa_alpha(gamma, geom, params, num_samples),
            ffa_beta(gamma, geom, params, num_samples),
        )

    return rates


def default_log_threshold_grid() -> np.ndarray:
    """201 points uniform in the log ratio threshold over [-25, 25]."""
    return np.linspace(-25.0, 25.0, 201)


def _objective(objective, p0):
    """Map an objective spec to (function of (alpha, beta), maximize flag)."""
    if objective == "nmi":
        return lambda a, b: nmi(p0, a, b), True
    if objective == "pe":
        return lambda a, b: misclassification(p0, a, b), False
    if isinstance(objective, BayesCost):
        return (
            lambda a, b: bayes_cost(
                p0, a, b, objective.cost_reject_legitimate, objective.cost_accept_malicious
            ),
            False,
        )
    raise ValueError(f"unknown objective {objective!r}")


@dataclass
class ThresholdResult:
    """Optimal threshold plus the full (threshold, alpha, beta, NMI, Pe)
    curve it was selected from."""

    optimal_log_threshold: float
    objective_value: float
    objective: object
    curve: dict = field(repr=False)


def optimize_threshold(curve_source, p0, objective="nmi", log_thresholds=None):
    """Pick the log threshold optimizing an objective over a rate curve.

    curve_source is either a callable log_threshold -> (alpha, beta),
    vectorized, in which case the grid optimum is refined by golden-section
    search on the winning bracket, or a precomputed (log_thresholds, alpha,
    beta) triple, in which case the grid optimum is returned as is (no
    refinement, to avoid chasing Monte Carlo noise).
    """
    if callable(curve_source):
        grid = default_log_threshold_grid() if log_thresholds is None else np.asarray(
            log_thresholds, dtype=float
        )
        alpha, beta = curve_source(grid)
    else:
        grid, alpha, beta = (np.asarray(v, dtype=float) for v in curve_source)
        if log_thresholds is not None:
            raise ValueError("log_thresholds only applies to callable sources")
    if grid.size == 0:
        raise ValueError("threshold grid is empty")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("threshold grid must be strictly increasing")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), grid.shape)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), grid.shape)

    fn, maximize = _objective(objective, p0)
    values = fn(alpha, beta)
    best = int(np.argmax(values) if maximize else np.argmin(values))
    best_t, best_val = float(grid[best]), float(values[best])

    if callable(curve_source) and 0 < best < grid.size - 1:
        sign = -1.0 if maximize else 1.0

        def scalar_obj(t):
            a, b = curve_source(np.asarray([t]))
            return sign * float(fn(np.asarray(a)[0], np.asarray(b)[0]))

        try:
            res = minimize_scalar(
                scalar_obj,
                bracket=(grid[best - 1], grid[best], grid[best + 1]),
                method="golden",
                options={"xtol": 1e-10},
            )
            if np.isfinite(res.x) and res.fun <= sign * best_val + 1e-15:
                best_t, best_val = float(res.x), float(sign * res.fun)
        except ValueError:
            pass  # flat bracket; keep the grid optimum

    curve = {
        "log_threshold": grid,
        "alpha": alpha,
        "beta": beta,
        "nmi": nmi(p0, alpha, beta),
        "pe": misclassification(p0, alpha, beta),
    }
    return ThresholdResult(best_t, best_val, objective, curve)
