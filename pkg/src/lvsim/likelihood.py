"""Likelihood functions and decision statistics for location verification.

Everything is computed in the natural-log domain.  Measurement input may
be a single (K, L) matrix (returns a float) or a stacked (N, K, L) batch
(returns an (N,) array); a 1-D length-K vector is treated as L = 1.

The alternative-hypothesis likelihood depends on the threat model: a
closed form for the far-field attacker, numerical marginalization over
the position prior for circle and annulus attackers, and a quadratic
(Laplace) approximation of that marginal around the posterior mode.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .adversary import (
    FarField,
    ThreatModel,
    UniformAnnulus,
    UniformCircle,
    boosted_attacker_means,
    sample_true_position,
)
from .model import ChannelParams, NetworkGeometry, as_point, claimed_means, mean_rss

__all__ = [
    "IntegrationSpec",
    "Decision",
    "default_integration",
    "prior_nodes",
    "log_lik_h0",
    "log_lik_h1_given_theta",
    "log_lik_h1_ffa",
    "log_lik_h1_marginal",
    "laplace_map_estimate",
    "laplace_log_evidence",
    "log_lik_h1_laplace",
    "laplace_statistics",
    "log_likelihood_ratio",
    "ffa_statistic",
    "ffa_gamma_from_log_threshold",
    "ffa_log_threshold_from_gamma",
    "decide",
]

_LOG_2PI = np.log(2.0 * np.pi)

# Trials per block when marginalizing a measurement batch; fixed so results
# do not depend on how work is split across threads.
_BATCH_CHUNK = 256


class Decision(enum.Enum):
    VERIFIED = "verified"
    NOT_VERIFIED = "not_verified"


@dataclass(frozen=True)
class IntegrationSpec:
    """How to evaluate the position-marginalized likelihood.

    polar-quadrature: Gauss-Legendre in squared radius x uniform angles
    (exact average over the uniform prior as node count grows).
    monte-carlo-prior: average over draws from the position prior.
    """

    method: str = "polar-quadrature"
    node_count: int = 32768
    rng_seed: int | None = None

    def __post_init__(self):
        if self.method not in ("polar-quadrature", "monte-carlo-prior"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.node_count < 256:
            raise ValueError("node_count must be at least 256")


def default_integration(model: ThreatModel) -> IntegrationSpec:
    """Default node budget: 256 angles on a circle, 128 x 256 polar grid
    on an annulus."""
    if isinstance(model, UniformCircle):
        return IntegrationSpec(node_count=256)
    if isinstance(model, UniformAnnulus):
        if model.inner_radius == model.outer_radius:
            return IntegrationSpec(node_count=256)
        return IntegrationSpec(node_count=128 * 256)
    raise ValueError("integration applies to circle and annulus models only")


def _as_batch(m, num_stations: int):
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != num_stations:
        raise ValueError(
            f"expected measurements with {num_stations} station rows, got shape "
            f"{np.asarray(m).shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("measurements must be finite")
    return arr, single


def _gauss_loglik(batch: np.ndarray, means: np.ndarray, sigma: float) -> np.ndarray:
    """Independent-normal log density, summed over stations and samples."""
    num_values = batch.shape[1] * batch.shape[2]
    resid = batch - means[None, :, None]
    quad = np.einsum("nkl,nkl->n", resid, resid)
    return -num_values * (np.log(sigma) + 0.5 * _LOG_2PI) - quad / (2.0 * sigma**2)


def log_lik_h0(m, geom: NetworkGeometry, params: ChannelParams):
    """Log likelihood of the measurements for a user at the claimed position."""
    batch, single = _as_batch(m, geom.num_stations)
    out = _gauss_loglik(batch, claimed_means(geom, params), params.shadowing_sigma_dB)
    return float(out[0]) if single else out


def log_lik_h1_given_theta(m, geom: NetworkGeometry, params: ChannelParams, true_pos):
    """Log likelihood for an optimally boosting attacker at a known position."""
    batch, single = _as_batch(m, geom.num_stations)
    means = boosted_attacker_means(geom, params, true_pos)
    out = _gauss_loglik(batch, means, params.shadowing_sigma_dB)
    return float(out[0]) if single else out


def log_lik_h1_ffa(m, geom: NetworkGeometry, params: ChannelParams):
    """Log likelihood for a far-field attacker: common mean at every station."""
    batch, single = _as_batch(m, geom.num_stations)
    mu_bar = float(np.mean(claimed_means(geom, params)))
    means = np.full(geom.num_stations, mu_bar)
    out = _gauss_loglik(batch, means, params.shadowing_sigma_dB)
    return float(out[0]) if single else out


def _is_circle(model: ThreatModel) -> bool:
    return isinstance(model, UniformCircle) or (
        isinstance(model, UniformAnnulus)
        and model.inner_radius == model.outer_radius
    )


def _circle_radius(model: ThreatModel) -> float:
    return model.radius if isinstance(model, UniformCircle) else model.inner_radius


def prior_nodes(model: ThreatModel, claimed, spec: IntegrationSpec):
    """Integration nodes and log weights for the position prior.

    Returns (points, log_weights) with weights summing to one, so the
    marginal likelihood is logsumexp(conditional + log_weights).
    """
    if isinstance(model, FarField):
        raise ValueError("far-field model needs no marginalization")
    center = as_point(claimed)
    if spec.method == "monte-carlo-prior":
        rng = np.random.default_rng(0 if spec.rng_seed is None else spec.rng_seed)
        pts = np.stack(
            [sample_true_position(model, center, rng) for _ in range(spec.node_count)]
        )
        logw = np.full(spec.node_count, -np.log(spec.node_count))
        return pts, logw
    if _is_circle(model):
        n = spec.node_count
        phi = 2.0 * np.pi * np.arange(n) / n
        pts = center + _circle_radius(model) * np.column_stack([np.cos(phi), np.sin(phi)])
        return pts, np.full(n, -np.log(n))
    # Annulus: substitute s = radius^2 so the uniform-area density is flat,
    # then Gauss-Legendre in s crossed with equally weighted angles.
    n_ang = int(round(np.sqrt(2.0 * spec.node_count)))
    n_rad = max(1, spec.node_count // n_ang)
    s_lo, s_hi = model.inner_radius**2, model.outer_radius**2
    x, w = np.polynomial.legendre.leggauss(n_rad)
    s = 0.5 * (x + 1.0) * (s_hi - s_lo) + s_lo
    w_s = 0.5 * w * (s_hi - s_lo)
    phi = 2.0 * np.pi * np.arange(n_ang) / n_ang
    radii = np.sqrt(s)
    pts = (
        center
        + radii[:, None, None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)[None]
    ).reshape(-1, 2)
    logw = np.repeat(np.log(w_s / (n_ang * (s_hi - s_lo))), n_ang)
    return pts, logw


def _node_means(
    geom: NetworkGeometry, params: ChannelParams, points: np.ndarray
) -> np.ndarray:
    """Boosted attacker mean vectors for many candidate positions: (J, K)."""
    diff = points[:, None, :] - geom.base_stations[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(dist <= 0.0):
        raise ValueError("integration node coincides with a base station")
    mu_t = mean_rss(params, dist)
    mu_bar_c = float(np.mean(claimed_means(geom, params)))
    return mu_t + (mu_bar_c - mu_t.mean(axis=1))[:, None]


def _conditional_logliks(
    batch: np.ndarray, geom: NetworkGeometry, params: ChannelParams, means: np.ndarray
) -> np.ndarray:
    """Log p(m | position node) for each trial x node, via one matrix product."""
    num_trials, num_stations, num_samples = batch.shape
    sigma = params.shadowing_sigma_dB
    inv_var = 1.0 / sigma**2
    sums = batch.sum(axis=2)
    sq = np.einsum("nkl,nkl->n", batch, batch)
    const = -num_stations * num_samples * (np.log(sigma) + 0.5 * _LOG_2PI)
    # Assemble in place: the (trials x nodes) product dominates memory.
    out = sums @ means.T
    out *= inv_var
    out += (const - 0.5 * inv_var * sq)[:, None]
    out -= (0.5 * inv_var * num_samples) * np.sum(means**2, axis=1)[None, :]
    return out


def log_lik_h1_marginal(
    m,
    geom: NetworkGeometry,
    params: ChannelParams,
    model: ThreatModel,
    spec: IntegrationSpec | None = None,
):
    """Log of the position-marginalized attacker likelihood,
    log integral of p(m|position) d prior, for circle and annulus models."""
    if isinstance(model, FarField):
        raise ValueError("far-field model has a closed form; use log_lik_h1_ffa")
    if spec is None:
        spec = default_integration(model)
    batch, single = _as_batch(m, geom.num_stations)
    points, logw = prior_nodes(model, geom.claimed, spec)
    means = _node_means(geom, params, points)
    weights = np.exp(logw)
    out = np.empty(batch.shape[0])
    for start in range(0, batch.shape[0], _BATCH_CHUNK):
        block = batch[start : start + _BATCH_CHUNK]
        ll = _conditional_logliks(block, geom, params, means)
        # Weighted log-sum-exp, reducing via one matrix-vector product.
        peak = ll.max(axis=1)
        np.subtract(ll, peak[:, None], out=ll)
        np.exp(ll, out=ll)
        out[start : start + _BATCH_CHUNK] = peak + np.log(ll @ weights)
    return float(out[0]) if single else out


def _on_circle(center: np.ndarray, radius: float, phi):
    phi = np.asarray(phi, dtype=float)
    return center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def _top_separated(points: np.ndarray, scores: np.ndarray, count: int, min_dist: float):
    """Best-scoring points, greedily enforcing pairwise separation."""
    picked = []
    for idx in np.argsort(scores)[::-1]:
        if all(np.hypot(*(points[idx] - points[j])) >= min_dist for j in picked):
            picked.append(idx)
        if len(picked) == count:
            break
    return points[picked]


def _theta_loglik_closures(batch, geom: NetworkGeometry, params: ChannelParams):
    """Fast per-position log likelihood for one measurement matrix, plus the
    same with its analytic gradient in polar coordinates (for L-BFGS-B)."""
    stations = geom.base_stations
    num_stations, num_samples = batch.shape[1], batch.shape[2]
    sums = batch[0].sum(axis=1)
    sq = float(np.sum(batch[0] ** 2))
    sigma = params.shadowing_sigma_dB
    inv2 = 1.0 / (2.0 * sigma**2)
    const = -num_stations * num_samples * (np.log(sigma) + 0.5 * _LOG_2PI)
    slope = 10.0 * params.path_loss_exponent
    mu_bar_c = float(np.mean(claimed_means(geom, params)))
    ref_p, ref_d = params.ref_power_dB, params.ref_distance_m
    center = geom.claimed

    def loglik(pos):
        diff = pos - stations
        d = np.maximum(np.hypot(diff[:, 0], diff[:, 1]), 1e-9)
        mu_t = ref_p - slope * np.log10(d / ref_d)
        nu = mu_t + (mu_bar_c - mu_t.mean())
        return const - inv2 * (sq - 2.0 * float(sums @ nu) + num_samples * float(nu @ nu))

    def negloglik_grad_polar(x):
        rho_, phi_ = x
        u = np.array([np.cos(phi_), np.sin(phi_)])
        diff = center + rho_ * u - stations
        d_sq = np.maximum(diff[:, 0] ** 2 + diff[:, 1] ** 2, 1e-18)
        mu_t = ref_p - 0.5 * slope * np.log10(d_sq / ref_d**2)
        nu = mu_t + (mu_bar_c - mu_t.mean())
        val = const - inv2 * (sq - 2.0 * float(sums @ nu) + num_samples * float(nu @ nu))
        resid = (sums - num_samples * nu) / sigma**2
        g = (-slope / np.log(10.0)) * diff / d_sq[:, None]
        grad_theta = g.T @ resid - g.mean(axis=0) * resid.sum()
        grad_rho = float(grad_theta @ u)
        grad_phi = rho_ * float(grad_theta[1] * u[0] - grad_theta[0] * u[1])
        return -val, np.array([-grad_rho, -grad_phi])

    return loglik, negloglik_grad_polar


_MAP_GRID_PHI = 2.0 * np.pi * np.arange(48) / 48
_MAP_GRID_RADII = 24


def _map_search_grid(model: ThreatModel, center: np.ndarray) -> np.ndarray:
    """Coarse start grid over the prior support."""
    if _is_circle(model):
        phi = 2.0 * np.pi * np.arange(256) / 256
        return _on_circle(center, _circle_radius(model), phi)
    radii = np.linspace(model.inner_radius, model.outer_radius, _MAP_GRID_RADII)
    return (
        center
        + radii[:, None, None]
        * np.stack([np.cos(_MAP_GRID_PHI), np.sin(_MAP_GRID_PHI)], axis=-1)[None]
    ).reshape(-1, 2)


def _refine_map(batch, geom, params, model, grid, grid_vals, num_starts):
    """Local refinement from the best coarse-grid nodes."""
    center = geom.claimed
    loglik, negloglik_grad_polar = _theta_loglik_closures(batch, geom, params)
    if _is_circle(model):
        radius = _circle_radius(model)
        best = grid[int(np.argmax(grid_vals))] - center
        phi0 = np.arctan2(best[1], best[0])
        step = 2.0 * np.pi / grid.shape[0]
        res = minimize_scalar(
            lambda p: -loglik(_on_circle(center, radius, p)),
            bounds=(phi0 - 2 * step, phi0 + 2 * step),
            method="bounded",
            options={"xatol": 1e-10},
        )
        return _on_circle(center, radius, float(res.x))
    r_lo, r_hi = model.inner_radius, model.outer_radius
    sep = (r_hi - r_lo) / 8.0 + 1e-9
    starts = _top_separated(grid, grid_vals, num_starts, sep)
    best_val, best_pt = np.inf, None
    for pt in starts:
        rel = pt - center
        x0 = np.array([np.hypot(rel[0], rel[1]), np.arctan2(rel[1], rel[0])])
        res = minimize(
            negloglik_grad_polar,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(r_lo, r_hi), (None, None)],
        )
        if res.fun < best_val:
            best_val, best_pt = res.fun, res.x
    rho_, phi_ = best_pt
    return center + rho_ * np.array([np.cos(phi_), np.sin(phi_)])


def laplace_map_estimate(
    m,
    geom: NetworkGeometry,
    params: ChannelParams,
    model: ThreatModel,
    num_starts: int = 4,
) -> np.ndarray:
    """Attacker position maximizing the posterior density over the prior
    support, found by a coarse grid plus multi-start local refinement.

    The prior is flat on its support, so this maximizes the conditional
    log likelihood restricted to the circle or annulus.
    """
    batch, single = _as_batch(m, geom.num_stations)
    if not single:
        raise ValueError("map estimate takes a single measurement matrix")
    if isinstance(model, FarField):
        raise ValueError("far-field model has no position posterior")
    grid = _map_search_grid(model, geom.claimed)
    vals = _conditional_logliks(batch, geom, params, _node_means(geom, params, grid))[0]
    return _refine_map(batch, geom, params, model, grid, vals, num_starts)


def laplace_log_evidence(log_integrand, x_max, step: float = 0.1) -> float:
    """Second-order estimate of log integral exp(log_integrand(x)) dx around
    an interior maximum x_max, with a central-difference Hessian.

    Raises ValueError when the Hessian is not negative definite.
    """
    x = np.asarray(x_max, dtype=float).ravel()
    dim = x.size
    f0 = float(log_integrand(x))
    hess = np.empty((dim, dim))
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = step
        hess[i, i] = (log_integrand(x + ei) - 2.0 * f0 + log_integrand(x - ei)) / step**2
        for j in range(i + 1, dim):
            ej = np.zeros(dim)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                log_integrand(x + ei + ej)
                - log_integrand(x + ei - ej)
                - log_integrand(x - ei + ej)
                + log_integrand(x - ei - ej)
            ) / (4.0 * step**2)
    if np.max(np.linalg.eigvalsh(hess)) >= 0.0:
        raise ValueError("Hessian at the mode is not negative definite")
    sign, logdet = np.linalg.slogdet(-hess)
    if sign <= 0:
        raise ValueError("Hessian at the mode is not negative definite")
    return f0 + 0.5 * (dim * _LOG_2PI - logdet)


def log_lik_h1_laplace(
    m,
    geom: NetworkGeometry,
    params: ChannelParams,
    model: ThreatModel,
    spec: IntegrationSpec | None = None,
    hessian_step: float = 0.1,
):
    """Laplace estimate of the marginal attacker log likelihood.

    Returns (value, fell_back).  When the posterior mode sits on the
    support boundary or the curvature check fails, the exact numerical
    marginal is returned instead and fell_back is True.
    """
    batch, single = _as_batch(m, geom.num_stations)
    if not single:
        raise ValueError("log_lik_h1_laplace takes a single measurement matrix")
    if isinstance(model, FarField):
        raise ValueError("far-field model has a closed form; use log_lik_h1_ffa")
    map_pt = laplace_map_estimate(m, geom, params, model)
    value = _laplace_log_value(batch, geom, params, model, map_pt, hessian_step)
    if value is None:
        return log_lik_h1_marginal(m, geom, params, model, spec), True
    return value, False


def _laplace_log_value(batch, geom, params, model, map_pt, hessian_step):
    """Laplace log marginal at a posterior mode, or None when the mode is
    on the support boundary or the curvature check fails."""
    loglik, _ = _theta_loglik_closures(batch, geom, params)
    if _is_circle(model):
        radius = _circle_radius(model)
        rel = map_pt - geom.claimed
        phi0 = np.arctan2(rel[1], rel[0])
        log_prior = -np.log(2.0 * np.pi * radius)

        def integrand(s):
            # Arc-length parameterization along the circle.
            return loglik(_on_circle(geom.claimed, radius, phi0 + s[0] / radius)) + log_prior

        try:
            return laplace_log_evidence(integrand, [0.0], step=hessian_step)
        except ValueError:
            return None

    rel = map_pt - geom.claimed
    rho_hat = float(np.hypot(rel[0], rel[1]))
    if (
        rho_hat - model.inner_radius < hessian_step
        or model.outer_radius - rho_hat < hessian_step
    ):
        return None
    log_prior = -np.log(np.pi * (model.outer_radius**2 - model.inner_radius**2))

    def integrand(point):
        return loglik(np.asarray(point, dtype=float)) + log_prior

    try:
        return laplace_log_evidence(integrand, map_pt, step=hessian_step)
    except ValueError:
        return None


def laplace_statistics(
    m,
    geom: NetworkGeometry,
    params: ChannelParams,
    model: ThreatModel,
    spec: IntegrationSpec | None = None,
    hessian_step: float = 0.1,
    num_starts: int = 4,
):
    """Batched Laplace log marginals: (values, fell_back flags).

    Shares one coarse start grid across all trials and resolves every
    boundary / degenerate trial with a single batched numerical marginal.
    """
    if isinstance(model, FarField):
        raise ValueError("far-field model has a closed form; use log_lik_h1_ffa")
    batch, single = _as_batch(m, geom.num_stations)
    grid = _map_search_grid(model, geom.claimed)
    grid_means = _node_means(geom, params, grid)
    values = np.empty(batch.shape[0])
    flags = np.zeros(batch.shape[0], dtype=bool)
    for start in range(0, batch.shape[0], _BATCH_CHUNK):
        block = batch[start : start + _BATCH_CHUNK]
        grid_vals = _conditional_logliks(block, geom, params, grid_means)
        for i in range(block.shape[0]):
            one = block[i : i + 1]
            map_pt = _refine_map(one, geom, params, model, grid, grid_vals[i], num_starts)
            value = _laplace_log_value(one, geom, params, model, map_pt, hessian_step)
            if value is None:
                flags[start + i] = True
            else:
                values[start + i] = value
    if np.any(flags):
        values[flags] = log_lik_h1_marginal(batch[flags], geom, params, model, spec)
    if single:
        return float(values[0]), bool(flags[0])
    return values, flags


def ffa_statistic(m, geom: NetworkGeometry, params: ChannelParams):
    """Linear far-field statistic: sum over stations and samples of
    m_il * (mean(mu_c) - mu_c_i)."""
    batch, single = _as_batch(m, geom.num_stations)
    mu_c = claimed_means(geom, params)
    weights = np.mean(mu_c) - mu_c
    out = batch.sum(axis=2) @ weights
    return float(out[0]) if single else out


def _mean_spread(geom: NetworkGeometry, params: ChannelParams) -> float:
    mu_c = claimed_means(geom, params)
    return float(np.sum((mu_c - np.mean(mu_c)) ** 2))


def ffa_gamma_from_log_threshold(
    log_threshold, geom: NetworkGeometry, params: ChannelParams, num_samples: int = 1
):
    """Map a log ratio threshold to the linear-statistic threshold:

        Gamma = sigma^2 * ln(T) - (L/2) * sum_i (mu_c_i - mean(mu_c))^2

    Strictly increasing in the threshold; inverse below.
    """
    ln_t = np.asarray(log_threshold, dtype=float)
    sigma = params.shadowing_sigma_dB
    out = sigma**2 * ln_t - 0.5 * num_samples * _mean_spread(geom, params)
    return float(out) if out.ndim == 0 else out


def ffa_log_threshold_from_gamma(
    gamma, geom: NetworkGeometry, params: ChannelParams, num_samples: int = 1
):
    """Inverse of ffa_gamma_from_log_threshold."""
    g = np.asarray(gamma, dtype=float)
    sigma = params.shadowing_sigma_dB
    out = (g + 0.5 * num_samples * _mean_spread(geom, params)) / sigma**2
    return float(out) if out.ndim == 0 else out


def log_likelihood_ratio(
    m,
    geom: NetworkGeometry,
    params: ChannelParams,
    kind: str = "exact",
    threat: ThreatModel | None = None,
    true_pos=None,
    spec: IntegrationSpec | None = None,
):
    """Log likelihood ratio log p(m|attacker) - log p(m|claimed position).

    kind "far_field" uses the common-mean attacker likelihood; "exact"
    uses the threat model's marginal (or the conditional likelihood when
    a diagnostic true_pos is given); "laplace" uses the quadratic
    approximation of the marginal, falling back to it when degenerate.
    """
    h0 = log_lik_h0(m, geom, params)
    if kind == "far_field":
        return log_lik_h1_ffa(m, geom, params) - h0
    if kind == "exact":
        if true_pos is not None:
            return log_lik_h1_given_theta(m, geom, params, true_pos) - h0
        if threat is None:
            raise ValueError("exact kind needs a threat model or true_pos")
        if isinstance(threat, FarField):
            return log_lik_h1_ffa(m, geom, params) - h0
        return log_lik_h1_marginal(m, geom, params, threat, spec) - h0
    if kind == "laplace":
        if threat is None:
            raise ValueError("laplace kind needs a threat model")
        value, _ = log_lik_h1_laplace(m, geom, params, threat, spec)
        return value - h0
    raise ValueError(f"unknown likelihood-ratio kind {kind!r}")


def decide(statistic: float, threshold: float) -> Decision:
    """Reject (NOT_VERIFIED) iff the statistic reaches the threshold."""
    return Decision.NOT_VERIFIED if statistic >= threshold else Decision.VERIFIED
