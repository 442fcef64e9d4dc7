"""Attacker strategy and threat-model position priors.

Three priors on the attacker's true position relative to the claimed one:
effectively infinite distance (far field), uniform on a circle, and
uniform over an annulus.  The attacker always transmits with the power
boost that minimizes the KL divergence from the legitimate measurement
distribution.
"""

from dataclasses import dataclass

import numpy as np

from .model import ChannelParams, NetworkGeometry, as_point, claimed_means, mean_rss

__all__ = [
    "ThreatModel",
    "FarField",
    "UniformCircle",
    "UniformAnnulus",
    "FAR_AWAY",
    "is_far_away",
    "optimal_power_boost",
    "boosted_attacker_means",
    "kl_divergence_h0_vs_h1",
    "rho_star",
    "rho",
    "sample_true_position",
    "validate_threat",
]


class ThreatModel:
    """Base class for attacker-position priors."""


@dataclass(frozen=True)
class FarField(ThreatModel):
    """Attacker at effectively infinite distance: every station sees the
    same mean RSS."""


@dataclass(frozen=True)
class UniformCircle(ThreatModel):
    """Attacker uniformly distributed on a circle centered at the claimed
    position."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class UniformAnnulus(ThreatModel):
    """Attacker uniform over the annulus inner_radius <= d <= outer_radius
    around the claimed position.  Equal radii degenerate to the circle."""

    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        if not 0 < self.inner_radius <= self.outer_radius:
            raise ValueError("need 0 < inner_radius <= outer_radius")


#: Marker position returned for the far-field model: measurement synthesis
#: should use sample_far_field rather than a finite attacker position.
FAR_AWAY = np.array([np.inf, np.inf])
FAR_AWAY.setflags(write=False)


def is_far_away(point) -> bool:
    return bool(np.all(np.isinf(np.asarray(point, dtype=float))))


def optimal_power_boost(
    geom: NetworkGeometry, params: ChannelParams, true_pos
) -> float:
    """Transmit-power boost (dB) minimizing the KL divergence between the
    legitimate and spoofed measurement distributions.

    Equals the mean over stations of (claimed mean - true-position mean);
    zero when the true position matches the claim.
    """
    d_true = geom.distances_to(true_pos)
    if np.any(d_true <= 0.0):
        raise ValueError("true position coincides with a base station")
    mu_t = mean_rss(params, d_true)
    return float(np.mean(claimed_means(geom, params) - mu_t))


def boosted_attacker_means(
    geom: NetworkGeometry, params: ChannelParams, true_pos
) -> np.ndarray:
    """Per-station mean RSS from an attacker at true_pos applying the
    optimal boost:  mu_t_i + mean(mu_c) - mean(mu_t)."""
    d_true = geom.distances_to(true_pos)
    if np.any(d_true <= 0.0):
        raise ValueError("true position coincides with a base station")
    mu_t = mean_rss(params, d_true)
    mu_c = claimed_means(geom, params)
    return mu_t + float(np.mean(mu_c) - np.mean(mu_t))


def kl_divergence_h0_vs_h1(
    geom: NetworkGeometry, params: ChannelParams, true_pos, power_boost: float
) -> float:
    """KL divergence (nats) from the legitimate distribution to the spoofed
    one at a given power boost:  sum_i (mu_c_i - mu_t_i - P_x)^2 / (2 sigma^2).
    """
    mu_c = claimed_means(geom, params)
    mu_t = mean_rss(params, geom.distances_to(true_pos))
    sigma = params.shadowing_sigma_dB
    return float(np.sum((mu_c - mu_t - power_boost) ** 2) / (2.0 * sigma**2))


def rho_star(params: ChannelParams) -> float:
    """Reference ratio of attacker-ring radius to station spread at which
    the far-field approximation becomes adequate:

        rho* = 2 / (exp(sigma * ln10 / (10 gamma)) - 1) + 1
    """
    expo = np.exp(params.shadowing_sigma_dB * np.log(10.0) / (10.0 * params.path_loss_exponent))
    return float(2.0 / (expo - 1.0) + 1.0)


def rho(model: ThreatModel, geom: NetworkGeometry) -> float:
    """Ratio of the model's characteristic radius (circle radius, or annulus
    inner radius) to the max station-to-claimed distance."""
    r = geom.max_claimed_distance
    if isinstance(model, UniformCircle):
        return model.radius / r
    if isinstance(model, UniformAnnulus):
        return model.inner_radius / r
    raise ValueError(f"rho is undefined for {type(model).__name__}")


def validate_threat(model: ThreatModel, geom: NetworkGeometry) -> None:
    """Check geometry-dependent constraints of a threat model."""
    if isinstance(model, UniformCircle) and model.radius <= geom.max_claimed_distance:
        raise ValueError(
            "circle radius must exceed the max station-to-claimed distance "
            f"({model.radius} <= {geom.max_claimed_distance})"
        )


def sample_true_position(model: ThreatModel, claimed, rng) -> np.ndarray:
    """Draw one attacker position from the model's prior.

    Far field returns the FAR_AWAY marker.  The annulus draw inverts the
    radial CDF (radius = sqrt(R1^2 + U * (R2^2 - R1^2))), so each trial
    consumes a fixed number of uniforms.
    """
    if isinstance(model, FarField):
        return FAR_AWAY
    center = as_point(claimed)
    if isinstance(model, UniformCircle):
        phi = rng.uniform(0.0, 2.0 * np.pi)
        return center + model.radius * np.array([np.cos(phi), np.sin(phi)])
    if isinstance(model, UniformAnnulus):
        u = rng.uniform()
        radius = np.sqrt(
            model.inner_radius**2
            + u * (model.outer_radius**2 - model.inner_radius**2)
        )
        phi = rng.uniform(0.0, 2.0 * np.pi)
        return center + radius * np.array([np.cos(phi), np.sin(phi)])
    raise TypeError(f"unknown threat model {type(model).__name__}")
