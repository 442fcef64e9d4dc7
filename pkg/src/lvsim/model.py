"""Network geometry, channel parameters, and RSS measurement synthesis.

Measurements are received-signal-strength values in dB, modeled as
log-distance path loss plus zero-mean Gaussian shadowing.  A measurement
set is a (K, L) array: K base stations, L independent samples each.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "NetworkGeometry",
    "ChannelParams",
    "PriorParams",
    "as_point",
    "distance",
    "mean_rss",
    "claimed_means",
    "max_perpendicular_deviation",
    "check_measurements",
    "sample_legitimate",
    "sample_malicious",
    "sample_far_field",
]


def as_point(p) -> np.ndarray:
    """Coerce (u, v) array-like to a float pair."""
    point = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(point)):
        raise ValueError(f"point coordinates must be finite, got {point}")
    return point


def distance(a, b) -> float:
    """Euclidean distance in meters between two planar points."""
    pa, pb = as_point(a), as_point(b)
    return float(np.hypot(pa[0] - pb[0], pa[1] - pb[1]))


def max_perpendicular_deviation(points: np.ndarray) -> float:
    """Largest perpendicular distance from any point to the best-fit line.

    Zero iff the points are exactly collinear.
    """
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    # Right singular vectors: first spans the best-fit line, second its normal.
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return float(np.max(np.abs(centered @ vt[1])))


@dataclass(frozen=True)
class NetworkGeometry:
    """K base-station positions plus the user's claimed position.

    base_stations: (K, 2) array of coordinates in meters, K > 2, not all
    collinear.  The claimed position must not coincide with any station.
    """

    base_stations: np.ndarray
    claimed: np.ndarray

    def __post_init__(self):
        stations = np.asarray(self.base_stations, dtype=float)
        if stations.ndim != 2 or stations.shape[1] != 2:
            raise ValueError("base_stations must be a (K, 2) array")
        if stations.shape[0] <= 2:
            raise ValueError(f"need more than 2 base stations, got {stations.shape[0]}")
        if not np.all(np.isfinite(stations)):
            raise ValueError("base-station coordinates must be finite")
        claimed = as_point(self.claimed)
        if max_perpendicular_deviation(stations) <= 0.0:
            raise ValueError("base stations must not be collinear")
        if np.any(np.hypot(*(stations - claimed).T) <= 0.0):
            raise ValueError("claimed position coincides with a base station")
        stations = stations.copy()
        stations.setflags(write=False)
        claimed.setflags(write=False)
        object.__setattr__(self, "base_stations", stations)
        object.__setattr__(self, "claimed", claimed)

    @property
    def num_stations(self) -> int:
        return self.base_stations.shape[0]

    @cached_property
    def claimed_distances(self) -> np.ndarray:
        """Distances from each base station to the claimed position."""
        d = np.hypot(*(self.base_stations - self.claimed).T)
        d.setflags(write=False)
        return d

    @property
    def max_claimed_distance(self) -> float:
        """Radius of the station set as seen from the claimed position."""
        return float(self.claimed_distances.max())

    def distances_to(self, point) -> np.ndarray:
        """Distances from each base station to an arbitrary position."""
        p = as_point(point)
        return np.hypot(*(self.base_stations - p).T)


@dataclass(frozen=True)
class ChannelParams:
    """Log-distance path-loss channel with Gaussian shadowing (all in dB)."""

    ref_power_dB: float = 0.0
    ref_distance_m: float = 1.0
    path_loss_exponent: float = 3.0
    shadowing_sigma_dB: float = 5.0

    def __post_init__(self):
        if self.ref_distance_m <= 0:
            raise ValueError("ref_distance_m must be positive")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.shadowing_sigma_dB <= 0:
            raise ValueError("shadowing_sigma_dB must be positive")


@dataclass(frozen=True)
class PriorParams:
    """Prior probability that the user under test is legitimate."""

    legitimate: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.legitimate < 1.0:
            raise ValueError("legitimate prior must lie strictly in (0, 1)")

    @property
    def malicious(self) -> float:
        return 1.0 - self.legitimate


def mean_rss(params: ChannelParams, d):
    """Mean received power at distance d:  P_ref - 10*gamma*log10(d/d_ref).

    Accepts a scalar or array of distances; all must be positive.
    """
    dist = np.asarray(d, dtype=float)
    if np.any(dist <= 0.0):
        raise ValueError("distance must be positive")
    out = params.ref_power_dB - 10.0 * params.path_loss_exponent * np.log10(
        dist / params.ref_distance_m
    )
    return float(out) if out.ndim == 0 else out


def claimed_means(geom: NetworkGeometry, params: ChannelParams) -> np.ndarray:
    """Per-station mean RSS for a user at the claimed position."""
    return mean_rss(params, geom.claimed_distances)


def check_measurements(values, geom: NetworkGeometry) -> np.ndarray:
    """Validate a (K, L) measurement matrix against the geometry."""
    m = np.asarray(values, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] != geom.num_stations:
        raise ValueError(
            f"expected ({geom.num_stations}, L) measurements, got shape {m.shape}"
        )
    if not np.all(np.isfinite(m)):
        raise ValueError("measurements must be finite")
    return m


def _add_shadowing(means: np.ndarray, params: ChannelParams, num_samples: int, rng):
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    noise = rng.normal(0.0, params.shadowing_sigma_dB, size=(means.size, num_samples))
    return means[:, None] + noise


def sample_legitimate(
    geom: NetworkGeometry, params: ChannelParams, num_samples: int, rng
) -> np.ndarray:
    """Draw a (K, L) measurement matrix for a user at the claimed position."""
    return _add_shadowing(claimed_means(geom, params), params, num_samples, rng)


def sample_malicious(
    geom: NetworkGeometry, params: ChannelParams, true_pos, num_samples: int, rng
) -> np.ndarray:
    """Draw a (K, L) measurement matrix for a spoofing user at true_pos.

    The attacker applies the detection-minimizing power boost, so each
    station sees mean  mu_t_i + mean(mu_c) - mean(mu_t).
    """
    d_true = geom.distances_to(true_pos)
    if np.any(d_true <= 0.0):
        raise ValueError("true position coincides with a base station")
    mu_t = mean_rss(params, d_true)
    boost = float(np.mean(claimed_means(geom, params)) - np.mean(mu_t))
    return _add_shadowing(mu_t + boost, params, num_samples, rng)


def sample_far_field(
    geom: NetworkGeometry, params: ChannelParams, num_samples: int, rng
) -> np.ndarray:
    """Draw measurements for an attacker so distant all stations see the
    same mean, namely the average of the claimed-position means."""
    mu_bar = float(np.mean(claimed_means(geom, params)))
    means = np.full(geom.num_stations, mu_bar)
    return _add_shadowing(means, params, num_samples, rng)
