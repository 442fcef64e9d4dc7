"""Named experiment scenarios producing plot-ready tables.

Each scenario assembles an experiment from layered key/value sections
(built-in defaults, then an optional config file, then command-line
overrides), runs it, and returns rows for one CSV plus a notes dict for
the run manifest.  Scenario names follow the output figures they feed
(fig3 ... fig9-p1) plus a fully config-driven "custom".
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .adversary import (
    FarField,
    UniformAnnulus,
    UniformCircle,
    rho_star,
    validate_threat,
)
from .infotheory import (
    ffa_rate_curve,
    misclassification,
    nmi,
    optimize_threshold,
)
from .model import ChannelParams, NetworkGeometry, PriorParams
from .simulator import (
    ExperimentConfig,
    RandomSquareGeometry,
    estimate_rates,
    nmi_sweep_comparison,
    resolve_geometry,
    roc_from_statistics,
    rule_statistics,
    synthesize_measurements,
)

__all__ = [
    "ConfigError",
    "ScenarioSettings",
    "ScenarioResult",
    "SCENARIOS",
    "DEFAULT_SECTIONS",
    "SCENARIO_DEFAULTS",
    "merge_sections",
    "compose_sections",
    "parse_override",
    "run_scenario",
    "list_scenarios",
]


class ConfigError(ValueError):
    """Invalid or missing experiment configuration."""


DEFAULT_SECTIONS = {
    "geometry": {"k": "10", "side": "200", "claimed": "0,0"},
    "channel": {
        "ref_power_dB": "0",
        "ref_distance_m": "1",
        "gamma": "3",
        "sigma_dB": "5",
    },
    "priors": {"p0": "0.9"},
    "threat": {"model": "far_field"},
    "rule": {"kind": "exact"},
    "sim": {
        "trials": "10000",
        "samples_per_station": "1",
        "grid_min": "-25",
        "grid_max": "25",
        "grid_points": "201",
        "geometry_replicate": "0",
        "seed": "42",
        "threads": "1",
    },
}

# Keys the free-form scenario must receive explicitly (no silent defaults).
REQUIRED_CUSTOM_KEYS = [
    ("geometry", "k"),
    ("channel", "gamma"),
    ("channel", "sigma_dB"),
    ("priors", "p0"),
    ("threat", "model"),
    ("rule", "kind"),
    ("sim", "trials"),
]

# Per-scenario defaults layered between the global defaults and any config
# file / command-line overrides.  Position-marginalized statistics are
# costly, so those scenarios default to fewer trials (noted in manifests).
SCENARIO_DEFAULTS = {
    "fig5": {"sim": {"trials": "2000"}},
    "fig6": {"sim": {"trials": "2000"}},
    "fig7": {
        "sim": {"trials": "2000"},
        "threat": {"inner_radius": "100", "outer_radius": "500"},
    },
}


@dataclass
class ScenarioSettings:
    """Command-line level knobs applied on top of the merged sections."""

    seed: int | None = None
    trials: int | None = None
    threads: int | None = None
    rho_factor: float | None = None


@dataclass
class ScenarioResult:
    name: str
    header: list
    rows: list
    notes: dict = field(default_factory=dict)


def merge_sections(*layers) -> dict:
    """Later layers override earlier ones, key by key."""
    merged: dict[str, dict[str, str]] = {}
    for layer in layers:
        for section, entries in layer.items():
            merged.setdefault(section, {}).update(entries)
    return merged


def parse_override(text: str):
    """Parse one dotted override like channel.sigma_dB=5."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, value = text.split("=", 1)
    if key.count(".") != 1:
        raise ConfigError(f"override key {key!r} must look like section.key")
    section, name = key.split(".")
    return section.strip(), name.strip(), value.strip()


def _get(sections, section, key, default=None, required=False):
    value = sections.get(section, {}).get(key)
    if value is None or value == "":
        if required:
            raise ConfigError(f"missing required key '{section}.{key}'")
        return default
    return value


def _get_float(sections, section, key, default=None, required=False):
    raw = _get(sections, section, key, default, required)
    if raw is None:
        return None
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{section}.{key}' must be a number, got {raw!r}")


def _get_int(sections, section, key, default=None, required=False):
    raw = _get(sections, section, key, default, required)
    if raw is None:
        return None
    try:
        return int(str(raw))
    except (TypeError, ValueError):
        raise ConfigError(f"key '{section}.{key}' must be an integer, got {raw!r}")


def _parse_point(raw, where):
    try:
        u, v = (float(part) for part in str(raw).split(","))
        return (u, v)
    except ValueError:
        raise ConfigError(f"key '{where}' must be 'u,v', got {raw!r}")


def _build_channel(sections) -> ChannelParams:
    try:
        return ChannelParams(
            ref_power_dB=_get_float(sections, "channel", "ref_power_dB", 0.0),
            ref_distance_m=_get_float(sections, "channel", "ref_distance_m", 1.0),
            path_loss_exponent=_get_float(sections, "channel", "gamma", required=True),
            shadowing_sigma_dB=_get_float(sections, "channel", "sigma_dB", required=True),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid channel parameters: {exc}")


def _build_priors(sections) -> PriorParams:
    try:
        return PriorParams(_get_float(sections, "priors", "p0", required=True))
    except ValueError as exc:
        raise ConfigError(f"invalid priors.p0: {exc}")


def _build_geometry(sections):
    stations = _get(sections, "geometry", "stations")
    claimed = _parse_point(_get(sections, "geometry", "claimed", "0,0"), "geometry.claimed")
    if stations:
        try:
            pts = [
                [float(x) for x in chunk.split(",")] for chunk in stations.split(";")
            ]
            return NetworkGeometry(np.asarray(pts), claimed)
        except ValueError as exc:
            raise ConfigError(f"invalid geometry.stations: {exc}")
    k = _get_int(sections, "geometry", "k", required=True)
    side = _get_float(sections, "geometry", "side", 200.0)
    try:
        return RandomSquareGeometry(k, side, claimed)
    except ValueError as exc:
        raise ConfigError(f"invalid geometry: {exc}")


def _build_threat(sections, geom: NetworkGeometry):
    model = _get(sections, "threat", "model", required=True)
    try:
        if model == "far_field":
            return FarField()
        if model == "circle":
            radius = _get_float(sections, "threat", "radius", required=True)
            threat = UniformCircle(radius)
        elif model == "annulus":
            threat = UniformAnnulus(
                _get_float(sections, "threat", "inner_radius", required=True),
                _get_float(sections, "threat", "outer_radius", required=True),
            )
        else:
            raise ConfigError(
                f"threat.model must be far_field, circle or annulus, got {model!r}"
            )
        validate_threat(threat, geom)
        return threat
    except ValueError as exc:
        raise ConfigError(f"invalid threat model: {exc}")


def _grid(sections) -> np.ndarray:
    lo = _get_float(sections, "sim", "grid_min", -25.0)
    hi = _get_float(sections, "sim", "grid_max", 25.0)
    n = _get_int(sections, "sim", "grid_points", 201)
    if not lo < hi or n < 2:
        raise ConfigError("sim.grid_min/grid_max/grid_points do not define a grid")
    return np.linspace(lo, hi, n)


def _sim_knobs(sections, settings: ScenarioSettings):
    seed = settings.seed if settings.seed is not None else _get_int(sections, "sim", "seed", 42)
    trials = (
        settings.trials
        if settings.trials is not None
        else _get_int(sections, "sim", "trials", required=True)
    )
    threads = (
        settings.threads
        if settings.threads is not None
        else _get_int(sections, "sim", "threads", 1)
    )
    return seed, trials, threads


def _config_error_from(exc):
    return ConfigError(str(exc))


def _make_config(sections, settings, *, threat=None, rule=None, geometry=None):
    seed, merged_trials, threads = _sim_knobs(sections, settings)
    geometry = geometry if geometry is not None else _build_geometry(sections)
    channel = _build_channel(sections)
    priors = _build_priors(sections)
    if threat is None:
        resolved = resolve_geometry(
            geometry, seed, _get_int(sections, "sim", "geometry_replicate", 0)
        )
        threat = _build_threat(sections, resolved)
    try:
        return ExperimentConfig(
            geometry=geometry,
            channel=channel,
            priors=priors,
            threat=threat,
            rule=rule if rule is not None else _get(sections, "rule", "kind", required=True),
            samples_per_station=_get_int(sections, "sim", "samples_per_station", 1),
            trials=merged_trials,
            seed=seed,
            log_thresholds=_grid(sections),
            threads=threads,
            geometry_replicate=_get_int(sections, "sim", "geometry_replicate", 0),
        )
    except ValueError as exc:
        raise _config_error_from(exc)


def _scenario_fig3(sections, settings: ScenarioSettings) -> ScenarioResult:
    """Far-field attacker: analytic rates and NMI against the Monte Carlo
    estimates on one threshold grid."""
    config = _make_config(sections, settings, threat=FarField(), rule="far_field")
    sweep = estimate_rates(config)
    geom = resolve_geometry(config.geometry, config.seed, config.geometry_replicate)
    rates = ffa_rate_curve(geom, config.channel, config.samples_per_station)
    grid = config.log_thresholds
    alpha_an, beta_an = rates(grid)
    p0 = config.priors.legitimate
    nmi_an = nmi(p0, alpha_an, beta_an)
    best = optimize_threshold(rates, p0, "nmi", grid)
    alpha_opt, _ = rates(np.asarray([best.optimal_log_threshold]))
    rows = [
        (
            float(grid[i]),
            float(alpha_an[i]),
            float(beta_an[i]),
            float(sweep.alpha[i]),
            float(sweep.beta[i]),
            float(nmi_an[i]),
            float(sweep.nmi[i]),
        )
        for i in range(grid.size)
    ]
    return ScenarioResult(
        "fig3",
        ["ln_T", "alpha_analytic", "beta_analytic", "alpha_sim", "beta_sim", "nmi_analytic", "nmi_sim"],
        rows,
        notes={
            "trials": config.trials,
            "optimal_log_threshold_nmi": best.optimal_log_threshold,
            "max_nmi_analytic": best.objective_value,
            "alpha_at_optimum": float(alpha_opt[0]),
            "max_nmi_sim": float(np.max(sweep.nmi)),
        },
    )


_FIG4_SIGMAS = (2.0, 4.0, 6.0, 8.0, 10.0)
_FIG4_STATION_COUNTS = (4, 6, 8, 10)


def _nested_geometry(geom: NetworkGeometry, k: int) -> NetworkGeometry:
    # Subsets share the first stations so adding stations never loses
    # information; keeps cross-K comparisons monotone by construction.
    return NetworkGeometry(geom.base_stations[:k], geom.claimed)


def _scenario_fig4(sections, settings: ScenarioSettings) -> ScenarioResult:
    """Maximum NMI across shadowing levels and station counts (nested
    station subsets), analytic and simulated."""
    base = _make_config(sections, settings, threat=FarField(), rule="far_field")
    geom_full = resolve_geometry(
        RandomSquareGeometry(
            max(_FIG4_STATION_COUNTS),
            _get_float(sections, "geometry", "side", 200.0),
            _parse_point(_get(sections, "geometry", "claimed", "0,0"), "geometry.claimed"),
        ),
        base.seed,
        base.geometry_replicate,
    )
    p0 = base.priors.legitimate
    rows = []
    for k in _FIG4_STATION_COUNTS:
        geom_k = _nested_geometry(geom_full, k)
        for sigma in _FIG4_SIGMAS:
            channel = replace(base.channel, shadowing_sigma_dB=sigma)
            best = optimize_threshold(
                ffa_rate_curve(geom_k, channel, base.samples_per_station),
                p0,
                "nmi",
                base.log_thresholds,
            )
            config = replace(base, geometry=geom_k, channel=channel)
            sweep = estimate_rates(config)
            rows.append(
                (k, sigma, float(best.objective_value), float(np.max(sweep.nmi)))
            )
    return ScenarioResult(
        "fig4",
        ["K", "sigma_dB", "max_nmi_analytic", "max_nmi_sim"],
        rows,
        notes={"trials": base.trials, "sigmas": list(_FIG4_SIGMAS), "station_counts": list(_FIG4_STATION_COUNTS)},
    )


def _paired_rows(tag, results):
    exact, ffa = results["exact"], results["far_field"]
    rows = []
    for i in range(exact.log_thresholds.size):
        row = (
            float(exact.log_thresholds[i]),
            float(exact.alpha[i]),
            float(exact.beta[i]),
            float(exact.nmi[i]),
            float(ffa.alpha[i]),
            float(ffa.beta[i]),
            float(ffa.nmi[i]),
        )
        rows.append(row if tag is None else (tag,) + row)
    return rows


def _paired_notes(results):
    exact, ffa = results["exact"], results["far_field"]
    i_exact = int(np.argmax(exact.nmi))
    i_ffa = int(np.argmax(ffa.nmi))
    return {
        "optimal_log_threshold_exact": float(exact.log_thresholds[i_exact]),
        "optimal_log_threshold_far_field": float(ffa.log_thresholds[i_ffa]),
        "max_nmi_exact": float(exact.nmi[i_exact]),
        "max_nmi_far_field": float(ffa.nmi[i_ffa]),
    }


def _scenario_fig5(sections, settings: ScenarioSettings) -> ScenarioResult:
    """Circle attacker at a ring-radius factor of the far-field reference
    ratio: exact rule vs far-field rule on shared noise."""
    factor = settings.rho_factor if settings.rho_factor is not None else 1.0
    pre = _make_config(sections, settings, threat=FarField(), rule="exact")
    geom = resolve_geometry(pre.geometry, pre.seed, pre.geometry_replicate)
    radius = factor * rho_star(pre.channel) * geom.max_claimed_distance
    threat = UniformCircle(radius)
    try:
        validate_threat(threat, geom)
    except ValueError as exc:
        raise ConfigError(f"rho factor {factor} too small: {exc}")
    config = _make_config(sections, settings, threat=threat, rule="exact")
    results = nmi_sweep_comparison(config, ("exact", "far_field"))
    notes = _paired_notes(results)
    notes.update(
        {
            "trials": config.trials,
            "rho_factor": factor,
            "rho_star": rho_star(config.channel),
            "ring_radius_m": radius,
        }
    )
    return ScenarioResult(
        "fig5",
        ["ln_T", "alpha_exact", "beta_exact", "nmi_exact", "alpha_ffa", "beta_ffa", "nmi_ffa"],
        _paired_rows(None, results),
        notes=notes,
    )


_FIG6_RATIOS = (1.0, 2.0, 5.0, 10.0)


def _scenario_fig6(sections, settings: ScenarioSettings) -> ScenarioResult:
    """Annulus attacker with growing outer radius: exact rule vs far-field
    rule on shared noise (inner radius fixed below the far-field reference)."""
    factor = settings.rho_factor if settings.rho_factor is not None else 0.2
    pre = _make_config(sections, settings, threat=FarField(), rule="exact")
    geom = resolve_geometry(pre.geometry, pre.seed, pre.geometry_replicate)
    inner = factor * rho_star(pre.channel) * geom.max_claimed_distance
    rows, notes = [], {
        "trials": None,
        "rho_factor": factor,
        "inner_radius_m": inner,
        "outer_over_inner": list(_FIG6_RATIOS),
    }
    for ratio in _FIG6_RATIOS:
        threat = UniformAnnulus(inner, ratio * inner)
        config = _make_config(sections, settings, threat=threat, rule="exact")
        results = nmi_sweep_comparison(config, ("exact", "far_field"))
        rows.extend(_paired_rows(ratio, results))
        pair = _paired_notes(results)
        notes[f"ratio_{ratio:g}"] = pair
        notes["trials"] = config.trials
    return ScenarioResult(
        "fig6",
        ["r2_over_r1", "ln_T", "alpha_exact", "beta_exact", "nmi_exact", "alpha_ffa", "beta_ffa", "nmi_ffa"],
        rows,
        notes=notes,
    )


_FIG7_STATION_COUNTS = (4, 8)


def _scenario_fig7(sections, settings: ScenarioSettings) -> ScenarioResult:
    """ROC curves for the numerical-marginal rule and its quadratic
    approximation under an annulus attacker."""
    inner = _get_float(sections, "threat", "inner_radius", 100.0)
    outer = _get_float(sections, "threat", "outer_radius", 500.0)
    threat = UniformAnnulus(inner, outer)
    base = _make_config(sections, settings, threat=threat, rule="exact")
    geom_full = resolve_geometry(
        RandomSquareGeometry(
            max(_FIG7_STATION_COUNTS),
            _get_float(sections, "geometry", "side", 200.0),
            _parse_point(_get(sections, "geometry", "claimed", "0,0"), "geometry.claimed"),
        ),
        base.seed,
        base.geometry_replicate,
    )
    rows, notes = [], {"trials": base.trials, "inner_radius_m": inner, "outer_radius_m": outer}
    for k in _FIG7_STATION_COUNTS:
        geom_k = _nested_geometry(geom_full, k)
        config = replace(base, geometry=geom_k)
        m0, m1 = synthesize_measurements(config, geom_k)
        for rule in ("exact", "laplace"):
            stats0, extras0 = rule_statistics(m0, geom_k, config, rule)
            stats1, extras1 = rule_statistics(m1, geom_k, config, rule)
            curve = roc_from_statistics(stats0, stats1, 201, rule)
            rows.extend(
                (k, rule, float(a), float(b))
                for a, b in zip(curve.alpha, curve.beta)
            )
            if rule == "laplace":
                notes[f"laplace_fallback_rate_h0_k{k}"] = extras0["laplace_fallback_rate"]
                notes[f"laplace_fallback_rate_h1_k{k}"] = extras1["laplace_fallback_rate"]
    return ScenarioResult("fig7", ["K", "rule", "alpha", "beta"], rows, notes=notes)


_FIG8_PRIORS = (0.5, 0.9)


def _scenario_fig8(sections, settings: ScenarioSettings) -> ScenarioResult:
    """Analytic NMI and misclassification across thresholds at two priors,
    with the optimizing threshold for each objective."""
    config = _make_config(sections, settings, threat=FarField(), rule="far_field")
    geom = resolve_geometry(config.geometry, config.seed, config.geometry_replicate)
    rates = ffa_rate_curve(geom, config.channel, config.samples_per_station)
    grid = config.log_thresholds
    alpha, beta = rates(grid)
    rows, notes = [], {}
    for p0 in _FIG8_PRIORS:
        nmi_vals = nmi(p0, alpha, beta)
        pe_vals = misclassification(p0, alpha, beta)
        rows.extend(
            (p0, float(grid[i]), float(alpha[i]), float(beta[i]), float(nmi_vals[i]), float(pe_vals[i]))
            for i in range(grid.size)
        )
        best_nmi = optimize_threshold(rates, p0, "nmi", grid)
        best_pe = optimize_threshold(rates, p0, "pe", grid)
        notes[f"p0_{p0:g}"] = {
            "optimal_log_threshold_nmi": best_nmi.optimal_log_threshold,
            "optimal_log_threshold_pe": best_pe.optimal_log_threshold,
        }
    return ScenarioResult(
        "fig8", ["p0", "ln_T", "alpha", "beta", "nmi", "pe"], rows, notes=notes
    )


_FIG9_P1 = (0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)


def _scenario_fig9_p1(sections, settings: ScenarioSettings) -> ScenarioResult:
    """NMI-optimal and misclassification-optimal thresholds as the
    malicious prior varies."""
    config = _make_config(sections, settings, threat=FarField(), rule="far_field")
    geom = resolve_geometry(config.geometry, config.seed, config.geometry_replicate)
    rates = ffa_rate_curve(geom, config.channel, config.samples_per_station)
    grid = config.log_thresholds
    rows = []
    for p1 in _FIG9_P1:
        p0 = 1.0 - p1
        best_nmi = optimize_threshold(rates, p0, "nmi", grid)
        best_pe = optimize_threshold(rates, p0, "pe", grid)
        bayes_ratio = float(np.exp(best_pe.optimal_log_threshold) * p1 / p0)
        rows.append(
            (
                p1,
                float(best_nmi.optimal_log_threshold),
                float(best_pe.optimal_log_threshold),
                bayes_ratio,
            )
        )
    return ScenarioResult(
        "fig9-p1",
        ["p1", "ln_T_nmi_opt", "ln_T_pe_opt", "pe_opt_over_p0_ratio"],
        rows,
        notes={"p1_values": list(_FIG9_P1)},
    )


def _scenario_custom(sections, settings: ScenarioSettings) -> ScenarioResult:
    """Single config-driven rate sweep; all core keys must be supplied."""
    for section, key in REQUIRED_CUSTOM_KEYS:
        _get(sections, section, key, required=True)
    config = _make_config(sections, settings)
    sweep = estimate_rates(config)
    rows = [
        (
            r["log_threshold"],
            r["alpha"],
            r["alpha_se"],
            r["beta"],
            r["beta_se"],
            r["nmi"],
            r["pe"],
        )
        for r in sweep.rows()
    ]
    return ScenarioResult(
        "custom",
        ["ln_T", "alpha", "alpha_se", "beta", "beta_se", "nmi", "pe"],
        rows,
        notes={"trials": config.trials, "rule": config.rule, "config_digest": sweep.config_digest, **sweep.extras},
    )


SCENARIOS = {
    "fig3": (_scenario_fig3, "far-field rates and NMI vs threshold: analytic and simulated"),
    "fig4": (_scenario_fig4, "max NMI across shadowing levels and station counts"),
    "fig5": (_scenario_fig5, "circle attacker: exact vs far-field rule NMI sweep"),
    "fig6": (_scenario_fig6, "annulus attacker: exact vs far-field rule vs outer radius"),
    "fig7": (_scenario_fig7, "ROC: numerical marginal vs quadratic approximation"),
    "fig8": (_scenario_fig8, "NMI and misclassification vs threshold at two priors"),
    "fig9-p1": (_scenario_fig9_p1, "optimal thresholds vs malicious prior"),
    "custom": (_scenario_custom, "config-driven single rate sweep"),
}

def compose_sections(name: str, file_sections=None, overrides=None) -> dict:
    """Layer the configuration for a scenario: global defaults, scenario
    defaults, config file, then dotted-key overrides."""
    if name not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        raise ConfigError(f"unknown scenario {name!r}; known scenarios: {known}")
    layers = [DEFAULT_SECTIONS, SCENARIO_DEFAULTS.get(name, {})]
    if name == "custom":
        # No silent defaults for the core keys of a free-form run.
        layers = [
            {
                section: {
                    key: val
                    for key, val in entries.items()
                    if (section, key) not in REQUIRED_CUSTOM_KEYS
                }
                for section, entries in DEFAULT_SECTIONS.items()
            }
        ]
    if file_sections:
        layers.append(file_sections)
    if overrides:
        layers.append(overrides)
    return merge_sections(*layers)


def run_scenario(name: str, sections, settings: ScenarioSettings) -> ScenarioResult:
    if name not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        raise ConfigError(f"unknown scenario {name!r}; known scenarios: {known}")
    fn, _ = SCENARIOS[name]
    result = fn(sections, settings)
    reduced = SCENARIO_DEFAULTS.get(name, {}).get("sim", {}).get("trials")
    if (
        reduced is not None
        and settings.trials is None
        and sections.get("sim", {}).get("trials") == reduced
    ):
        result.notes["default_trials_reduced"] = True
    return result


def list_scenarios() -> str:
    """Stable text table of scenario names and descriptions."""
    width = max(len(name) for name in SCENARIOS)
    lines = [f"{name:<{width}}  {desc}" for name, (_, desc) in sorted(SCENARIOS.items())]
    return "\n".join(lines)
