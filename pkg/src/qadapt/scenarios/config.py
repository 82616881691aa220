"""Scenario configuration: schema, validation, and YAML loading.

A scenario fully describes one benchmark problem: truth dynamics and their
parameters, the measurement schedule and noise levels, the filter's initial
formal uncertainty, and the knobs of the noise-adaptation techniques. Two
scenario kinds exist:

* ``particle``: a particle moving along one axis, observed in range and
  range-rate, with either stochastic (white) or deterministic (sinusoidal)
  unmodeled acceleration.
* ``formation``: two spacecraft about a small irregular body, observed with
  intersatellite radio ranging and surface-landmark camera pixels, with the
  filter's gravity model deliberately truncated.

Configs are frozen and hashable (vectors are tuples) so expensive derived
products such as reference truth trajectories can be memoized per config.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

__all__ = [
    "ScenarioConfig",
    "ManeuverConfig",
    "AsteroidConfig",
    "CameraConfig",
    "OrbitConfig",
    "GapConfig",
    "load_scenario",
    "bundled_scenario_names",
]


@dataclass(frozen=True)
class ManeuverConfig:
    """Finite continuous-thrust maneuver of the chief spacecraft.

    The burn starts at the first ascending crossing of argument of latitude
    90 deg after ``start_orbits`` orbit periods and pushes opposite the
    chief's orbital angular momentum. Error fields describe how the filter's
    modeled maneuver is perturbed per run (zero for a perfectly known burn).
    """

    start_orbits: float = 3.2
    duration: float = 900.0
    thrust: float = 5.76e-3
    mass: float = 8.0
    magnitude_error_std: float = 0.0
    direction_error_std_deg: float = 0.0

    @property
    def accel(self) -> float:
        """Thrust acceleration magnitude in m/s^2."""
        return self.thrust / self.mass

    def __post_init__(self) -> None:
        if self.duration <= 0 or self.thrust <= 0 or self.mass <= 0:
            raise ValueError("maneuver duration, thrust, and mass must be positive")
        if self.magnitude_error_std < 0 or self.direction_error_std_deg < 0:
            raise ValueError("maneuver error standard deviations must be >= 0")


@dataclass(frozen=True)
class AsteroidConfig:
    """Central-body physical model.

    The values are config inputs of small-body magnitude, not fitted
    constants of any particular body. The spin axis is the frame z-axis;
    the body-fixed frame rotates about it at ``spin_rate``.
    """

    mu: float = 4.4628e5
    j2: float = 0.11
    j3: float = 0.01
    ref_radius: float = 16000.0
    spin_rate: float = 3.3118e-4
    ellipsoid: tuple[float, float, float] = (16000.0, 8000.0, 6000.0)
    sun_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    srp_accel: float = 2.5e-8
    sun_tidal_coeff: float = 1.28e-14

    def __post_init__(self) -> None:
        if self.mu <= 0 or self.ref_radius <= 0:
            raise ValueError("mu and ref_radius must be positive")
        if any(ax <= 0 for ax in self.ellipsoid):
            raise ValueError("ellipsoid semi-axes must be positive")
        if self.srp_accel < 0 or self.sun_tidal_coeff < 0:
            raise ValueError("perturbation magnitudes must be >= 0")


@dataclass(frozen=True)
class CameraConfig:
    """Pinhole camera with a square detector and centered principal point."""

    focal_px: float = 1500.0
    n_px: int = 2048

    def __post_init__(self) -> None:
        if self.focal_px <= 0 or self.n_px <= 0:
            raise ValueError("camera parameters must be positive")

    @property
    def center(self) -> float:
        return self.n_px / 2.0


@dataclass(frozen=True)
class OrbitConfig:
    """Chief Keplerian elements plus the deputy's relative geometry.

    ``chief`` is (a [m], e, i [rad], raan [rad], argp [rad], mean anomaly
    [rad]); ``deputy_aroe`` is the quasi-nonsingular relative orbital
    element vector scaled by the chief semi-major axis, in meters.
    """

    chief: tuple[float, float, float, float, float, float]
    deputy_aroe: tuple[float, float, float, float, float, float]
    n_orbits: float = 4.0

    def __post_init__(self) -> None:
        a, e = self.chief[0], self.chief[1]
        if a <= 0 or not 0.0 <= e < 1.0:
            raise ValueError("chief orbit needs a > 0 and 0 <= e < 1")
        if self.n_orbits <= 0:
            raise ValueError("n_orbits must be positive")


@dataclass(frozen=True)
class GapConfig:
    """A deliberate measurement outage: drop scheduled epochs in a window.

    Measurements with t in (start, start + factor * interval) are skipped,
    so the first epoch after the gap arrives with dt = factor * interval.
    """

    start: float
    factor: int = 10

    def __post_init__(self) -> None:
        if self.start <= 0 or self.factor < 2:
            raise ValueError("gap needs start > 0 and factor >= 2")


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one benchmark scenario."""

    name: str
    kind: str
    truth_mode: str
    meas_interval: float
    range_std: float
    range_rate_std: float
    position_sigma0: float
    velocity_sigma0: float
    duration: float | None = None
    pixel_std: float | None = None
    initial_truth: tuple[float, ...] | None = None
    accel_sigma0: float = 1.0
    qtilde0: float = 1.0
    qtilde_lower: float = 0.0
    qtilde_upper: float | None = None
    # Markov-model techniques work in m^2/s^5 rather than m^2/s^3, so they
    # get their own seed/bound knobs; None means inherit the white-noise value.
    qtilde0_markov: float | None = None
    qtilde_lower_markov: float | None = None
    qtilde_upper_markov: float | None = None
    beta: float = 0.005
    alpha_asnc: float = 1.0
    alpha_admc: float = 0.02
    imm_qtilde_min: float = 1e-2
    imm_qtilde_max: float = 1.0
    window: int = 30
    adaptation_delay: int = 0
    outage_factor: float = 3.0
    default_seed: int = 0
    gap: GapConfig | None = None
    maneuver: ManeuverConfig | None = None
    asteroid: AsteroidConfig | None = None
    camera: CameraConfig | None = None
    orbit: OrbitConfig | None = None
    n_landmarks: int = 100
    max_visible: int = 12
    filter_substeps: int = 4

    _PARTICLE_MODES = ("stochastic", "deterministic")
    _FORMATION_MODES = ("none", "perfect", "imperfect")

    def __post_init__(self) -> None:
        if self.kind not in ("particle", "formation"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        expected = (
            self._PARTICLE_MODES if self.kind == "particle" else self._FORMATION_MODES
        )
        if self.truth_mode not in expected:
            raise ValueError(
                f"truth_mode {self.truth_mode!r} invalid for kind {self.kind!r}; "
                f"expected one of {expected}"
            )
        if self.meas_interval <= 0:
            raise ValueError("meas_interval must be positive")
        for label, value in (
            ("range_std", self.range_std),
            ("range_rate_std", self.range_rate_std),
            ("position_sigma0", self.position_sigma0),
            ("velocity_sigma0", self.velocity_sigma0),
            ("accel_sigma0", self.accel_sigma0),
        ):
            if value <= 0:
                raise ValueError(f"{label} must be positive")
        if self.qtilde0 < 0 or self.qtilde_lower < 0:
            raise ValueError("qtilde0 and qtilde_lower must be >= 0")
        for label, value in (
            ("qtilde0_markov", self.qtilde0_markov),
            ("qtilde_lower_markov", self.qtilde_lower_markov),
        ):
            if value is not None and value < 0:
                raise ValueError(f"{label} must be >= 0")
        if not 0 < self.alpha_asnc <= 1 or not 0 < self.alpha_admc <= 1:
            raise ValueError("forgetting factors must lie in (0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.imm_qtilde_max <= self.imm_qtilde_min:
            raise ValueError("imm_qtilde_max must exceed imm_qtilde_min")
        if self.window < 1 or self.adaptation_delay < 0:
            raise ValueError("window must be >= 1 and adaptation_delay >= 0")
        if self.outage_factor <= 1.0:
            raise ValueError("outage_factor must exceed 1")
        if self.filter_substeps < 1:
            raise ValueError("filter_substeps must be >= 1")
        if self.kind == "particle":
            if self.duration is None or self.duration < self.meas_interval:
                raise ValueError("particle scenarios need duration >= meas_interval")
            if self.initial_truth is None or len(self.initial_truth) != 2:
                raise ValueError("particle scenarios need initial_truth = (x, v)")
        else:
            for label, value in (
                ("pixel_std", self.pixel_std),
                ("asteroid", self.asteroid),
                ("camera", self.camera),
                ("orbit", self.orbit),
            ):
                if value is None:
                    raise ValueError(f"formation scenarios need {label}")
            if self.pixel_std <= 0:
                raise ValueError("pixel_std must be positive")
            if self.n_landmarks < 1 or self.max_visible < 1:
                raise ValueError("n_landmarks and max_visible must be >= 1")
            if self.truth_mode in ("perfect", "imperfect") and self.maneuver is None:
                raise ValueError("maneuver modes need a maneuver block")

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with the given fields replaced (re-validated)."""
        return dataclasses.replace(self, **changes)

    @property
    def markov_qtilde0(self) -> float:
        return self.qtilde0 if self.qtilde0_markov is None else self.qtilde0_markov

    @property
    def markov_qtilde_lower(self) -> float:
        if self.qtilde_lower_markov is None:
            return self.qtilde_lower
        return self.qtilde_lower_markov

    @property
    def markov_qtilde_upper(self) -> float | None:
        if self.qtilde_upper_markov is None:
            return self.qtilde_upper
        return self.qtilde_upper_markov


def _require_keys(block: dict, allowed: set[str], context: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ValueError(f"unknown {context} keys: {sorted(unknown)}")


def _build_config(doc: dict) -> ScenarioConfig:
    _require_keys(
        doc,
        {
            "name",
            "kind",
            "truth_mode",
            "measurements",
            "initial",
            "noise",
            "window",
            "adaptation_delay",
            "outage_factor",
            "default_seed",
            "gap",
            "maneuver",
            "asteroid",
            "camera",
            "orbit",
            "landmarks",
            "max_visible",
            "filter_substeps",
        },
        "top-level",
    )
    meas = doc.get("measurements", {})
    _require_keys(
        meas,
        {"interval", "duration", "range_std", "range_rate_std", "pixel_std"},
        "measurements",
    )
    init = doc.get("initial", {})
    _require_keys(
        init,
        {"truth", "position_sigma", "velocity_sigma", "accel_sigma"},
        "initial",
    )
    noise = doc.get("noise", {})
    _require_keys(
        noise,
        {
            "qtilde0",
            "lower",
            "upper",
            "qtilde0_markov",
            "lower_markov",
            "upper_markov",
            "beta",
            "alpha_asnc",
            "alpha_admc",
            "imm_min",
            "imm_max",
        },
        "noise",
    )

    kwargs: dict = {
        "name": doc["name"],
        "kind": doc["kind"],
        "truth_mode": doc["truth_mode"],
        "meas_interval": float(meas["interval"]),
        "range_std": float(meas["range_std"]),
        "range_rate_std": float(meas["range_rate_std"]),
        "position_sigma0": float(init["position_sigma"]),
        "velocity_sigma0": float(init["velocity_sigma"]),
    }
    if "duration" in meas:
        kwargs["duration"] = float(meas["duration"])
    if "pixel_std" in meas:
        kwargs["pixel_std"] = float(meas["pixel_std"])
    if "truth" in init:
        kwargs["initial_truth"] = tuple(float(v) for v in init["truth"])
    if "accel_sigma" in init:
        kwargs["accel_sigma0"] = float(init["accel_sigma"])

    noise_map = {
        "qtilde0": "qtilde0",
        "lower": "qtilde_lower",
        "upper": "qtilde_upper",
        "qtilde0_markov": "qtilde0_markov",
        "lower_markov": "qtilde_lower_markov",
        "upper_markov": "qtilde_upper_markov",
        "beta": "beta",
        "alpha_asnc": "alpha_asnc",
        "alpha_admc": "alpha_admc",
        "imm_min": "imm_qtilde_min",
        "imm_max": "imm_qtilde_max",
    }
    for key, field in noise_map.items():
        if key in noise and noise[key] is not None:
            kwargs[field] = float(noise[key])

    for key in ("window", "adaptation_delay", "default_seed", "filter_substeps"):
        if key in doc:
            kwargs[key] = int(doc[key])
    if "outage_factor" in doc:
        kwargs["outage_factor"] = float(doc["outage_factor"])
    if "landmarks" in doc:
        kwargs["n_landmarks"] = int(doc["landmarks"])
    if "max_visible" in doc:
        kwargs["max_visible"] = int(doc["max_visible"])

    if doc.get("gap") is not None:
        block = doc["gap"]
        _require_keys(block, {"start", "factor"}, "gap")
        kwargs["gap"] = GapConfig(
            start=float(block["start"]), factor=int(block.get("factor", 10))
        )
    if doc.get("maneuver") is not None:
        block = doc["maneuver"]
        _require_keys(
            block,
            {
                "start_orbits",
                "duration",
                "thrust",
                "mass",
                "magnitude_error_std",
                "direction_error_std_deg",
            },
            "maneuver",
        )
        kwargs["maneuver"] = ManeuverConfig(
            **{key: float(val) for key, val in block.items()}
        )
    if doc.get("asteroid") is not None:
        block = dict(doc["asteroid"])
        _require_keys(
            block,
            {
                "mu",
                "j2",
                "j3",
                "ref_radius",
                "spin_rate",
                "ellipsoid",
                "sun_direction",
                "srp_accel",
                "sun_tidal_coeff",
            },
            "asteroid",
        )
        for key, val in block.items():
            # tolerate YAML readers that keep exponent-form scalars as text
            if key in ("ellipsoid", "sun_direction"):
                block[key] = tuple(float(v) for v in val)
            else:
                block[key] = float(val)
        kwargs["asteroid"] = AsteroidConfig(**block)
    if doc.get("camera") is not None:
        block = doc["camera"]
        _require_keys(block, {"focal_px", "n_px"}, "camera")
        kwargs["camera"] = CameraConfig(
            focal_px=float(block["focal_px"]), n_px=int(block["n_px"])
        )
    if doc.get("orbit") is not None:
        block = doc["orbit"]
        _require_keys(block, {"chief", "deputy_aroe", "n_orbits"}, "orbit")
        chief = block["chief"]
        _require_keys(
            chief,
            {"a", "e", "i_deg", "raan_deg", "argp_deg", "mean_anomaly_deg"},
            "orbit.chief",
        )
        kwargs["orbit"] = OrbitConfig(
            chief=(
                float(chief["a"]),
                float(chief["e"]),
                math.radians(float(chief["i_deg"])),
                math.radians(float(chief["raan_deg"])),
                math.radians(float(chief["argp_deg"])),
                math.radians(float(chief["mean_anomaly_deg"])),
            ),
            deputy_aroe=tuple(float(v) for v in block["deputy_aroe"]),
            n_orbits=float(block.get("n_orbits", 4.0)),
        )
    return ScenarioConfig(**kwargs)


def _bundled_dir():
    return resources.files("qadapt.scenarios") / "data"


def bundled_scenario_names() -> list[str]:
    """Names of the scenario files shipped with the package."""
    return sorted(
        path.name.removesuffix(".yaml")
        for path in _bundled_dir().iterdir()
        if path.name.endswith(".yaml")
    )


def load_scenario(source: str | Path) -> ScenarioConfig:
    """Load a scenario from a YAML file path or a bundled scenario name.

    Args:
        source: filesystem path to a YAML document, or the bare name of a
            bundled scenario (see bundled_scenario_names()).

    Returns:
        Validated ScenarioConfig.

    Raises:
        FileNotFoundError: unknown path and unknown bundled name.
        ValueError: schema violations (unknown keys, bad ranges).
    """
    path = Path(source)
    if path.suffix in (".yaml", ".yml") and path.exists():
        text = path.read_text()
    else:
        candidate = _bundled_dir() / f"{source}.yaml"
        try:
            text = candidate.read_text()
        except (FileNotFoundError, OSError) as exc:
            names = ", ".join(bundled_scenario_names())
            raise FileNotFoundError(
                f"no scenario file {source!r}; bundled scenarios: {names}"
            ) from exc
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ValueError("scenario document must be a mapping")
    return _build_config(doc)
