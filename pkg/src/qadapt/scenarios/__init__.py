"""Benchmark scenarios: configuration schema, truth generators, filter models.

Submodules:
    config: scenario schema and YAML loading.
    particle: one-dimensional tracking benchmark.
    orbit: Keplerian/relative elements and zonal gravity helpers.
    asteroid: two-spacecraft small-body formation benchmark.
"""
from .config import (
    AsteroidConfig,
    CameraConfig,
    GapConfig,
    ManeuverConfig,
    OrbitConfig,
    ScenarioConfig,
    bundled_scenario_names,
    load_scenario,
)

__all__ = [
    "AsteroidConfig",
    "CameraConfig",
    "GapConfig",
    "ManeuverConfig",
    "OrbitConfig",
    "ScenarioConfig",
    "bundled_scenario_names",
    "load_scenario",
]
