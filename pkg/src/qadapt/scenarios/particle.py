"""One-dimensional tracking benchmark: truth generation and filter models.

The target moves along a line and is observed in position and velocity at a
fixed cadence. Truth comes in two flavors:

* stochastic: continuous white acceleration, sampled exactly at the
  measurement epochs with the matching discrete covariance, so the white
  noise filter with the true intensity is exactly matched;
* deterministic: a smooth sinusoidal acceleration with a closed-form state,
  which no white-noise model matches and which exercises the time-correlated
  estimators.

Filter models cover a two-state white-noise-in-acceleration design and a
three-state first-order Gauss-Markov acceleration design.
"""
from __future__ import annotations

import numpy as np

from ..filter_core import FilterModel, NoiseSegment
from ..process_noise import snc_q_analytic
from .config import ScenarioConfig

__all__ = [
    "measurement_times",
    "particle_truth",
    "deterministic_accel",
    "particle_measurements",
    "white_noise_model",
    "markov_model",
    "TRUTH_QTILDE",
]

# acceleration-noise intensity driving the stochastic truth, m^2/s^3
TRUTH_QTILDE = 0.5

# sinusoidal forcing: a(t) = cos(OMEGA * t) with OMEGA = pi / 5
_OMEGA = np.pi / 5.0


def measurement_times(config: ScenarioConfig) -> np.ndarray:
    """Measurement epochs, honoring any configured outage gap.

    Epochs run at the nominal interval from one interval after start through
    the configured duration. When a gap is configured, epochs strictly inside
    (start, start + factor * interval) are removed, so the first epoch after
    the gap arrives factor intervals after the last one before it.
    """
    dt = config.meas_interval
    n = int(round(config.duration / dt))
    times = dt * np.arange(1, n + 1)
    if config.gap is not None:
        lo = config.gap.start
        hi = config.gap.start + config.gap.factor * dt
        keep = ~((times > lo + 1e-9 * dt) & (times < hi - 1e-9 * dt))
        times = times[keep]
    return times


def deterministic_accel(t):
    """Forcing acceleration of the deterministic truth, m/s^2."""
    return np.cos(_OMEGA * np.asarray(t, dtype=float))


def _deterministic_state(t, x0: float, v0: float) -> np.ndarray:
    """Closed-form state under a(t) = cos(OMEGA t); shape (..., 2)."""
    t = np.asarray(t, dtype=float)
    inv = 1.0 / _OMEGA
    pos = x0 + v0 * t + inv * inv * (1.0 - np.cos(_OMEGA * t))
    vel = v0 + inv * np.sin(_OMEGA * t)
    return np.stack([pos, vel], axis=-1)


def particle_truth(
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
    truth_qtilde: float = TRUTH_QTILDE,
) -> tuple[np.ndarray, np.ndarray]:
    """Truth trajectory sampled at the measurement epochs.

    Args:
        config: particle scenario configuration.
        rng: random generator; required for stochastic truth.
        truth_qtilde: acceleration-noise intensity of the stochastic truth.
            Zero gives a ballistic trajectory.

    Returns:
        (times, states) where times has shape (K,) and states (K, 2) holds
        [position, velocity] rows. The initial state at t = 0 is
        config.initial_truth and is not included.
    """
    times = measurement_times(config)
    x0, v0 = config.initial_truth
    if config.truth_mode == "deterministic":
        return times, _deterministic_state(times, x0, v0)
    if rng is None:
        raise ValueError("stochastic truth needs a random generator")
    states = np.empty((times.size, 2))
    state = np.array([x0, v0])
    t_prev = 0.0
    for k, t in enumerate(times):
        dt = t - t_prev
        phi = np.array([[1.0, dt], [0.0, 1.0]])
        state = phi @ state
        if truth_qtilde > 0.0:
            q = snc_q_analytic([truth_qtilde], dt)
            state = state + rng.multivariate_normal(np.zeros(2), q, method="cholesky")
        states[k] = state
        t_prev = t
    return times, states


def particle_measurements(
    truth_states: np.ndarray, config: ScenarioConfig, rng: np.random.Generator
) -> np.ndarray:
    """Noisy position/velocity observations of the truth states."""
    noise = np.stack(
        [
            config.range_std * rng.standard_normal(len(truth_states)),
            config.range_rate_std * rng.standard_normal(len(truth_states)),
        ],
        axis=-1,
    )
    return truth_states + noise


def _meas_noise(config: ScenarioConfig) -> np.ndarray:
    return np.diag([config.range_std**2, config.range_rate_std**2])


def white_noise_model(config: ScenarioConfig) -> FilterModel:
    """Two-state constant-velocity model observed in position and velocity."""

    def stm(x, t0: float, t1: float) -> np.ndarray:
        return np.array([[1.0, t1 - t0], [0.0, 1.0]])

    h = np.eye(2)
    return FilterModel(
        state_dim=2,
        propagate=lambda x, t0, t1: x @ stm(None, t0, t1).T,
        measure=lambda x, t: x @ h.T,
        meas_noise=_meas_noise(config),
        stm=stm,
        meas_jacobian=lambda x, t: h,
        noise_map=lambda t: np.array([[0.0], [1.0]]),
        noise_segments=(NoiseSegment("white", 0, 1),),
    )


def markov_model(config: ScenarioConfig) -> FilterModel:
    """Three-state model with first-order Gauss-Markov acceleration.

    The state is [position, velocity, acceleration] and the acceleration
    decays with the configured time constant 1/beta between updates.
    """
    beta = config.beta

    def stm(x, t0: float, t1: float) -> np.ndarray:
        dt = t1 - t0
        u = beta * dt
        # expm1 keeps the u -> 0 limits (dt^2/2 and dt) accurate
        pos_accel = (u + np.expm1(-u)) / beta**2
        vel_accel = -np.expm1(-u) / beta
        return np.array(
            [
                [1.0, dt, pos_accel],
                [0.0, 1.0, vel_accel],
                [0.0, 0.0, np.exp(-u)],
            ]
        )

    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return FilterModel(
        state_dim=3,
        propagate=lambda x, t0, t1: x @ stm(None, t0, t1).T,
        measure=lambda x, t: x @ h.T,
        meas_noise=_meas_noise(config),
        stm=stm,
        meas_jacobian=lambda x, t: h,
        noise_map=lambda t: np.array([[0.0], [0.0], [1.0]]),
        noise_segments=(NoiseSegment("gauss_markov", 0, 1),),
    )
