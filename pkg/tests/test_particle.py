"""Tests for the one-dimensional tracking benchmark scenario."""
import numpy as np
import pytest
from scipy.linalg import expm

from qadapt.process_noise import snc_q_analytic
from qadapt.scenarios import GapConfig, ScenarioConfig
from qadapt.scenarios.particle import (
    TRUTH_QTILDE,
    deterministic_accel,
    markov_model,
    measurement_times,
    particle_measurements,
    particle_truth,
    white_noise_model,
)


def make_config(**overrides) -> ScenarioConfig:
    kwargs = dict(
        name="p",
        kind="particle",
        truth_mode="stochastic",
        meas_interval=1.0,
        range_std=1.0,
        range_rate_std=0.1,
        position_sigma0=10.0,
        velocity_sigma0=1.0,
        duration=60.0,
        initial_truth=(0.0, 0.0),
        beta=0.005,
    )
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


# ------------------------------------------------------------- schedule


def test_measurement_times_regular_grid():
    times = measurement_times(make_config(duration=10.0, meas_interval=2.0))
    np.testing.assert_allclose(times, [2.0, 4.0, 6.0, 8.0, 10.0])


def test_measurement_times_gap_removes_interior_epochs():
    cfg = make_config(duration=40.0, gap=GapConfig(start=20.0, factor=5))
    times = measurement_times(cfg)
    assert 20.0 in times
    assert 25.0 in times
    for t in (21.0, 22.0, 23.0, 24.0):
        assert t not in times
    gaps = np.diff(times)
    assert gaps.max() == pytest.approx(5.0)
    assert np.count_nonzero(gaps > 1.5) == 1


def test_measurement_times_excludes_zero():
    times = measurement_times(make_config())
    assert times[0] == pytest.approx(1.0)
    assert 0.0 not in times


# -------------------------------------------------------- deterministic


def test_deterministic_accel_examples():
    assert deterministic_accel(0.0) == pytest.approx(1.0)
    assert deterministic_accel(2.5) == pytest.approx(0.0, abs=1e-15)
    assert deterministic_accel(5.0) == pytest.approx(-1.0)


def test_deterministic_truth_closed_form():
    cfg = make_config(truth_mode="deterministic", duration=5.0)
    times, states = particle_truth(cfg)
    omega = np.pi / 5.0
    # x(5) = (1 - cos(pi)) / omega^2 = 2 (5/pi)^2, v(5) = sin(pi)/omega = 0
    k5 = int(np.argmin(np.abs(times - 5.0)))
    assert states[k5, 0] == pytest.approx(2.0 * (5.0 / np.pi) ** 2, rel=1e-12)
    assert states[k5, 1] == pytest.approx(0.0, abs=1e-12)


def test_deterministic_truth_consistent_with_quadrature():
    cfg = make_config(truth_mode="deterministic", duration=8.0, meas_interval=0.5)
    times, states = particle_truth(cfg)
    # independent oracle: integrate the forcing numerically
    from scipy.integrate import solve_ivp

    sol = solve_ivp(
        lambda t, y: [y[1], deterministic_accel(t)],
        (0.0, times[-1]),
        [0.0, 0.0],
        t_eval=times,
        rtol=1e-12,
        atol=1e-12,
    )
    np.testing.assert_allclose(states[:, 0], sol.y[0], atol=1e-8)
    np.testing.assert_allclose(states[:, 1], sol.y[1], atol=1e-8)


def test_deterministic_truth_honors_initial_conditions():
    cfg = make_config(
        truth_mode="deterministic", duration=3.0, initial_truth=(7.0, -2.0)
    )
    times, states = particle_truth(cfg)
    omega = np.pi / 5.0
    t = times[0]
    expect_pos = 7.0 - 2.0 * t + (1.0 - np.cos(omega * t)) / omega**2
    assert states[0, 0] == pytest.approx(expect_pos, rel=1e-12)


# ----------------------------------------------------------- stochastic


def test_stochastic_truth_requires_rng():
    with pytest.raises(ValueError, match="random generator"):
        particle_truth(make_config())


def test_stochastic_truth_zero_intensity_is_ballistic():
    cfg = make_config(initial_truth=(2.0, 3.0), duration=10.0)
    times, states = particle_truth(cfg, np.random.default_rng(0), truth_qtilde=0.0)
    np.testing.assert_allclose(states[:, 0], 2.0 + 3.0 * times, rtol=1e-12)
    np.testing.assert_allclose(states[:, 1], 3.0, rtol=1e-12)


def test_stochastic_truth_seed_determinism():
    cfg = make_config()
    t1, s1 = particle_truth(cfg, np.random.default_rng(42))
    t2, s2 = particle_truth(cfg, np.random.default_rng(42))
    np.testing.assert_array_equal(s1, s2)
    t3, s3 = particle_truth(cfg, np.random.default_rng(43))
    assert not np.array_equal(s1, s3)


def test_stochastic_increment_covariance_matches_law():
    # one-step increments about the ballistic propagation must have the
    # analytic white-noise covariance; check variances within 5 percent
    cfg = make_config(duration=2.0, meas_interval=2.0, initial_truth=(0.0, 0.0))
    rng = np.random.default_rng(7)
    n = 4000
    increments = np.empty((n, 2))
    for i in range(n):
        _, states = particle_truth(cfg, rng)
        increments[i] = states[0]
    q = snc_q_analytic([TRUTH_QTILDE], 2.0)
    sample = np.cov(increments.T)
    np.testing.assert_allclose(np.diag(sample), np.diag(q), rtol=0.05)
    assert sample[0, 1] == pytest.approx(q[0, 1], rel=0.1)


def test_measurement_noise_levels():
    cfg = make_config(duration=4000.0)
    rng = np.random.default_rng(5)
    truth = np.zeros((4000, 2))
    meas = particle_measurements(truth, cfg, rng)
    # 3 standard errors of a sample std over n draws
    n = len(meas)
    for col, sigma in ((0, cfg.range_std), (1, cfg.range_rate_std)):
        std = meas[:, col].std(ddof=1)
        assert abs(std - sigma) < 3.0 * sigma / np.sqrt(2.0 * (n - 1))
        assert abs(meas[:, col].mean()) < 3.0 * sigma / np.sqrt(n)


# --------------------------------------------------------------- models


def test_white_noise_model_shapes_and_dynamics():
    model = white_noise_model(make_config())
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(model.propagate(x, 0.0, 3.0), [7.0, 2.0])
    np.testing.assert_allclose(model.stm(x, 1.0, 4.0), [[1.0, 3.0], [0.0, 1.0]])
    np.testing.assert_allclose(model.measure(x, 0.0), x)
    assert model.noise_segments[0].kind == "white"
    assert model.meas_noise[0, 0] == pytest.approx(1.0)


def test_markov_model_stm_matches_matrix_exponential():
    beta = 0.37
    model = markov_model(make_config(beta=beta))
    a = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -beta]])
    for dt in (0.01, 1.0, 25.0):
        np.testing.assert_allclose(
            model.stm(None, 0.0, dt), expm(a * dt), rtol=1e-12, atol=1e-15
        )


def test_markov_model_stm_small_beta_limits():
    # small beta*dt must recover the double-integrator columns; the expm1
    # form loses only the digits cancelled by u + expm1(-u) ~ u^2/2
    model = markov_model(make_config(beta=1e-7))
    phi = model.stm(None, 0.0, 2.0)
    # true series corrections are O(beta*dt) ~ 2e-7, so compare at 1e-6
    assert phi[0, 2] == pytest.approx(2.0**2 / 2.0, rel=1e-6)
    assert phi[1, 2] == pytest.approx(2.0, rel=1e-6)
    assert phi[2, 2] == pytest.approx(1.0, rel=1e-6)


def test_markov_model_propagation_decays_acceleration():
    beta = 0.5
    model = markov_model(make_config(beta=beta))
    x = np.array([0.0, 0.0, 1.0])
    out = model.propagate(x, 0.0, 4.0)
    assert out[2] == pytest.approx(np.exp(-2.0))
    assert out[1] == pytest.approx((1.0 - np.exp(-2.0)) / beta)


def test_models_share_measurement_noise():
    cfg = make_config(range_std=0.3, range_rate_std=0.02)
    w = white_noise_model(cfg)
    m = markov_model(cfg)
    np.testing.assert_allclose(w.meas_noise, m.meas_noise)
    np.testing.assert_allclose(np.diag(w.meas_noise), [0.09, 0.0004])
