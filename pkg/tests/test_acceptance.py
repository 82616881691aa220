"""Full-scale acceptance gates for the adaptive process-noise estimators.

One test per numbered criterion, so a verbose run prints one pass/fail
line each. Campaign results are memoized at module scope: rerunning a
single criterion only pays for the campaigns it actually touches, and
every campaign executed here lands in a shared registry so the
positive-semidefinite guarantee is checked across the whole set.

These are statistical gates at full Monte-Carlo scale; the whole module
takes over an hour on one core. Run it deliberately, not on every edit.
"""
import itertools

import numpy as np

from qadapt._linalg import vech_indices
from qadapt.adaptive import DesignMatrix, SlidingWindow, solve_wls_boxed, weighting_matrix
from qadapt.filter_core import InnovationRecord
from qadapt.harness import (
    CampaignResult,
    Technique,
    compute_mae,
    emit_results,
    run_campaign,
)
from qadapt.process_noise import dmc_q_analytic, q_numeric, snc_q_analytic
from qadapt.scenarios import GapConfig, load_scenario
from qadapt.scenarios.particle import (
    TRUTH_QTILDE,
    deterministic_accel,
    markov_model,
    white_noise_model,
)

RUNS_STOCHASTIC = 1000
RUNS_SWEEP = 100
RUNS_FORMATION = 200
RUNS_IMM = 100
RUNS_GAP = 100

SWEEP_POINTS = (1e-12, 1.0, 1e8)
# The near-optimal fixed intensities the badly initialized runs are judged
# against: 0.206 m^2/s^5 is the colored-noise optimum for this scenario;
# 1.0 m^2/s^3 sits on the flat bottom of the white-noise sweep.
SNC_NEAR_OPTIMAL = 1.0
DMC_NEAR_OPTIMAL = 0.206

GAP_START = 100.0
GAP_FACTOR = 10

_CACHE: dict[tuple, CampaignResult] = {}
_REGISTRY: list[CampaignResult] = []


def _campaign(scenario: str, technique: Technique, runs: int, *,
              keep_series: bool = False, **overrides) -> CampaignResult:
    """Memoized single-thread campaign, registered for the PSD audit."""
    key = (scenario, technique.value, runs, keep_series,
           tuple(sorted(overrides.items())))
    if key not in _CACHE:
        config = load_scenario(scenario)
        if overrides:
            config = config.replace(**overrides)
        result = run_campaign(config, technique, runs, seed=0,
                              keep_series=keep_series)
        _CACHE[key] = result
        _REGISTRY.append(result)
    return _CACHE[key]


def _stochastic_campaigns() -> dict[str, CampaignResult]:
    """White-truth particle campaigns; 'ideal' fixes Q-tilde at the truth."""
    return {
        "ideal": _campaign("particle_stochastic", Technique.SNC,
                           RUNS_STOCHASTIC, qtilde0=TRUTH_QTILDE),
        "cm": _campaign("particle_stochastic", Technique.CM, RUNS_STOCHASTIC),
        "asnc": _campaign("particle_stochastic", Technique.ASNC, RUNS_STOCHASTIC),
        "admc": _campaign("particle_stochastic", Technique.ADMC, RUNS_STOCHASTIC),
    }


def _sweep_campaigns() -> dict[tuple[str, float], CampaignResult]:
    """Deterministic-truth campaigns across initial-intensity extremes."""
    out = {}
    for q0 in SWEEP_POINTS:
        out["asnc", q0] = _campaign("particle_deterministic", Technique.ASNC,
                                    RUNS_SWEEP, qtilde0=q0)
        out["admc", q0] = _campaign("particle_deterministic", Technique.ADMC,
                                    RUNS_SWEEP, qtilde0_markov=q0)
    for q0 in (SNC_NEAR_OPTIMAL, 1e8):
        out["snc", q0] = _campaign("particle_deterministic", Technique.SNC,
                                   RUNS_SWEEP, qtilde0=q0)
    for q0 in (DMC_NEAR_OPTIMAL, 1e8):
        out["dmc", q0] = _campaign("particle_deterministic", Technique.DMC,
                                   RUNS_SWEEP, qtilde0_markov=q0)
    return out


def _formation_campaigns() -> dict[tuple[str, str], CampaignResult]:
    out = {}
    for label, scenario in (("none", "formation_no_maneuver"),
                            ("imperfect", "formation_imperfect_maneuver")):
        for tech in (Technique.CM, Technique.ASNC, Technique.ADMC):
            out[label, tech.value] = _campaign(scenario, tech, RUNS_FORMATION)
    return out


def _gap_campaign() -> CampaignResult:
    return _campaign(
        "particle_stochastic", Technique.ASNC, RUNS_GAP, keep_series=True,
        gap=GapConfig(start=GAP_START, factor=GAP_FACTOR),
    )


def test_criterion_01_stochastic_particle_accuracy():
    """Matched-filter, adaptive, and covariance-matching error levels on the
    white-truth particle, including the windowed Q(1,1) tracking error."""
    agg = {name: c.aggregates() for name, c in _stochastic_campaigns().items()}
    for name, target, tol in (("ideal", 0.121, 0.05), ("asnc", 0.123, 0.10),
                              ("admc", 0.122, 0.10), ("cm", 0.505, 0.20)):
        mae_x = agg[name]["mae_x"][0]
        assert abs(mae_x - target) <= tol * target, (name, mae_x)
    for name in ("ideal", "cm", "asnc"):
        mae_v = agg[name]["mae_xdot"][0]
        assert 0.073 <= mae_v <= 0.076, (name, mae_v)
    assert agg["asnc"]["q11_mae"][0] <= 1e-4, agg["asnc"]["q11_mae"]
    assert agg["cm"]["q11_mae"][0] >= 1e-2, agg["cm"]["q11_mae"]


def test_criterion_02_initial_intensity_insensitivity():
    """Adaptive steady-window errors are flat across a 20-decade spread of
    the starting intensity, while fixed-intensity filters degrade >= 3x
    when started that far from their optimum."""
    camps = _sweep_campaigns()
    for tech in ("asnc", "admc"):
        for metric in ("mae_x", "mae_xdot"):
            vals = [camps[tech, q0].aggregates()[metric][0]
                    for q0 in SWEEP_POINTS]
            spread = (max(vals) - min(vals)) / min(vals)
            assert spread < 0.10, (tech, metric, vals)
    for tech, near in (("snc", SNC_NEAR_OPTIMAL), ("dmc", DMC_NEAR_OPTIMAL)):
        at_extreme = camps[tech, 1e8].aggregates()["mae_x"][0]
        at_optimum = camps[tech, near].aggregates()["mae_x"][0]
        assert at_extreme >= 3.0 * at_optimum, (tech, at_extreme, at_optimum)


def test_criterion_03_colored_noise_advantage():
    """The Markov-augmented estimator wins only when the unmodeled
    acceleration is time-correlated; under white truth the plain
    white-noise estimator is at least as good."""
    det_admc = _campaign("particle_deterministic", Technique.ADMC,
                         RUNS_SWEEP, qtilde0_markov=1.0)
    det_asnc = _campaign("particle_deterministic", Technique.ASNC,
                         RUNS_SWEEP, qtilde0=1.0)
    # The white-noise estimator carries no acceleration state, so its
    # implicit acceleration estimate is zero and its residual-acceleration
    # level equals the mean |a_true| over the same metric window.
    accel_true = np.abs(deterministic_accel(det_admc.times))
    proxy = float(compute_mae(det_admc.times, accel_true[:, None],
                              det_admc.metric_start)[0])
    assert det_admc.aggregates()["mae_accel"][0] < proxy
    assert (det_admc.aggregates()["mae_xdot"][0]
            <= det_asnc.aggregates()["mae_xdot"][0])

    sto = _stochastic_campaigns()
    assert (sto["asnc"].aggregates()["mae_xdot"][0]
            <= sto["admc"].aggregates()["mae_xdot"][0])


def _wls_oracle(X: np.ndarray, b: np.ndarray, w_diag: np.ndarray,
                lb: np.ndarray, ub: np.ndarray | None) -> np.ndarray:
    """Exact box-constrained weighted least squares by brute force.

    Enumerates every active-set pattern (each coordinate free, at its
    lower bound, or at its upper bound), solves the reduced normal
    equations for the free coordinates, and keeps the feasible candidate
    with the smallest objective. The pattern of the true minimizer
    reproduces it exactly, so the argmin over patterns is the solution.
    """
    n = X.shape[1]
    xw = X / w_diag[:, None]
    hess = X.T @ xw
    lin = xw.T @ b
    hi = ub if ub is not None else np.full(n, np.inf)

    def objective(q: np.ndarray) -> float:
        r = X @ q - b
        return float(r @ (r / w_diag))

    best_q, best_f = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        if ub is None and 2 in pattern:
            continue
        q = np.zeros(n)
        fixed = np.zeros(n, dtype=bool)
        for i, p in enumerate(pattern):
            if p == 1:
                q[i], fixed[i] = lb[i], True
            elif p == 2:
                q[i], fixed[i] = ub[i], True
        free = ~fixed
        if free.any():
            rhs = lin[free] - hess[np.ix_(free, fixed)] @ q[fixed]
            try:
                q[free] = np.linalg.solve(hess[np.ix_(free, free)], rhs)
            except np.linalg.LinAlgError:
                continue
        q = np.clip(q, lb, hi)
        f = objective(q)
        if f < best_f:
            best_q, best_f = q, f
    return best_q


def test_criterion_04_constrained_wls_oracle():
    """The per-axis closed-form solution of the box-constrained fit matches
    brute-force active-set enumeration on 200 random instances."""
    rng = np.random.default_rng(20260825)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 5))
        m = 3 * n
        row_order = rng.permutation(m)
        profiles = rng.lognormal(sigma=1.0, size=(n, 3))
        X = np.zeros((m, n))
        axis_rows = []
        for i in range(n):
            rows3 = tuple(int(r) for r in row_order[3 * i:3 * i + 3])
            X[list(rows3), i] = profiles[i]
            axis_rows.append(rows3)
        design = DesignMatrix(X=X, axis_rows=tuple(axis_rows),
                              axis_profiles=profiles)
        b = rng.standard_normal(m) * rng.lognormal(sigma=1.0, size=m)
        w = rng.lognormal(sigma=1.5, size=m)
        lb = np.where(rng.random(n) < 0.5, 0.0,
                      0.1 * rng.lognormal(sigma=1.0, size=n))
        ub = lb + rng.lognormal(sigma=1.0, size=n) if rng.random() < 0.5 else None
        fast = solve_wls_boxed(design, b, w, lb, ub)
        oracle = _wls_oracle(X, b, w, lb, ub)
        scale = max(1.0, float(np.max(np.abs(oracle))))
        worst = max(worst, float(np.max(np.abs(fast - oracle))) / scale)
    assert worst <= 1e-8, worst


def test_criterion_05_psd_guarantee_across_campaigns():
    """No campaign anywhere in this module ever hands a non-PSD Q to a time
    update: the estimators reject, never repair, and the counters stay 0."""
    _stochastic_campaigns()
    _campaign("particle_stochastic", Technique.IMM, RUNS_IMM)
    _sweep_campaigns()
    _formation_campaigns()
    _gap_campaign()
    assert len(_REGISTRY) >= 17
    covered = {c.technique for c in _REGISTRY}
    assert {Technique.ASNC, Technique.ADMC, Technique.IMM} <= covered
    rejections = {c.scenario + "/" + c.technique.value:
                  c.diagnostics.get("q_psd_rejections", 0) for c in _REGISTRY}
    assert sum(rejections.values()) == 0, rejections


def test_criterion_06_analytic_q_matches_quadrature():
    """Closed-form discrete Q blocks agree with Simpson quadrature of the
    continuous noise integral to 1e-8 relative, elementwise."""
    config = load_scenario("particle_stochastic")
    white = white_noise_model(config)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        dt = float(rng.uniform(1e-3, 10.0))
        qt = float(rng.lognormal())
        analytic = snc_q_analytic([qt], dt)
        numeric = q_numeric(white, qt, 0.0, dt)
        worst = max(worst, float(np.max(np.abs(analytic - numeric)
                                        / np.abs(numeric))))
    assert worst <= 1e-8, worst

    worst = 0.0
    for beta in np.logspace(-5.0, 0.0, 5):
        model = markov_model(config.replace(beta=float(beta)))
        for dt in np.logspace(-1.0, np.log10(300.0), 5):
            analytic = dmc_q_analytic(0.5, float(beta), float(dt))
            # The position-position integrand is quartic, so Simpson needs a
            # few hundred panels for 1e-8 relative, and the exponential
            # boundary layer of width 1/beta must be resolved on top of that.
            n_sub = max(256, 2 * int(np.ceil(50.0 * beta * dt)))
            numeric = q_numeric(model, 0.5, 0.0, float(dt),
                                n_subintervals=n_sub)
            worst = max(worst, float(np.max(np.abs(analytic - numeric)
                                            / np.abs(numeric))))
    assert worst <= 1e-8, worst


def test_criterion_07_weighting_matches_monte_carlo():
    """The fourth-moment diagonal weights equal the Monte-Carlo variances of
    vech(dx dx^T) for Gaussian dx, within 5% at a million draws."""
    rng = np.random.default_rng(113)
    for n in (2, 3, 4):
        a = rng.standard_normal((n, n))
        sigma = a @ a.T + 0.5 * np.eye(n)
        window = SlidingWindow(1)
        window.push(InnovationRecord(
            innovation=np.zeros(1), innovation_cov=np.eye(1),
            gain=np.zeros((n, 1)), state_correction=np.zeros(n),
            correction_cov=sigma, dt=1.0,
        ))
        w = np.diag(weighting_matrix(window, steady_state=True))
        draws = rng.standard_normal((1_000_000, n)) @ np.linalg.cholesky(sigma).T
        rows, cols = vech_indices(n)
        mc = (draws[:, rows] * draws[:, cols]).var(axis=0)
        rel = float(np.max(np.abs(w - mc) / mc))
        assert rel <= 0.05, (n, rel)


def test_criterion_08_formation_order_relations():
    """Desk-scale small-body formation: adaptive filters stay consistent and
    more accurate than covariance matching, and only covariance matching
    falls apart under a mismodeled finite burn."""
    agg = {key: c.aggregates() for key, c in _formation_campaigns().items()}

    contain = {t: agg["none", t]["contain3_pos"][0]
               for t in ("cm", "asnc", "admc")}
    assert contain["asnc"] >= 0.95, contain
    assert contain["admc"] >= 0.95, contain
    assert contain["cm"] < min(contain["asnc"], contain["admc"]), contain

    pos = {t: agg["none", t]["mean_pos_err"][0] for t in ("cm", "asnc", "admc")}
    assert pos["asnc"] < pos["cm"], pos
    assert pos["admc"] <= pos["asnc"], pos

    vel_ratio = {t: agg["imperfect", t]["mean_vel_err"][0]
                 / agg["none", t]["mean_vel_err"][0]
                 for t in ("cm", "asnc", "admc")}
    assert vel_ratio["cm"] >= 2.0, vel_ratio
    assert vel_ratio["asnc"] < 1.15, vel_ratio
    assert vel_ratio["admc"] < 1.15, vel_ratio


def test_criterion_09_outage_extrapolation():
    """Across a 10x measurement gap the adaptive filter applies exactly the
    analytic Q at the gap's dt (position-block ratio 1000 vs nominal), and
    across-run 3-sigma containment recovers within five window lengths."""
    camp = _gap_campaign()
    assert camp.divergences == 0
    times = camp.times
    dt_nom = camp.config.meas_interval

    k_gap = None
    for rr in camp.run_results:
        ks = np.flatnonzero(np.asarray(rr.series["outage"], dtype=bool))
        assert ks.size == 1
        k = int(ks[0])
        if k_gap is None:
            k_gap = k
        assert k == k_gap
        dt_gap = times[k] - times[k - 1]
        assert abs(dt_gap - GAP_FACTOR * dt_nom) <= 1e-9

        qtilde = float(rr.series["qtilde"][k, 0])
        applied = np.asarray(rr.series["q_diag"][k])
        nominal_q11 = snc_q_analytic([qtilde], dt_nom)[0, 0]
        ratio = applied[0] / nominal_q11
        assert abs(ratio - 1000.0) <= 1e-9 * 1000.0, ratio
        gap_q = snc_q_analytic([qtilde], float(dt_gap))
        assert np.allclose(applied, np.diag(gap_q), rtol=1e-12, atol=0.0)

    contained = camp.containment_by_epoch()
    baseline = float(np.mean(contained[k_gap - 10:k_gap]))
    horizon = contained[k_gap + 1:k_gap + 1 + 5 * camp.config.window]
    assert np.any(horizon >= baseline - 0.02), (baseline, horizon.max())


def test_criterion_10_bit_identical_reruns(tmp_path):
    """Re-running a campaign with the same seed at 1 or 8 worker processes
    reproduces the aggregate, series, and manifest files byte for byte;
    only the wall-clock timing file may differ."""
    config = load_scenario("particle_stochastic")
    emitted = {}
    for label, threads in (("t1", 1), ("t8", 8), ("t8_again", 8)):
        result = run_campaign(config, Technique.ASNC, 16, seed=7,
                              threads=threads, keep_series=True)
        # Keep the PSD audit exhaustive over everything this module runs.
        _REGISTRY.append(result)
        assert result.diagnostics.get("q_psd_rejections", 0) == 0
        paths = emit_results(result, tmp_path / label)
        emitted[label] = {name: paths[name].read_bytes()
                          for name in ("aggregates", "series", "manifest")}
    assert emitted["t1"] == emitted["t8"] == emitted["t8_again"]
