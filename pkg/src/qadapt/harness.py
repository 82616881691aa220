"""Seeded Monte-Carlo campaign driver, metrics, and artifact emission.

A campaign runs one estimation technique over many independently seeded
simulations of a scenario, collects per-run error series and summary
metrics, and aggregates them with standard errors. Runs are embarrassingly
parallel: each owns its filter, adaptation window, and RNG streams, so
results are invariant to the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .adaptive import SlidingWindow, admc_step, asnc_step, assemble_q, cm_estimate_ss
from .baselines import ImmBank, imm_step, initial_mode_probs
from .filter_core import (
    FilterDiagnostics,
    FilterModel,
    StateEstimate,
    measurement_update,
    time_update_with_info,
    ukf_measurement_update,
    ukf_time_update_with_info,
)
from .process_noise import NoiseSpec
from .scenarios import ScenarioConfig
from .scenarios.asteroid import (
    STATE_SLICES,
    epoch_measurement,
    formation_filter_model,
    formation_truth,
)
from .scenarios.particle import (
    TRUTH_QTILDE,
    deterministic_accel,
    markov_model,
    measurement_times,
    particle_measurements,
    particle_truth,
    white_noise_model,
)

__all__ = [
    "Technique",
    "RunResult",
    "CampaignResult",
    "run_campaign",
    "compute_mae",
    "emit_results",
]

# A run is flagged diverged when position error exceeds this multiple of the
# initial formal 1-sigma for this many consecutive measurement epochs.
DIVERGENCE_SIGMA_FACTOR = 100.0
DIVERGENCE_CONSECUTIVE = 10

# Metric windows: particle metrics average over the trailing seconds of the
# run, formation metrics over the trailing fraction of the orbit count.
PARTICLE_METRIC_WINDOW_S = 45.0
FORMATION_METRIC_ORBITS = 2.0

# Fixed two-mode transition matrix of the IMM baseline.
MODE_TRANSITION = np.array([[0.99, 0.01], [0.01, 0.99]])


class Technique(str, Enum):
    """Process-noise strategy run inside the filter."""

    NONE = "none"
    SNC = "snc"
    DMC = "dmc"
    CM = "cm"
    IMM = "imm"
    ASNC = "asnc"
    ADMC = "admc"

    @classmethod
    def parse(cls, name: str) -> "Technique":
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            options = ", ".join(t.value for t in cls)
            raise ValueError(f"unknown technique {name!r}; expected one of {options}")


_MARKOV_TECHNIQUES = (Technique.DMC, Technique.ADMC)
_SPEC_LAW_TECHNIQUES = (Technique.SNC, Technique.DMC, Technique.ASNC, Technique.ADMC)


@dataclass
class RunResult:
    """Summary of one Monte-Carlo run.

    ``mae`` holds the per-component mean absolute error over the metric
    window; ``q_mae`` the windowed MAE of the applied Q position/velocity
    variance entries against the analytic truth law (particle stochastic
    runs only). ``pos_contained`` marks the epochs where every position
    component sat inside its 3-sigma formal bound, over the full run.
    ``series`` optionally retains the full per-epoch arrays.
    """

    run_index: int
    diverged: bool
    diverged_at: float | None
    n_steps: int
    mae: np.ndarray
    q_mae: np.ndarray | None
    mean_pos_err: float
    mean_vel_err: float
    contain3_pos: float
    contain3_vel: float
    pos_contained: np.ndarray
    runtime_per_call: float
    series: dict[str, np.ndarray] | None = None


@dataclass
class CampaignResult:
    """All runs of one (scenario, technique) campaign plus shared context.

    Aggregates are always recomputed from the stored per-run results, so the
    emitted tables match whatever is retained here by construction.
    """

    scenario: str
    technique: Technique
    runs: int
    seed: int
    config: ScenarioConfig
    times: np.ndarray
    metric_start: float
    error_labels: tuple[str, ...]
    position_components: tuple[int, ...]
    velocity_components: tuple[int, ...]
    run_results: list[RunResult]
    diagnostics: dict[str, int]

    @property
    def divergences(self) -> int:
        return sum(1 for r in self.run_results if r.diverged)

    def converged_runs(self) -> list[RunResult]:
        return [r for r in self.run_results if not r.diverged]

    def aggregates(self) -> dict[str, tuple[float, float]]:
        """Metric name -> (mean over runs, standard error of the mean)."""
        out: dict[str, tuple[float, float]] = {}
        if not self.run_results:
            return out
        ok = self.converged_runs()

        def add(name: str, values) -> None:
            vals = np.asarray(values, dtype=float)
            mean = float(vals.mean())
            se = 0.0
            if vals.size > 1:
                se = float(vals.std(ddof=1) / np.sqrt(vals.size))
            out[name] = (mean, se)

        if ok:
            mae = np.stack([r.mae for r in ok])
            for i, label in enumerate(self.error_labels):
                add(f"mae_{label}", mae[:, i])
            add("mean_pos_err", [r.mean_pos_err for r in ok])
            add("mean_vel_err", [r.mean_vel_err for r in ok])
            add("contain3_pos", [r.contain3_pos for r in ok])
            add("contain3_vel", [r.contain3_vel for r in ok])
            if ok[0].q_mae is not None:
                q_mae = np.stack([r.q_mae for r in ok])
                add("q11_mae", q_mae[:, 0])
                add("q22_mae", q_mae[:, 1])
        out["divergences"] = (float(self.divergences), 0.0)
        out["runs_used"] = (float(len(ok)), 0.0)
        return out

    def runtime_stats(self) -> tuple[float, float] | None:
        """Mean and standard error of the per-call wall time, converged runs.

        Kept out of aggregates(): timing is the one quantity that must not
        participate in the bit-reproducibility guarantee of the emitted
        aggregate files.
        """
        ok = self.converged_runs()
        if not ok:
            return None
        vals = np.array([r.runtime_per_call for r in ok])
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        return float(vals.mean()), se

    def containment_by_epoch(self) -> np.ndarray:
        """Fraction of non-diverged runs with all position errors in 3-sigma,
        per epoch."""
        ok = self.converged_runs()
        if not ok:
            return np.full(self.times.shape, np.nan)
        return np.mean([r.pos_contained for r in ok], axis=0)


def compute_mae(times: np.ndarray, errors: np.ndarray, t_start: float,
                t_end: float | None = None) -> np.ndarray:
    """Per-component mean absolute error over [t_start, t_end].

    Args:
        times: epoch vector, shape (K,).
        errors: error series, shape (K,) or (K, n).
        t_start: inclusive window start (a tiny tolerance absorbs float
            noise in the epoch grid).
        t_end: inclusive window end; defaults to the last epoch.

    Returns:
        MAE per component, shape () for 1-D input else (n,).

    Raises:
        ValueError: the window contains no epochs.
    """
    times = np.asarray(times, dtype=float)
    errors = np.asarray(errors, dtype=float)
    hi = times[-1] if t_end is None else t_end
    tol = 1e-9 * max(1.0, abs(hi))
    mask = (times >= t_start - tol) & (times <= hi + tol)
    if not np.any(mask):
        raise ValueError("empty metric window")
    return np.mean(np.abs(errors[mask]), axis=0)


def _rng_streams(seed: int, run_index: int) -> tuple[np.random.Generator, ...]:
    """Four independent Philox streams (truth, init, measurement, maneuver).

    Streams are derived from the campaign seed and run index alone, so a
    run reproduces bit-identically regardless of scheduling.
    """
    root = np.random.SeedSequence(seed, spawn_key=(run_index,))
    return tuple(np.random.Generator(np.random.Philox(s)) for s in root.spawn(4))


class _TechniqueDriver:
    """Per-run strategy wrapper: picks Q each step and adapts it after.

    Owns the noise spec, sliding window, or IMM bank for the configured
    technique. The (possibly maneuver-bearing) filter model is passed in
    per step because formation scenarios rebind the measurement hooks at
    every epoch.
    """

    def __init__(self, technique: Technique, config: ScenarioConfig,
                 model: FilterModel, use_ukf: bool):
        self.technique = technique
        self.config = config
        self.use_ukf = use_ukf
        self.segments = model.noise_segments
        self.state_dim = model.state_dim
        self.steady_state_weighting = config.kind == "particle"
        self.calls = 0
        self.window: SlidingWindow | None = None
        self.spec: NoiseSpec | None = None
        self._cm_q: np.ndarray | None = None
        self._fixed_q_cache: dict[float, np.ndarray] = {}
        self.bank: ImmBank | None = None
        self._bank_dt: float | None = None
        self._imm_specs: tuple[NoiseSpec, NoiseSpec] | None = None
        self._probs0: np.ndarray | None = None

        n_axes = sum(seg.n_axes for seg in self.segments)
        self.n_axes = n_axes
        markov = technique in _MARKOV_TECHNIQUES
        if technique in (*_SPEC_LAW_TECHNIQUES, Technique.CM):
            adaptive = technique in (Technique.ASNC, Technique.ADMC)
            if markov:
                qtilde0 = config.markov_qtilde0
                lower = config.markov_qtilde_lower
                upper_val = config.markov_qtilde_upper
            else:
                qtilde0 = config.qtilde0
                lower = config.qtilde_lower
                upper_val = config.qtilde_upper
            upper = None
            if adaptive and upper_val is not None:
                upper = np.full(n_axes, upper_val)
            alpha = 1.0
            if technique is Technique.ASNC:
                alpha = config.alpha_asnc
            elif technique is Technique.ADMC:
                alpha = config.alpha_admc
            self.spec = NoiseSpec(
                qtilde_diag=np.full(n_axes, qtilde0),
                lower_bound=np.full(n_axes, lower) if adaptive else None,
                upper_bound=upper,
                beta_diag=np.full(n_axes, config.beta) if markov else None,
                alpha=alpha,
            )
        if technique in (Technique.CM, Technique.ASNC, Technique.ADMC):
            self.window = SlidingWindow(config.window)
        if technique is Technique.IMM:
            self._imm_specs = (
                NoiseSpec(np.full(n_axes, config.imm_qtilde_min)),
                NoiseSpec(np.full(n_axes, config.imm_qtilde_max)),
            )
            if config.kind == "formation":
                self._probs0 = np.array([0.5, 0.5])
            else:
                self._probs0 = initial_mode_probs(
                    config.qtilde0, config.imm_qtilde_min, config.imm_qtilde_max
                )

    def qtilde_in_effect(self) -> np.ndarray:
        """Current continuous-time intensity diagonal, or NaN when the
        technique has no such parameter (none, CM after takeover, IMM)."""
        if self.technique in _SPEC_LAW_TECHNIQUES:
            return np.array(self.spec.qtilde_diag, copy=True)
        if self.technique is Technique.CM and self._cm_q is None:
            return np.array(self.spec.qtilde_diag, copy=True)
        return np.full(self.n_axes, np.nan)

    def _q_for(self, dt: float) -> np.ndarray:
        if self.technique is Technique.NONE:
            return np.zeros((self.state_dim, self.state_dim))
        if self.technique is Technique.CM and self._cm_q is not None:
            return self._cm_q
        if self.technique in (Technique.SNC, Technique.DMC, Technique.CM):
            q = self._fixed_q_cache.get(dt)
            if q is None:
                q = assemble_q(self.segments, self.spec, dt, self.state_dim)
                self._fixed_q_cache[dt] = q
            return q
        return assemble_q(self.segments, self.spec, dt, self.state_dim)

    def _imm_bank(self, est: StateEstimate, dt: float) -> ImmBank:
        if self.bank is not None and dt == self._bank_dt:
            return self.bank
        q_modes = tuple(
            assemble_q(self.segments, spec, dt, self.state_dim)
            for spec in self._imm_specs
        )
        if self.bank is None:
            estimates = [est, StateEstimate(est.mean.copy(), est.covariance.copy(), est.epoch)]
            probs = np.array(self._probs0, copy=True)
        else:
            estimates = self.bank.estimates
            probs = self.bank.mode_probs
        self.bank = ImmBank(
            estimates=list(estimates),
            q_modes=q_modes,
            mode_probs=probs,
            transition=MODE_TRANSITION,
            use_ukf=self.use_ukf,
        )
        self._bank_dt = dt
        return self.bank

    def step(self, est: StateEstimate, z: np.ndarray, model: FilterModel,
             t_next: float, dt: float, outage: bool,
             diag: FilterDiagnostics) -> tuple[StateEstimate, np.ndarray]:
        """Advance one measurement epoch; returns (posterior, applied Q)."""
        self.calls += 1
        if self.technique is Technique.IMM:
            bank = self._imm_bank(est, dt)
            self.bank, q_combined = imm_step(bank, z, model, t_next, diag)
            return self.bank.combined_estimate(), q_combined
        q = self._q_for(dt)
        if self.use_ukf:
            est, pre = ukf_time_update_with_info(est, model, q, t_next, diag)
            est, rec = ukf_measurement_update(
                est, z, model, dt=dt, outage=outage, prop_cov_pre_q=pre, diag=diag
            )
        else:
            est, pre = time_update_with_info(est, model, q, t_next, diag)
            est, rec = measurement_update(
                est, z, model, dt=dt, outage=outage, prop_cov_pre_q=pre, diag=diag
            )
        if self.window is not None:
            self.window.push(rec)
        return est, q

    def adapt(self, model: FilterModel, dt_next: float,
              diag: FilterDiagnostics) -> None:
        """Refresh the Q strategy after a measurement epoch.

        Adaptation waits until the sliding window is full and the configured
        delay in filter calls has elapsed; afterwards it runs every epoch.
        """
        if self.window is None:
            return
        ready = self.window.is_full and self.calls >= (
            self.config.window + self.config.adaptation_delay
        )
        if not ready:
            return
        if self.technique is Technique.CM:
            self._cm_q = cm_estimate_ss(self.window)
            return
        step_fn = asnc_step if self.technique is Technique.ASNC else admc_step
        self.spec, _ = step_fn(
            self.window,
            self.spec,
            model,
            dt_next,
            steady_state_weighting=self.steady_state_weighting,
            diag=diag,
        )


def _finalize_metrics(times, err, sig, pos_comps, vel_comps,
                      metric_start, diverged):
    """Windowed MAE plus containment fractions; NaN for diverged runs."""
    n_err = err.shape[1]
    if diverged:
        nan = float("nan")
        return np.full(n_err, nan), nan, nan
    mae = compute_mae(times, err, metric_start)
    tol = 1e-9 * max(1.0, abs(times[-1]))
    mask = times >= metric_start - tol
    inside = np.abs(err[mask]) <= 3.0 * sig[mask]
    contain_pos = float(np.mean(inside[:, pos_comps]))
    contain_vel = float(np.mean(inside[:, vel_comps]))
    return mae, contain_pos, contain_vel


def _run_particle(config: ScenarioConfig, technique: Technique, run_index: int,
                  seed: int, keep_series: bool,
                  diag: FilterDiagnostics) -> RunResult:
    rng_truth, rng_init, rng_meas, _ = _rng_streams(seed, run_index)
    stochastic = config.truth_mode == "stochastic"
    times, truth = particle_truth(config, rng_truth if stochastic else None)
    zs = particle_measurements(truth, config, rng_meas)
    markov = technique in _MARKOV_TECHNIQUES
    model = markov_model(config) if markov else white_noise_model(config)

    init_err = np.array([config.position_sigma0, config.velocity_sigma0])
    init_err = init_err * rng_init.standard_normal(2)
    mean0 = np.asarray(config.initial_truth, dtype=float) + init_err
    cov_diag = [config.position_sigma0**2, config.velocity_sigma0**2]
    if markov:
        mean0 = np.append(mean0, 0.0)
        cov_diag.append(config.accel_sigma0**2)
    est = StateEstimate(mean0, np.diag(cov_diag), 0.0)

    labels = ("x", "xdot", "accel") if markov else ("x", "xdot")
    n_err = len(labels)
    accel_truth = (
        np.zeros(times.size) if stochastic else deterministic_accel(times)
    )

    K = times.size
    err = np.full((K, n_err), np.nan)
    sig = np.full((K, n_err), np.nan)
    qdiag = np.full((K, model.state_dim), np.nan)
    qtil = np.full((K, 1), np.nan)
    outages = np.zeros(K, dtype=bool)
    pos_contained = np.zeros(K, dtype=bool)

    driver = _TechniqueDriver(technique, config, model, use_ukf=False)
    threshold = DIVERGENCE_SIGMA_FACTOR * config.position_sigma0
    elapsed = 0.0
    over = 0
    diverged = False
    diverged_at = None
    steps_done = 0
    t_prev = 0.0
    for k in range(K):
        t = times[k]
        dt = t - t_prev
        outages[k] = dt > config.outage_factor * config.meas_interval
        qtil[k] = driver.qtilde_in_effect()
        tic = time.perf_counter()
        est, q_applied = driver.step(est, zs[k], model, t, dt, bool(outages[k]), diag)
        dt_next = times[k + 1] - t if k + 1 < K else config.meas_interval
        driver.adapt(model, dt_next, diag)
        elapsed += time.perf_counter() - tic
        steps_done += 1
        t_prev = t

        e = np.empty(n_err)
        e[0] = est.mean[0] - truth[k, 0]
        e[1] = est.mean[1] - truth[k, 1]
        if markov:
            e[2] = est.mean[2] - accel_truth[k]
        s = np.sqrt(np.diag(est.covariance))[:n_err]
        err[k] = e
        sig[k] = s
        qdiag[k] = np.diag(q_applied)
        pos_contained[k] = abs(e[0]) <= 3.0 * s[0]

        if abs(e[0]) > threshold:
            over += 1
            if over >= DIVERGENCE_CONSECUTIVE:
                diverged = True
                diverged_at = t
                break
        else:
            over = 0

    metric_start = times[-1] - PARTICLE_METRIC_WINDOW_S
    mae, contain_pos, contain_vel = _finalize_metrics(
        times, err, sig, (0,), (1,), metric_start, diverged
    )
    q_mae = None
    if stochastic:
        if diverged:
            q_mae = np.array([np.nan, np.nan])
        else:
            dts = np.diff(times, prepend=0.0)
            tol = 1e-9 * max(1.0, times[-1])
            mask = times >= metric_start - tol
            true_q11 = TRUTH_QTILDE * dts**3 / 3.0
            true_q22 = TRUTH_QTILDE * dts
            q_mae = np.array([
                np.mean(np.abs(qdiag[mask, 0] - true_q11[mask])),
                np.mean(np.abs(qdiag[mask, 1] - true_q22[mask])),
            ])
    series = None
    if keep_series:
        series = {
            "err": err,
            "sigma": sig,
            "q_diag": qdiag,
            "qtilde": qtil,
            "outage": outages,
        }
    return RunResult(
        run_index=run_index,
        diverged=diverged,
        diverged_at=diverged_at,
        n_steps=steps_done,
        mae=mae,
        q_mae=q_mae,
        mean_pos_err=float(mae[0]),
        mean_vel_err=float(mae[1]),
        contain3_pos=contain_pos,
        contain3_vel=contain_vel,
        pos_contained=pos_contained,
        runtime_per_call=elapsed / max(steps_done, 1),
        series=series,
    )


_FORMATION_LABELS = (
    "c_rx", "c_ry", "c_rz", "c_vx", "c_vy", "c_vz",
    "d_rx", "d_ry", "d_rz", "d_vx", "d_vy", "d_vz",
)
_FORMATION_POS = (0, 1, 2, 6, 7, 8)
_FORMATION_VEL = (3, 4, 5, 9, 10, 11)


def _run_formation(config: ScenarioConfig, technique: Technique, run_index: int,
                   seed: int, keep_series: bool,
                   diag: FilterDiagnostics) -> RunResult:
    _, rng_init, rng_meas, rng_mnv = _rng_streams(seed, run_index)
    truth = formation_truth(config)
    markov = technique in _MARKOV_TECHNIQUES
    kind = "markov" if markov else "white"

    profile = truth.maneuver
    if profile is not None and config.truth_mode == "imperfect":
        profile = profile.perturbed(
            rng_mnv,
            config.maneuver.magnitude_error_std,
            config.maneuver.direction_error_std_deg,
        )
    model = formation_filter_model(config, kind, maneuver=profile)

    sigmas = np.concatenate([
        np.full(3, config.position_sigma0),
        np.full(3, config.velocity_sigma0),
    ])
    sigmas = np.tile(sigmas, 2)
    init_err = sigmas * rng_init.standard_normal(12)
    phys0 = truth.initial + init_err
    if markov:
        mean0 = np.concatenate([
            phys0[0:6], np.zeros(3), phys0[6:12], np.zeros(3),
        ])
        cov_diag = np.concatenate([
            sigmas[0:6]**2, np.full(3, config.accel_sigma0**2),
            sigmas[6:12]**2, np.full(3, config.accel_sigma0**2),
        ])
    else:
        mean0 = phys0
        cov_diag = sigmas**2
    est = StateEstimate(mean0, np.diag(cov_diag), 0.0)

    times = truth.times
    K = times.size
    n_err = 12
    err = np.full((K, n_err), np.nan)
    sig = np.full((K, n_err), np.nan)
    qdiag = np.full((K, model.state_dim), np.nan)
    qtil = np.full((K, 6), np.nan)
    outages = np.zeros(K, dtype=bool)
    pos_contained = np.zeros(K, dtype=bool)

    driver = _TechniqueDriver(technique, config, model, use_ukf=True)
    slices = STATE_SLICES[kind]
    threshold = DIVERGENCE_SIGMA_FACTOR * config.position_sigma0
    elapsed = 0.0
    over = 0
    diverged = False
    diverged_at = None
    steps_done = 0
    t_prev = 0.0
    for k in range(K):
        t = times[k]
        dt = t - t_prev
        outages[k] = dt > config.outage_factor * config.meas_interval
        qtil[k] = driver.qtilde_in_effect()
        measure, meas_cov = epoch_measurement(truth, k, kind)
        model.measure = measure
        model.meas_noise = meas_cov
        z = truth.z_true[k] + truth.noise_std[k] * rng_meas.standard_normal(
            truth.noise_std[k].size
        )
        tic = time.perf_counter()
        est, q_applied = driver.step(est, z, model, t, dt, bool(outages[k]), diag)
        dt_next = times[k + 1] - t if k + 1 < K else config.meas_interval
        driver.adapt(model, dt_next, diag)
        elapsed += time.perf_counter() - tic
        steps_done += 1
        t_prev = t

        est_phys = np.concatenate([est.mean[sl] for sl in slices])
        e = est_phys - truth.states[k]
        var = np.diag(est.covariance)
        s = np.sqrt(np.concatenate([var[sl] for sl in slices]))
        err[k] = e
        sig[k] = s
        qdiag[k] = np.diag(q_applied)
        inside = np.abs(e[list(_FORMATION_POS)]) <= 3.0 * s[list(_FORMATION_POS)]
        pos_contained[k] = bool(np.all(inside))

        worst = max(np.linalg.norm(e[0:3]), np.linalg.norm(e[6:9]))
        if worst > threshold:
            over += 1
            if over >= DIVERGENCE_CONSECUTIVE:
                diverged = True
                diverged_at = t
                break
        else:
            over = 0

    metric_start = times[-1] - FORMATION_METRIC_ORBITS * truth.period
    mae, contain_pos, contain_vel = _finalize_metrics(
        times, err, sig, _FORMATION_POS, _FORMATION_VEL,
        metric_start, diverged,
    )
    if diverged:
        mean_pos = float("nan")
        mean_vel = float("nan")
    else:
        tol = 1e-9 * times[-1]
        mask = times >= metric_start - tol
        pos_norms = 0.5 * (
            np.linalg.norm(err[mask][:, 0:3], axis=1)
            + np.linalg.norm(err[mask][:, 6:9], axis=1)
        )
        vel_norms = 0.5 * (
            np.linalg.norm(err[mask][:, 3:6], axis=1)
            + np.linalg.norm(err[mask][:, 9:12], axis=1)
        )
        mean_pos = float(pos_norms.mean())
        mean_vel = float(vel_norms.mean())
    series = None
    if keep_series:
        series = {
            "err": err,
            "sigma": sig,
            "q_diag": qdiag,
            "qtilde": qtil,
            "outage": outages,
        }
    return RunResult(
        run_index=run_index,
        diverged=diverged,
        diverged_at=diverged_at,
        n_steps=steps_done,
        mae=mae,
        q_mae=None,
        mean_pos_err=mean_pos,
        mean_vel_err=mean_vel,
        contain3_pos=contain_pos,
        contain3_vel=contain_vel,
        pos_contained=pos_contained,
        runtime_per_call=elapsed / max(steps_done, 1),
        series=series,
    )


def _execute_run(args) -> tuple[RunResult, dict[str, int]]:
    config, technique_value, run_index, seed, keep_series = args
    technique = Technique(technique_value)
    diag = FilterDiagnostics()
    if config.kind == "particle":
        result = _run_particle(config, technique, run_index, seed, keep_series, diag)
    else:
        result = _run_formation(config, technique, run_index, seed, keep_series, diag)
    return result, dataclasses.asdict(diag)


def _campaign_frame(config: ScenarioConfig) -> tuple[np.ndarray, float]:
    """(measurement epochs, metric window start time) for the scenario."""
    if config.kind == "particle":
        times = measurement_times(config)
        return times, times[-1] - PARTICLE_METRIC_WINDOW_S
    truth = formation_truth(config)
    return truth.times, truth.times[-1] - FORMATION_METRIC_ORBITS * truth.period


def run_campaign(config: ScenarioConfig, technique: Technique | str, runs: int,
                 seed: int | None = None, *, threads: int = 1,
                 keep_series: bool = False) -> CampaignResult:
    """Run a seeded Monte-Carlo campaign of one technique on one scenario.

    Every run draws its RNG streams from (seed, run index) only, so the
    result is reproducible and invariant to the thread count. Diverged runs
    stay in ``run_results`` flagged as such; aggregates skip them.

    Args:
        config: scenario description.
        technique: process-noise strategy, by enum or name.
        runs: number of Monte-Carlo runs, >= 1.
        seed: campaign seed; defaults to the scenario's.
        threads: worker processes; 1 runs in-process.
        keep_series: retain full per-epoch series on every run.

    Returns:
        CampaignResult with one RunResult per run, in run order.
    """
    technique = technique if isinstance(technique, Technique) else Technique.parse(technique)
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if seed is None:
        seed = config.default_seed
    seed = int(seed)

    times, metric_start = _campaign_frame(config)
    if config.kind == "particle":
        markov = technique in _MARKOV_TECHNIQUES
        labels = ("x", "xdot", "accel") if markov else ("x", "xdot")
        pos_comps: tuple[int, ...] = (0,)
        vel_comps: tuple[int, ...] = (1,)
    else:
        labels = _FORMATION_LABELS
        pos_comps = _FORMATION_POS
        vel_comps = _FORMATION_VEL

    arg_list = [
        (config, technique.value, r, seed, keep_series) for r in range(runs)
    ]
    if threads <= 1:
        outcomes = [_execute_run(a) for a in arg_list]
    else:
        chunk = max(1, runs // (threads * 4))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_execute_run, arg_list, chunksize=chunk))

    run_results = [r for r, _ in outcomes]
    diagnostics: dict[str, int] = {}
    for _, d in outcomes:
        for key, val in d.items():
            diagnostics[key] = diagnostics.get(key, 0) + val

    return CampaignResult(
        scenario=config.name,
        technique=technique,
        runs=runs,
        seed=seed,
        config=config,
        times=times,
        metric_start=metric_start,
        error_labels=labels,
        position_components=pos_comps,
        velocity_components=vel_comps,
        run_results=run_results,
        diagnostics=diagnostics,
    )


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def emit_results(result: CampaignResult, out_dir, include_series: bool = True) -> dict[str, Path]:
    """Write the aggregate table, per-run series, run manifest, and timing.

    ``aggregates.csv`` has one row per aggregate metric with its standard
    error. ``series.csv`` holds long-format per-epoch values for every run
    that retained them (header only otherwise). ``manifest.json`` records
    the fully resolved scenario configuration for provenance. These three
    are byte-deterministic for a given (config, technique, runs, seed);
    wall-clock timing goes to ``timing.csv``, the one artifact allowed to
    differ between identical re-runs.

    Returns:
        Mapping of artifact name to written path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "aggregates": out / "aggregates.csv",
        "series": out / "series.csv",
        "manifest": out / "manifest.json",
        "timing": out / "timing.csv",
    }

    with open(paths["aggregates"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["technique", "metric", "value", "standard_error", "runs", "seed"])
        for metric, (value, se) in result.aggregates().items():
            writer.writerow([
                result.technique.value, metric, _fmt(value), _fmt(se),
                result.runs, result.seed,
            ])

    with open(paths["series"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "time", "field", "value"])
        if include_series:
            for rr in result.run_results:
                if rr.series is None:
                    continue
                for name in sorted(rr.series):
                    arr = np.asarray(rr.series[name], dtype=float)
                    cols = (
                        [(name, arr)] if arr.ndim == 1
                        else [(f"{name}_{i}", arr[:, i]) for i in range(arr.shape[1])]
                    )
                    for label, col in cols:
                        for t, v in zip(result.times[: col.size], col):
                            writer.writerow([rr.run_index, _fmt(t), label, _fmt(v)])

    with open(paths["timing"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["technique", "metric", "value", "standard_error"])
        stats = result.runtime_stats()
        if stats is not None:
            writer.writerow([
                result.technique.value, "runtime_per_call_s",
                _fmt(stats[0]), _fmt(stats[1]),
            ])

    manifest = {
        "scenario": result.scenario,
        "technique": result.technique.value,
        "runs": result.runs,
        "seed": result.seed,
        "metric_window_start": result.metric_start,
        "epochs": int(result.times.size),
        "divergences": result.divergences,
        "diagnostics": result.diagnostics,
        "config": dataclasses.asdict(result.config),
    }
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
