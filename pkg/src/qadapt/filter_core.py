"""Discrete-time Kalman filter engine.

Provides the linear/extended time and measurement updates plus unscented
variants, and produces the per-update innovation bookkeeping that the
adaptive process-noise estimators consume. All covariance outputs are
symmetrized; posterior covariances use the Joseph form (or its sigma-point
analogue) for numerical robustness.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._linalg import check_psd, is_symmetric, min_max_eigenvalues, psd_sqrt, symmetrize

__all__ = [
    "StateEstimate",
    "FilterModel",
    "NoiseSegment",
    "InnovationRecord",
    "FilterDiagnostics",
    "time_update",
    "measurement_update",
    "ukf_time_update",
    "ukf_measurement_update",
    "sigma_points",
    "SIGMA_CENTER_WEIGHT",
]

# Unscented-transform scaling: the center sigma point carries weight 1/3,
# which keeps every weight positive for any state dimension. The remaining
# 2n points share the other 2/3 equally.
SIGMA_CENTER_WEIGHT = 1.0 / 3.0

_S_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class StateEstimate:
    """Filter belief: mean vector, formal covariance, and epoch in seconds."""

    mean: np.ndarray
    covariance: np.ndarray
    epoch: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float))
        n = self.mean.shape[0]
        if self.covariance.shape != (n, n):
            raise ValueError(
                f"covariance shape {self.covariance.shape} does not match state dim {n}"
            )

    def validate(self) -> None:
        """Enforce the symmetry / positive semi-definiteness invariants."""
        if not is_symmetric(self.covariance):
            raise ValueError("covariance is not symmetric to tolerance")
        ok, worst = check_psd(self.covariance)
        if not ok:
            raise ValueError(f"covariance not PSD: smallest eigenvalue {worst:.3e}")


@dataclass(frozen=True)
class NoiseSegment:
    """Where one dynamically constrained noise block lives in the state.

    A segment covers contiguous [positions, velocities] (kind 'white') or
    [positions, velocities, accelerations] (kind 'gauss_markov') starting at
    state index ``offset``, with ``n_axes`` components per block. ``q_offset``
    is the index of the segment's first axis within the NoiseSpec diagonal.
    """

    kind: str
    offset: int
    n_axes: int
    q_offset: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("white", "gauss_markov"):
            raise ValueError(f"unknown noise segment kind {self.kind!r}")

    @property
    def width(self) -> int:
        return (2 if self.kind == "white" else 3) * self.n_axes

    def position_indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.n_axes)

    def velocity_indices(self) -> np.ndarray:
        return np.arange(self.offset + self.n_axes, self.offset + 2 * self.n_axes)

    def accel_indices(self) -> np.ndarray:
        if self.kind != "gauss_markov":
            raise ValueError("white-noise segment has no acceleration block")
        return np.arange(self.offset + 2 * self.n_axes, self.offset + 3 * self.n_axes)


@dataclass
class FilterModel:
    """Dynamics and measurement hooks for one filter configuration.

    Attributes:
        state_dim: state vector length.
        propagate: flow map (x, t0, t1) -> x at t1; must accept stacked
            states of shape (..., state_dim) for the unscented updates, and
            carries any control/maneuver input internally.
        measure: predicted measurement (x, t) -> z, batched like propagate.
        meas_noise: measurement noise covariance R, symmetric PD.
        stm: state transition matrix (x, t0, t1) -> (state_dim, state_dim);
            Jacobian of propagate for nonlinear models. Identity over a
            zero-length interval. May be None for models that are only run
            through the unscented updates.
        meas_jacobian: measurement Jacobian (x, t) -> H; may be None when
            only the unscented update is used.
        noise_map: t -> Gamma(t), mapping driving white noise into the state
            derivative (used by the quadrature Q oracle).
        noise_segments: layout of the dynamically constrained noise blocks;
            None lets the adaptive estimators assume one segment spanning
            the whole state.
    """

    state_dim: int
    propagate: Callable[[np.ndarray, float, float], np.ndarray]
    measure: Callable[[np.ndarray, float], np.ndarray]
    meas_noise: np.ndarray
    stm: Callable[[np.ndarray | None, float, float], np.ndarray] | None = None
    meas_jacobian: Callable[[np.ndarray, float], np.ndarray] | None = None
    noise_map: Callable[[float], np.ndarray] | None = None
    noise_segments: tuple[NoiseSegment, ...] | None = None


@dataclass
class InnovationRecord:
    """Per-measurement-update bookkeeping consumed by the adaptive window.

    state_correction = gain @ innovation holds exactly as stored;
    correction_cov is gain @ innovation_cov @ gain.T. post_cov is the
    posterior covariance and prop_cov_pre_q the propagated covariance
    before process noise was added, both needed by the windowed estimate.
    """

    innovation: np.ndarray
    innovation_cov: np.ndarray
    gain: np.ndarray
    state_correction: np.ndarray
    correction_cov: np.ndarray
    dt: float
    outage: bool = False
    post_cov: np.ndarray | None = None
    prop_cov_pre_q: np.ndarray | None = None


@dataclass
class FilterDiagnostics:
    """Mutable per-run counters for contract violations and guard hits."""

    q_psd_rejections: int = 0
    cov_psd_failures: int = 0
    s_condition_failures: int = 0
    w_floor_hits: int = 0
    likelihood_underflows: int = 0
    psd_repairs: int = 0
    degenerate_axes: int = 0


def _require_psd_q(Q: np.ndarray, diag: FilterDiagnostics | None) -> None:
    ok, worst = check_psd(Q)
    if not ok:
        if diag is not None:
            diag.q_psd_rejections += 1
        raise ValueError(f"process noise Q not PSD: smallest eigenvalue {worst:.3e}")


def _require_psd_cov(P: np.ndarray, diag: FilterDiagnostics | None, where: str) -> None:
    ok, worst = check_psd(P)
    if not ok:
        if diag is not None:
            diag.cov_psd_failures += 1
        raise ValueError(
            f"covariance lost PSD in {where}: smallest eigenvalue {worst:.3e}"
        )


def time_update(
    est: StateEstimate,
    model: FilterModel,
    Q: np.ndarray,
    t_next: float,
    diag: FilterDiagnostics | None = None,
) -> StateEstimate:
    """Propagate the belief to t_next and add process noise.

    Covariance becomes Phi P Phi^T + Q (symmetrized), with Phi the state
    transition matrix about the pre-update mean.
    """
    new_est, _ = time_update_with_info(est, model, Q, t_next, diag)
    return new_est


def time_update_with_info(
    est: StateEstimate,
    model: FilterModel,
    Q: np.ndarray,
    t_next: float,
    diag: FilterDiagnostics | None = None,
) -> tuple[StateEstimate, np.ndarray]:
    """time_update that also returns the propagated covariance before Q."""
    if t_next < est.epoch:
        raise ValueError("t_next precedes the current epoch")
    if Q.shape != (model.state_dim, model.state_dim):
        raise ValueError("Q dimension does not match the state")
    _require_psd_q(Q, diag)
    if model.stm is None:
        raise ValueError("linear time update needs model.stm; use the unscented one")
    phi = model.stm(est.mean, est.epoch, t_next)
    mean = model.propagate(est.mean, est.epoch, t_next)
    cov_pre_q = symmetrize(phi @ est.covariance @ phi.T)
    cov = symmetrize(cov_pre_q + Q)
    _require_psd_cov(cov, diag, "time update")
    return StateEstimate(mean, cov, t_next), cov_pre_q


def _finish_update(
    est: StateEstimate,
    z: np.ndarray,
    z_pred: np.ndarray,
    S: np.ndarray,
    gain: np.ndarray,
    post_cov: np.ndarray,
    dt: float,
    outage: bool,
    prop_cov_pre_q: np.ndarray | None,
) -> tuple[StateEstimate, InnovationRecord]:
    innovation = z - z_pred
    correction = gain @ innovation
    sigma = symmetrize(gain @ S @ gain.T)
    new_est = StateEstimate(est.mean + correction, post_cov, est.epoch)
    record = InnovationRecord(
        innovation=innovation,
        innovation_cov=S,
        gain=gain,
        state_correction=correction,
        correction_cov=sigma,
        dt=dt,
        outage=outage,
        post_cov=post_cov,
        prop_cov_pre_q=prop_cov_pre_q,
    )
    return new_est, record


def _check_innovation_cov(S: np.ndarray, diag: FilterDiagnostics | None) -> None:
    lo, hi = min_max_eigenvalues(S)
    if lo <= 0.0 or hi / lo > _S_CONDITION_LIMIT:
        if diag is not None:
            diag.s_condition_failures += 1
        raise ValueError(
            f"innovation covariance ill-conditioned: eigenvalues [{lo:.3e}, {hi:.3e}]"
        )


def measurement_update(
    est: StateEstimate,
    z: np.ndarray,
    model: FilterModel,
    dt: float = 0.0,
    outage: bool = False,
    prop_cov_pre_q: np.ndarray | None = None,
    diag: FilterDiagnostics | None = None,
) -> tuple[StateEstimate, InnovationRecord]:
    """Standard Kalman measurement update with Joseph-form posterior.

    dt, outage, and prop_cov_pre_q are stamped into the returned
    InnovationRecord for the adaptive sliding window; they do not affect
    the update itself.
    """
    z = np.asarray(z, dtype=float)
    z_pred = model.measure(est.mean, est.epoch)
    if z.shape != z_pred.shape:
        raise ValueError("measurement dimension mismatch")
    if model.meas_jacobian is None:
        raise ValueError("model has no measurement Jacobian; use the unscented update")
    H = model.meas_jacobian(est.mean, est.epoch)
    R = model.meas_noise
    P = est.covariance
    PHt = P @ H.T
    S = symmetrize(H @ PHt + R)
    _check_innovation_cov(S, diag)
    gain = np.linalg.solve(S, PHt.T).T
    a = np.eye(est.mean.shape[0]) - gain @ H
    post_cov = symmetrize(a @ P @ a.T + gain @ R @ gain.T)
    return _finish_update(est, z, z_pred, S, gain, post_cov, dt, outage, prop_cov_pre_q)


def sigma_points(mean: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric sigma-point set with a 1/3 center weight.

    Returns:
        (points, weights): points has shape (2n+1, n) with the mean first;
        weights sum to one and are all positive.
    """
    n = mean.shape[0]
    scale = 1.5 * n  # n + lambda with lambda = n/2, so the center weight is 1/3
    try:
        root = np.linalg.cholesky(scale * cov)
    except np.linalg.LinAlgError:
        root = psd_sqrt(scale * cov)
    pts = np.empty((2 * n + 1, n))
    pts[0] = mean
    pts[1 : n + 1] = mean + root.T
    pts[n + 1 :] = mean - root.T
    weights = np.full(2 * n + 1, (1.0 - SIGMA_CENTER_WEIGHT) / (2 * n))
    weights[0] = SIGMA_CENTER_WEIGHT
    return pts, weights


def ukf_time_update(
    est: StateEstimate,
    model: FilterModel,
    Q: np.ndarray,
    t_next: float,
    diag: FilterDiagnostics | None = None,
) -> StateEstimate:
    """Unscented time update: propagate sigma points, re-moment-match, add Q."""
    new_est, _ = ukf_time_update_with_info(est, model, Q, t_next, diag)
    return new_est


def ukf_time_update_with_info(
    est: StateEstimate,
    model: FilterModel,
    Q: np.ndarray,
    t_next: float,
    diag: FilterDiagnostics | None = None,
) -> tuple[StateEstimate, np.ndarray]:
    """ukf_time_update that also returns the propagated covariance before Q."""
    if t_next < est.epoch:
        raise ValueError("t_next precedes the current epoch")
    if Q.shape != (model.state_dim, model.state_dim):
        raise ValueError("Q dimension does not match the state")
    _require_psd_q(Q, diag)
    pts, w = sigma_points(est.mean, est.covariance)
    prop = model.propagate(pts, est.epoch, t_next)
    mean = w @ prop
    dev = prop - mean
    cov_pre_q = symmetrize((dev.T * w) @ dev)
    cov = symmetrize(cov_pre_q + Q)
    _require_psd_cov(cov, diag, "time update")
    return StateEstimate(mean, cov, t_next), cov_pre_q


def ukf_measurement_update(
    est: StateEstimate,
    z: np.ndarray,
    model: FilterModel,
    dt: float = 0.0,
    outage: bool = False,
    prop_cov_pre_q: np.ndarray | None = None,
    diag: FilterDiagnostics | None = None,
) -> tuple[StateEstimate, InnovationRecord]:
    """Unscented measurement update using sigma-point cross-covariances."""
    z = np.asarray(z, dtype=float)
    pts, w = sigma_points(est.mean, est.covariance)
    z_sigma = model.measure(pts, est.epoch)
    z_pred = w @ z_sigma
    if z.shape != z_pred.shape:
        raise ValueError("measurement dimension mismatch")
    dz = z_sigma - z_pred
    dx = pts - est.mean
    S = symmetrize((dz.T * w) @ dz + model.meas_noise)
    _check_innovation_cov(S, diag)
    cross = (dx.T * w) @ dz
    gain = np.linalg.solve(S, cross.T).T
    # Joseph-style three-term form: more robust than P - K S K^T when the
    # solve for the gain carries roundoff.
    ckt = cross @ gain.T
    post_cov = symmetrize(est.covariance - ckt - ckt.T + gain @ S @ gain.T)
    _require_psd_cov(post_cov, diag, "measurement update")
    return _finish_update(est, z, z_pred, S, gain, post_cov, dt, outage, prop_cov_pre_q)
