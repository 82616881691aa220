"""Two-mode interacting-multiple-model (IMM) adaptive baseline.

Two Kalman filters share one dynamics/measurement model but hold different
fixed process-noise covariances built from lower and upper PSD bounds. Each
step mixes the mode states through the transition matrix, runs both filters,
updates the mode probabilities from Gaussian innovation likelihoods, and
reports a combined Q through the square-root mixture
Q^(1/2) = sum_i mu_i (Q_i)^(1/2), Q = Q^(1/2) Q^(1/2)^T, which is PSD by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import psd_sqrt, symmetrize
from .filter_core import (
    FilterDiagnostics,
    FilterModel,
    StateEstimate,
    measurement_update,
    time_update_with_info,
    ukf_measurement_update,
    ukf_time_update_with_info,
)

__all__ = ["ImmBank", "imm_step", "initial_mode_probs"]


def initial_mode_probs(qtilde0: float, qtilde_min: float, qtilde_max: float) -> np.ndarray:
    """Mode probabilities whose square-root Q mixture matches qtilde0.

    Solves mu_min sqrt(q_min) + mu_max sqrt(q_max) = sqrt(q0) with the
    probabilities summing to one, clipped to the simplex when q0 falls
    outside the bounds.
    """
    lo, hi = np.sqrt(qtilde_min), np.sqrt(qtilde_max)
    if hi <= lo:
        raise ValueError("qtilde_max must exceed qtilde_min")
    mu_max = (np.sqrt(qtilde0) - lo) / (hi - lo)
    mu_max = float(np.clip(mu_max, 0.0, 1.0))
    return np.array([1.0 - mu_max, mu_max])


@dataclass
class ImmBank:
    """State of the two-mode bank.

    Attributes:
        estimates: per-mode filter beliefs, time-synchronized.
        q_modes: fixed per-mode process noise covariances.
        mode_probs: current mode probabilities (simplex point).
        transition: row-stochastic 2x2 mode transition matrix.
        use_ukf: run the unscented updates instead of the linear ones.
    """

    estimates: list[StateEstimate]
    q_modes: tuple[np.ndarray, np.ndarray]
    mode_probs: np.ndarray
    transition: np.ndarray
    use_ukf: bool = False

    def __post_init__(self) -> None:
        self.mode_probs = np.asarray(self.mode_probs, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        if len(self.estimates) != 2 or len(self.q_modes) != 2:
            raise ValueError("the bank is strictly two-mode")
        if not np.allclose(self.transition.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")
        self._check_simplex()
        self._q_sqrts = tuple(psd_sqrt(q) for q in self.q_modes)

    def _check_simplex(self) -> None:
        mu = self.mode_probs
        if abs(float(mu.sum()) - 1.0) > 1e-12 or np.any(mu < 0.0) or np.any(mu > 1.0):
            raise ValueError(f"mode probabilities {mu} are not a simplex point")

    def combined_q(self) -> np.ndarray:
        """Probability-weighted square-root mixture of the mode Qs."""
        root = self.mode_probs[0] * self._q_sqrts[0] + self.mode_probs[1] * self._q_sqrts[1]
        return root @ root.T

    def combined_estimate(self) -> StateEstimate:
        """Moment-matched mixture of the mode beliefs."""
        mu = self.mode_probs
        mean = mu[0] * self.estimates[0].mean + mu[1] * self.estimates[1].mean
        cov = np.zeros_like(self.estimates[0].covariance)
        for w, est in zip(mu, self.estimates):
            d = est.mean - mean
            cov += w * (est.covariance + np.outer(d, d))
        return StateEstimate(mean, symmetrize(cov), self.estimates[0].epoch)


def _log_likelihood(record_innovation: np.ndarray, S: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0:
        return -np.inf
    quad = float(record_innovation @ np.linalg.solve(S, record_innovation))
    m = record_innovation.shape[0]
    return -0.5 * (quad + logdet + m * np.log(2.0 * np.pi))


def imm_step(
    bank: ImmBank,
    z: np.ndarray,
    model: FilterModel,
    t_next: float,
    diag: FilterDiagnostics | None = None,
) -> tuple[ImmBank, np.ndarray]:
    """Advance the bank through one measurement epoch.

    Mixes the mode states, time-updates each mode with its own fixed Q,
    measurement-updates both, refreshes the mode probabilities from the
    Gaussian innovation likelihoods, and returns the bank plus the combined
    Q. If both likelihoods underflow the probabilities are left unchanged
    and a diagnostic counter is bumped.
    """
    mu = bank.mode_probs
    pi = bank.transition
    mu_pred = pi.T @ mu
    mu_pred = mu_pred / mu_pred.sum()

    # Mix mode states: each mode restarts from a moment-matched blend.
    mixed: list[StateEstimate] = []
    for j in range(2):
        if mu_pred[j] <= 0.0:
            mixed.append(bank.estimates[j])
            continue
        w = pi[:, j] * mu / mu_pred[j]
        mean = w[0] * bank.estimates[0].mean + w[1] * bank.estimates[1].mean
        cov = np.zeros_like(bank.estimates[0].covariance)
        for i in range(2):
            d = bank.estimates[i].mean - mean
            cov += w[i] * (bank.estimates[i].covariance + np.outer(d, d))
        mixed.append(StateEstimate(mean, symmetrize(cov), bank.estimates[j].epoch))

    t_up = ukf_time_update_with_info if bank.use_ukf else time_update_with_info
    m_up = ukf_measurement_update if bank.use_ukf else measurement_update
    new_estimates: list[StateEstimate] = []
    log_likes = np.empty(2)
    for j in range(2):
        prop, _ = t_up(mixed[j], model, bank.q_modes[j], t_next, diag)
        post, record = m_up(prop, z, model, diag=diag)
        new_estimates.append(post)
        log_likes[j] = _log_likelihood(record.innovation, record.innovation_cov)

    shifted = log_likes - log_likes.max()
    likes = np.exp(shifted)
    if not np.isfinite(likes).any() or likes.sum() == 0.0:
        if diag is not None:
            diag.likelihood_underflows += 1
        new_mu = mu
    else:
        new_mu = mu_pred * likes
        new_mu = new_mu / new_mu.sum()

    new_bank = ImmBank(
        estimates=new_estimates,
        q_modes=bank.q_modes,
        mode_probs=new_mu,
        transition=bank.transition,
        use_ukf=bank.use_ukf,
    )
    return new_bank, new_bank.combined_q()
