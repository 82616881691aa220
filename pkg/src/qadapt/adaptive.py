"""Adaptive process-noise estimation.

Implements windowed covariance matching, the Isserlis-theorem diagonal
weighting matrix, the box-constrained weighted least-squares fit of the
continuous-time PSD diagonal, and the per-step orchestration that fuses
them with the analytic discrete-Q models (ASNC for the white-acceleration
layout, ADMC for the Gauss-Markov layout).

The estimators never emit a non-PSD Q: the fit is over a nonnegative PSD
diagonal and the analytic Q forms are PSD by construction, so no repair
step exists (a diagnostics counter proves it stays at zero).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from ._linalg import vech_indices
from .filter_core import FilterDiagnostics, FilterModel, InnovationRecord, NoiseSegment
from .process_noise import NoiseSpec, dmc_coefficients, dmc_q_analytic, q_numeric, snc_q_analytic

__all__ = [
    "SlidingWindow",
    "DesignMatrix",
    "cm_estimate_full",
    "cm_estimate_ss",
    "weighting_matrix",
    "build_design_matrix",
    "solve_wls_boxed",
    "forgetting_update",
    "asnc_step",
    "admc_step",
    "assemble_q",
    "default_segments",
]

_W_FLOOR = 1e-300


class SlidingWindow:
    """Bounded FIFO of innovation records with outage exclusion.

    Records flagged as outages are rejected on insert so they never
    contribute to the windowed statistics. Record fields are mirrored into
    preallocated ring buffers so the windowed sums reduce in one vectorized
    pass per call instead of a Python loop over the records; every statistic
    taken from the window is order-independent, so slot order in the buffers
    does not matter.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._records: deque[InnovationRecord] = deque(maxlen=capacity)
        self._corrections: np.ndarray | None = None
        self._corr_covs: np.ndarray | None = None
        self._post_covs: np.ndarray | None = None
        self._prop_covs: np.ndarray | None = None
        self._has_full_fields = True
        self._head = 0
        self._count = 0

    def push(self, record: InnovationRecord) -> bool:
        """Insert a record; returns False when it was excluded as an outage."""
        if record.outage:
            return False
        self._records.append(record)
        n = record.state_correction.shape[0]
        if self._corrections is None:
            self._corrections = np.empty((self.capacity, n))
            self._corr_covs = np.empty((self.capacity, n, n))
            self._post_covs = np.empty((self.capacity, n, n))
            self._prop_covs = np.empty((self.capacity, n, n))
        slot = self._head
        self._corrections[slot] = record.state_correction
        self._corr_covs[slot] = record.correction_cov
        if record.post_cov is None or record.prop_cov_pre_q is None:
            self._has_full_fields = False
        else:
            self._post_covs[slot] = record.post_cov
            self._prop_covs[slot] = record.prop_cov_pre_q
        self._head = (slot + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)
        return True

    def __len__(self) -> int:
        return len(self._records)

    @property
    def is_full(self) -> bool:
        return len(self._records) == self.capacity

    @property
    def records(self) -> tuple[InnovationRecord, ...]:
        return tuple(self._records)

    @property
    def newest(self) -> InnovationRecord:
        if not self._records:
            raise ValueError("window is empty")
        return self._records[-1]

    def clear(self) -> None:
        self._records.clear()
        self._head = 0
        self._count = 0
        self._has_full_fields = True


def _require_count(window: SlidingWindow) -> int:
    if window._count == 0:
        raise ValueError("sliding window holds no usable records")
    return window._count


def cm_estimate_full(window: SlidingWindow) -> np.ndarray:
    """Windowed moment estimate of Q from full innovation bookkeeping.

    Averages P_post - P_propagated_pre_Q + dx dx^T over the retained
    records. Symmetric by construction but NOT guaranteed PSD; it feeds the
    constrained fit, never a filter directly.
    """
    n = _require_count(window)
    if not window._has_full_fields:
        raise ValueError("record lacks the covariance terms of the full estimate")
    dx = window._corrections[:n]
    acc = window._post_covs[:n].sum(axis=0) - window._prop_covs[:n].sum(axis=0)
    acc += dx.T @ dx
    return acc / n


def cm_estimate_ss(window: SlidingWindow) -> np.ndarray:
    """Steady-state moment estimate of Q: mean of dx dx^T, PSD by construction.

    This reduction assumes the propagated and posterior covariances have
    converged to each other; it is the standalone covariance-matching
    baseline in both case studies.
    """
    n = _require_count(window)
    dx = window._corrections[:n]
    return (dx.T @ dx) / n


def _sigma_bar_vech(sigma: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """vech of Sigma∘Sigma + diag(Sigma) diag(Sigma)^T for one record."""
    d = np.diag(sigma)
    return sigma[rows, cols] ** 2 + d[rows] * d[cols]


def weighting_matrix(
    window: SlidingWindow,
    steady_state: bool = False,
    indices: np.ndarray | None = None,
    diag: FilterDiagnostics | None = None,
) -> np.ndarray:
    """Diagonal variance estimate of the windowed vech(Q) moments.

    Each diagonal entry is the fourth-moment variance of the matching
    vech element of the windowed estimate, derived for Gaussian state
    corrections: Var terms are Sigma_ij^2 + Sigma_ii Sigma_jj summed over
    the window and scaled 1/N^2, or taken from the newest record alone and
    scaled 1/N under the steady-state assumption.

    Args:
        window: source of the correction covariances Sigma.
        steady_state: use only the newest Sigma (memory-light form).
        indices: state indices selecting the sub-block of Sigma to use
            (defaults to the full state).
        diag: counter sink for floored degenerate entries.

    Returns:
        Full diagonal matrix over vech of the selected sub-block.
    """
    w = _weighting_diag(window, steady_state, indices, diag)
    return np.diag(w)


def _weighting_diag(
    window: SlidingWindow,
    steady_state: bool,
    indices: np.ndarray | None,
    diag: FilterDiagnostics | None,
) -> np.ndarray:
    n_rec = _require_count(window)
    if steady_state:
        sigma = window.newest.correction_cov
        if indices is not None:
            sigma = sigma[indices[:, None], indices[None, :]]
        rows, cols = vech_indices(sigma.shape[0])
        w = _sigma_bar_vech(sigma, rows, cols) / n_rec
    else:
        sigmas = window._corr_covs[:n_rec]
        if indices is not None:
            sigmas = sigmas[:, indices[:, None], indices[None, :]]
        rows, cols = vech_indices(sigmas.shape[1])
        d = np.einsum("kii->ki", sigmas)
        terms = sigmas[:, rows, cols] ** 2 + d[:, rows] * d[:, cols]
        w = terms.sum(axis=0) / n_rec**2
    bad = w <= 0.0
    if np.any(bad):
        if diag is not None:
            diag.w_floor_hits += int(np.count_nonzero(bad))
        w = np.where(bad, _W_FLOOR, w)
    return w


@dataclass(frozen=True)
class DesignMatrix:
    """Linear map from the PSD diagonal to vech of the discrete Q sub-block.

    X has one column per noise axis. In the Cartesian layouts each column
    touches exactly three vech rows (the per-axis position variance,
    position-velocity covariance, and velocity variance), which enables the
    exact per-axis solution of the constrained fit. ``axis_rows[i]`` lists
    those three row indices for axis i and ``axis_profiles[i]`` the matching
    column values.
    """

    X: np.ndarray
    axis_rows: tuple[tuple[int, int, int], ...] | None = None
    axis_profiles: np.ndarray | None = None

    @property
    def has_fast_path(self) -> bool:
        return self.axis_rows is not None and self.axis_profiles is not None


def _vech_pos(n: int, i: int, j: int) -> int:
    """Index of entry (i, j), i >= j, in the column-stacked lower triangle."""
    return j * n - (j * (j - 1)) // 2 + (i - j)


def build_design_matrix(
    mode: str,
    beta_diag: np.ndarray | float | None,
    dt: float,
    n_axes: int = 1,
    model: FilterModel | None = None,
    qtilde_dim: int | None = None,
    t0: float = 0.0,
) -> DesignMatrix:
    """Design matrix of the PSD fit for the upcoming interval.

    Modes:
        'asnc': per-axis column [dt^3/3, dt^2/2, dt] over the [r; v] block.
        'admc': per-axis column of the Gauss-Markov position/velocity
            covariance coefficients [C11, C21, C22].
        'numeric': general fallback; assembles X by running the quadrature
            Q oracle once per unit basis vector of the PSD diagonal
            (requires ``model`` and ``qtilde_dim``).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if mode == "numeric":
        if model is None or qtilde_dim is None:
            raise ValueError("numeric mode needs model and qtilde_dim")
        rows, cols = vech_indices(model.state_dim)
        columns = []
        for i in range(qtilde_dim):
            basis = np.zeros(qtilde_dim)
            basis[i] = 1.0
            q = q_numeric(model, basis, t0, t0 + dt)
            columns.append(q[rows, cols])
        return DesignMatrix(X=np.stack(columns, axis=1))
    if mode == "asnc":
        profiles = np.tile(
            np.array([dt**3 / 3.0, dt**2 / 2.0, dt]), (n_axes, 1)
        )
    elif mode == "admc":
        if beta_diag is None:
            raise ValueError("admc mode needs beta_diag")
        c = dmc_coefficients(beta_diag, dt)
        if c["c11"].shape[0] != n_axes:
            raise ValueError("beta_diag length does not match n_axes")
        profiles = np.stack([c["c11"], c["c21"], c["c22"]], axis=1)
    else:
        raise ValueError(f"unknown design matrix mode {mode!r}")
    n_ss = 2 * n_axes
    m = n_ss * (n_ss + 1) // 2
    X = np.zeros((m, n_axes))
    axis_rows = []
    for i in range(n_axes):
        r, v = i, n_axes + i
        rows3 = (_vech_pos(n_ss, r, r), _vech_pos(n_ss, v, r), _vech_pos(n_ss, v, v))
        X[rows3, i] = profiles[i]
        axis_rows.append(rows3)
    return DesignMatrix(X=X, axis_rows=tuple(axis_rows), axis_profiles=profiles)


@lru_cache(maxsize=64)
def _design_cached(mode: str, beta_key: tuple | None, dt: float, n_axes: int) -> DesignMatrix:
    """Analytic-mode design matrices memoized on their scalar inputs.

    The adaptive step rebuilds the same matrix every call at a fixed
    measurement cadence, so this cache turns the rebuild into a lookup.
    """
    beta = None if beta_key is None else np.asarray(beta_key)
    return build_design_matrix(mode, beta, dt, n_axes=n_axes)


def _project(q: np.ndarray, lb: np.ndarray, ub: np.ndarray | None) -> np.ndarray:
    q = np.maximum(q, lb)
    if ub is not None:
        q = np.minimum(q, ub)
    return q


def solve_wls_boxed(
    X: DesignMatrix | np.ndarray,
    b: np.ndarray,
    w_diag: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray | None = None,
    diag: FilterDiagnostics | None = None,
) -> np.ndarray:
    """Minimize (X q - b)^T W^-1 (X q - b) subject to lb <= q <= ub.

    The Cartesian fast path solves each axis exactly as a clamped scalar
    ratio. The general path runs a projected-gradient descent on the
    quadratic objective to 1e-12 relative convergence.

    Args:
        X: DesignMatrix (fast path when its per-axis structure is present)
            or a raw matrix (general path).
        b: target vech vector.
        w_diag: diagonal of W (positive).
        lb: nonnegative lower bounds.
        ub: upper bounds or None for unbounded above.
        diag: counter sink for degenerate axes.

    Returns:
        The exact constrained minimizer (fast path) or the converged
        projected-gradient iterate (general path), always within bounds.
    """
    lb = np.asarray(lb, dtype=float)
    if np.any(lb < 0.0):
        raise ValueError("lower bounds must be nonnegative")
    if ub is not None:
        ub = np.asarray(ub, dtype=float)
        if np.any(ub < lb):
            raise ValueError("upper bounds below lower bounds")
    if isinstance(X, DesignMatrix) and X.has_fast_path:
        n_axes = X.X.shape[1]
        out = np.empty(n_axes)
        for i in range(n_axes):
            rows3 = X.axis_rows[i]
            xi = X.axis_profiles[i]
            wi = w_diag[list(rows3)]
            bi = b[list(rows3)]
            xw = xi / wi
            denom = xw @ xi
            if denom == 0.0:
                if diag is not None:
                    diag.degenerate_axes += 1
                out[i] = lb[i]
                continue
            out[i] = (xw @ bi) / denom
        return _project(out, lb, ub)
    mat = X.X if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
    return _solve_projected_gradient(mat, b, w_diag, lb, ub)


def _solve_projected_gradient(
    X: np.ndarray,
    b: np.ndarray,
    w_diag: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray | None,
    obj_rel_tol: float = 1e-12,
    max_iter: int = 200_000,
) -> np.ndarray:
    xw = X / w_diag[:, None]           # W^-1 X
    hess = 2.0 * (X.T @ xw)            # Hessian of the quadratic objective
    lin = 2.0 * (xw.T @ b)
    lip = np.linalg.eigvalsh(hess)[-1]
    if lip <= 0.0:
        return _project(np.zeros(X.shape[1]), lb, ub)
    step = 1.0 / lip

    def objective(q: np.ndarray) -> float:
        r = X @ q - b
        return float(r @ (r / w_diag))

    q = _project(np.zeros(X.shape[1]), lb, ub)
    f = objective(q)
    for _ in range(max_iter):
        grad = hess @ q - lin
        q_new = _project(q - step * grad, lb, ub)
        f_new = objective(q_new)
        if abs(f - f_new) <= obj_rel_tol * max(1.0, abs(f)):
            return q_new
        q, f = q_new, f_new
    return q


def forgetting_update(prev: np.ndarray, star: np.ndarray, alpha: float) -> np.ndarray:
    """Geometric blend (1 - alpha) * prev + alpha * star."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    prev = np.asarray(prev, dtype=float)
    star = np.asarray(star, dtype=float)
    return (1.0 - alpha) * prev + alpha * star


def default_segments(model: FilterModel, kind: str) -> tuple[NoiseSegment, ...]:
    """Segments to use when the model declares none: one block, whole state."""
    if model.noise_segments is not None:
        return model.noise_segments
    per_axis = 2 if kind == "white" else 3
    if model.state_dim % per_axis != 0:
        raise ValueError(
            f"state dim {model.state_dim} not divisible by {per_axis}; "
            "set model.noise_segments explicitly"
        )
    return (NoiseSegment(kind=kind, offset=0, n_axes=model.state_dim // per_axis),)


def assemble_q(
    segments: Iterable[NoiseSegment],
    spec: NoiseSpec,
    dt: float,
    state_dim: int,
) -> np.ndarray:
    """Full-state Q from per-segment analytic blocks at interval dt."""
    out = np.zeros((state_dim, state_dim))
    for seg in segments:
        sl = slice(seg.offset, seg.offset + seg.width)
        q_axes = spec.qtilde_diag[seg.q_offset : seg.q_offset + seg.n_axes]
        if seg.kind == "white":
            out[sl, sl] = snc_q_analytic(q_axes, dt)
        else:
            beta = spec.beta_diag[seg.q_offset : seg.q_offset + seg.n_axes]
            out[sl, sl] = dmc_q_analytic(q_axes, beta, dt)
    return out


def _adaptive_step(
    mode: str,
    window: SlidingWindow,
    spec: NoiseSpec,
    model: FilterModel,
    dt_next: float,
    steady_state_weighting: bool,
    diag: FilterDiagnostics | None,
) -> tuple[NoiseSpec, np.ndarray]:
    kind = "white" if mode == "asnc" else "gauss_markov"
    segments = default_segments(model, kind)
    q_hat = cm_estimate_full(window)
    dt_fit = window.newest.dt
    q_star = np.array(spec.qtilde_diag, copy=True)
    for seg in segments:
        idx = np.concatenate([seg.position_indices(), seg.velocity_indices()])
        w_diag = _weighting_diag(window, steady_state_weighting, idx, diag)
        beta_key = None
        if kind == "gauss_markov":
            beta_key = tuple(spec.beta_diag[seg.q_offset : seg.q_offset + seg.n_axes])
        design = _design_cached(mode, beta_key, dt_fit, seg.n_axes)
        sub = q_hat[np.ix_(idx, idx)]
        rows, cols = vech_indices(idx.shape[0])
        b = sub[rows, cols]
        q_slice = slice(seg.q_offset, seg.q_offset + seg.n_axes)
        ub = None if spec.upper_bound is None else spec.upper_bound[q_slice]
        q_star[q_slice] = solve_wls_boxed(
            design, b, w_diag, spec.lower_bound[q_slice], ub, diag
        )
    blended = forgetting_update(spec.qtilde_diag, q_star, spec.alpha)
    new_spec = spec.with_qtilde(blended)
    q_next = assemble_q(segments, new_spec, dt_next, model.state_dim)
    return new_spec, q_next


def asnc_step(
    window: SlidingWindow,
    spec: NoiseSpec,
    model: FilterModel,
    dt_next: float,
    steady_state_weighting: bool = True,
    diag: FilterDiagnostics | None = None,
) -> tuple[NoiseSpec, np.ndarray]:
    """One adaptation cycle for the white-acceleration layout.

    Runs the windowed moment estimate, weights it, fits the PSD diagonal
    under the box constraints, blends with the forgetting factor (callers
    configure alpha = 1 to disable smoothing), holds the result, and builds
    the analytic Q for the upcoming interval dt_next. Because the fit
    happens in PSD space, a measurement outage simply changes dt_next and
    the returned Q scales along the analytic law.
    """
    return _adaptive_step(
        "asnc", window, spec, model, dt_next, steady_state_weighting, diag
    )


def admc_step(
    window: SlidingWindow,
    spec: NoiseSpec,
    model: FilterModel,
    dt_next: float,
    steady_state_weighting: bool = True,
    diag: FilterDiagnostics | None = None,
) -> tuple[NoiseSpec, np.ndarray]:
    """One adaptation cycle for the Gauss-Markov layout.

    Identical flow to asnc_step but fits the position/velocity block of the
    Gauss-Markov analytic covariance; the acceleration rows of the windowed
    estimate are deliberately excluded from the fit.
    """
    return _adaptive_step(
        "admc", window, spec, model, dt_next, steady_state_weighting, diag
    )
