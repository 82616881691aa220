"""Discrete process-noise covariance models.

Maps a continuous-time white-noise power spectral density (PSD) Q-tilde and a
propagation interval to the discrete covariance Q added in the filter's
covariance time update. Two analytic state layouts are supported:

* white-acceleration compensation over a position/velocity state [r; v], and
* first-order Gauss-Markov empirical accelerations over [r; v; a_emp].

A numeric quadrature fallback integrates the covariance for an arbitrary
linear(ized) model and serves as the oracle the analytic forms are tested
against.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from ._linalg import symmetrize

if TYPE_CHECKING:  # pragma: no cover - import cycle guard for annotations only
    from .filter_core import FilterModel

__all__ = [
    "NoiseSpec",
    "snc_q_analytic",
    "dmc_q_analytic",
    "dmc_coefficients",
    "gauss_markov_propagate",
    "q_numeric",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Everything the adaptive estimators tune or hold fixed.

    Attributes:
        qtilde_diag: diagonal of the continuous-time PSD, one entry per noise
            axis. Units are m^2/s^3 for the white-acceleration layout and
            m^2/s^5 for the Gauss-Markov layout.
        lower_bound: element-wise lower bound on qtilde_diag (>= 0).
        upper_bound: element-wise upper bound, or None for unbounded above.
        beta_diag: inverse time constants (1/s) of the Gauss-Markov
            accelerations; None for the white-acceleration layout.
        alpha: forgetting factor in (0, 1] blending successive estimates.
    """

    qtilde_diag: np.ndarray
    lower_bound: np.ndarray = None  # type: ignore[assignment]
    upper_bound: np.ndarray | None = None
    beta_diag: np.ndarray | None = None
    alpha: float = 1.0

    def __post_init__(self) -> None:
        q = np.atleast_1d(np.asarray(self.qtilde_diag, dtype=float))
        object.__setattr__(self, "qtilde_diag", q)
        lb = self.lower_bound
        lb = np.zeros_like(q) if lb is None else np.atleast_1d(np.asarray(lb, dtype=float))
        object.__setattr__(self, "lower_bound", lb)
        if self.upper_bound is not None:
            ub = np.atleast_1d(np.asarray(self.upper_bound, dtype=float))
            object.__setattr__(self, "upper_bound", ub)
        if self.beta_diag is not None:
            beta = np.atleast_1d(np.asarray(self.beta_diag, dtype=float))
            object.__setattr__(self, "beta_diag", beta)
            if np.any(beta <= 0.0):
                raise ValueError("beta_diag must be strictly positive")
        if np.any(q < 0.0):
            raise ValueError("qtilde_diag must be nonnegative")
        if np.any(lb < 0.0):
            raise ValueError("lower_bound must be nonnegative")
        if np.any(lb > q):
            raise ValueError("qtilde_diag below lower_bound")
        if self.upper_bound is not None and np.any(q > self.upper_bound):
            raise ValueError("qtilde_diag above upper_bound")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def n_axes(self) -> int:
        return self.qtilde_diag.shape[0]

    def with_qtilde(self, qtilde_diag: np.ndarray) -> "NoiseSpec":
        """Copy of this spec with a new PSD diagonal."""
        return replace(self, qtilde_diag=np.asarray(qtilde_diag, dtype=float))


def snc_q_analytic(qtilde_diag: np.ndarray | float, dt: float) -> np.ndarray:
    """Discrete Q for white-acceleration noise on a [r; v] state.

    Per axis the 2x2 block is
        [[dt^3/3, dt^2/2],
         [dt^2/2, dt    ]] * qtilde.

    Args:
        qtilde_diag: PSD diagonal (m^2/s^3), scalar or length-n vector.
        dt: propagation interval in seconds, > 0.

    Returns:
        2n x 2n symmetric PSD matrix ordered [positions..., velocities...].
    """
    q = np.atleast_1d(np.asarray(qtilde_diag, dtype=float))
    if np.any(q < 0.0):
        raise ValueError("qtilde_diag must be nonnegative")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = q.shape[0]
    out = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    out[idx, idx] = dt**3 / 3.0 * q
    out[n + idx, idx] = dt**2 / 2.0 * q
    out[idx, n + idx] = out[n + idx, idx]
    out[n + idx, n + idx] = dt * q
    return out


# Truncated Taylor series of the six Gauss-Markov covariance coefficient
# profiles in u = beta*dt, used below the _SERIES_CUTOVER. Direct evaluation
# of the printed closed forms subtracts nearly equal terms and loses all
# significant digits as u -> 0 (the first profile starts at u^5/20, built
# from terms of order u). Coefficients are exact rationals rounded once to
# double precision; ascending powers starting at the leading order.
_SERIES_CUTOVER = 0.5

_G11_LEAD = 5
_G11_COEF = np.array([
    5.00000000000000028e-02, -2.77777777777777762e-02, 9.92063492063492008e-03,
    -2.77777777777777788e-03, 6.55864197530864204e-04, -1.35582010582010586e-04,
    2.51022126022126033e-05, -4.22545561434450329e-06, 6.53603084158639682e-07,
    -9.36471670598654714e-08, 1.25061715670181283e-08, -1.56460969953033444e-09,
    1.84156073074140291e-10, -2.04667840433566488e-11, 2.15467782195171648e-12,
    -2.15482579338615581e-13, 2.05228941849618942e-14, -1.86575324034392383e-15,
])
_G21_LEAD = 4
_G21_COEF = np.array([
    1.25000000000000000e-01, -8.33333333333333287e-02, 3.47222222222222238e-02,
    -1.11111111111111115e-02, 2.95138888888888881e-03, -6.77910052910052959e-04,
    1.38062169312169313e-04, -2.53527336860670198e-05, 4.24842004703115836e-06,
    -6.55530169419058300e-07, 9.37962867526359628e-08, -1.25168775962426755e-08,
    1.56532662113019264e-09, -1.84201056390209823e-10, 2.04694393085413063e-11,
    -2.15482579338615586e-12, 2.15490388942099879e-13, -2.05232856437831614e-14,
])
_G31_LEAD = 3
_G31_COEF = np.array([
    1.66666666666666657e-01, -1.66666666666666657e-01, 9.16666666666666602e-02,
    -3.61111111111111077e-02, 1.13095238095238092e-02, -2.97619047619047603e-03,
    6.80665784832451526e-04, -1.38337742504409181e-04, 2.53777857944524607e-05,
    -4.25050772272994511e-06, 6.55690759857426535e-07, -9.38077574982336939e-08,
    1.25176423126158577e-08, -1.56537441590351642e-09, 1.84203867847464177e-10,
    -2.04695955006109930e-11, 2.15483401402140235e-12, -2.15490799973862204e-13,
])
_G22_LEAD = 3
_G22_COEF = np.array([
    3.33333333333333315e-01, -2.50000000000000000e-01, 1.16666666666666669e-01,
    -4.16666666666666644e-02, 1.23015873015873013e-02, -3.12500000000000017e-03,
    6.99955908289241605e-04, -1.40542328042328040e-04, 2.56032547699214362e-05,
    -4.27138447971781342e-06, 6.57457254679476917e-07, -9.39454064454064409e-08,
    1.25275836254672228e-08, -1.56604354273005063e-09, 1.84246039706279356e-10,
    -2.04720945737259670e-11, 2.15497376482059524e-12, -2.15498198545584178e-13,
])


def _series(u: np.ndarray, lead: int, coef: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(u)
    for c in coef[::-1]:
        acc = acc * u + c
    return acc * u**lead


def _gm_profiles(u: np.ndarray) -> tuple[np.ndarray, ...]:
    """The six scale-free coefficient profiles g(u), u = beta*dt.

    The discrete Gauss-Markov covariance coefficients factor as
    C_jk = g_jk(u) / beta^p with p = 5, 4, 3, 3, 2, 1 for
    (1,1), (2,1), (3,1), (2,2), (3,2), (3,3) respectively.
    """
    u = np.asarray(u, dtype=float)
    small = u < _SERIES_CUTOVER
    e1 = np.exp(-u)
    om1 = -np.expm1(-u)       # 1 - e^-u
    om2 = -np.expm1(-2.0 * u)  # 1 - e^-2u

    g11 = u**3 / 3.0 - u**2 + u * (1.0 - 2.0 * e1) + 0.5 * om2
    g21 = u**2 / 2.0 - u * om1 + om1 - 0.5 * om2
    g31 = 0.5 * om2 - u * e1
    g22 = u - 2.0 * om1 + 0.5 * om2
    if np.any(small):
        us = np.where(small, u, 0.0)  # keep the unused branch overflow-free
        g11 = np.where(small, _series(us, _G11_LEAD, _G11_COEF), g11)
        g21 = np.where(small, _series(us, _G21_LEAD, _G21_COEF), g21)
        g31 = np.where(small, _series(us, _G31_LEAD, _G31_COEF), g31)
        g22 = np.where(small, _series(us, _G22_LEAD, _G22_COEF), g22)
    g32 = 0.5 * om1**2           # equals (1 + e^-2u)/2 - e^-u, cancellation-free
    g33 = 0.5 * om2
    return g11, g21, g31, g22, g32, g33


def dmc_coefficients(beta_diag: np.ndarray | float, dt: float) -> dict[str, np.ndarray]:
    """Per-axis covariance coefficients of the Gauss-Markov layout.

    Returns:
        dict with keys 'c11', 'c21', 'c31', 'c22', 'c32', 'c33'; each value is
        a length-n array. Keys name the (row, col) of the per-axis 3x3 block
        over [position, velocity, acceleration].
    """
    beta = np.atleast_1d(np.asarray(beta_diag, dtype=float))
    if np.any(beta <= 0.0):
        raise ValueError("beta_diag must be strictly positive")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = beta * dt
    g11, g21, g31, g22, g32, g33 = _gm_profiles(u)
    return {
        "c11": g11 / beta**5,
        "c21": g21 / beta**4,
        "c31": g31 / beta**3,
        "c22": g22 / beta**3,
        "c32": g32 / beta**2,
        "c33": g33 / beta,
    }


def dmc_q_analytic(
    qtilde_diag: np.ndarray | float,
    beta_diag: np.ndarray | float,
    dt: float,
) -> np.ndarray:
    """Discrete Q for Gauss-Markov empirical accelerations on [r; v; a].

    Args:
        qtilde_diag: PSD diagonal (m^2/s^5), scalar or length-n vector.
        beta_diag: inverse time constants (1/s), same length.
        dt: propagation interval in seconds, > 0.

    Returns:
        3n x 3n symmetric PSD matrix ordered
        [positions..., velocities..., accelerations...].
    """
    q = np.atleast_1d(np.asarray(qtilde_diag, dtype=float))
    if np.any(q < 0.0):
        raise ValueError("qtilde_diag must be nonnegative")
    c = dmc_coefficients(beta_diag, dt)
    n = q.shape[0]
    if c["c11"].shape[0] != n:
        raise ValueError("qtilde_diag and beta_diag length mismatch")
    out = np.zeros((3 * n, 3 * n))
    idx = np.arange(n)
    r, v, a = idx, n + idx, 2 * n + idx
    out[r, r] = c["c11"] * q
    out[v, r] = c["c21"] * q
    out[a, r] = c["c31"] * q
    out[v, v] = c["c22"] * q
    out[a, v] = c["c32"] * q
    out[a, a] = c["c33"] * q
    out[r, v] = out[v, r]
    out[r, a] = out[a, r]
    out[v, a] = out[a, v]
    return out


def gauss_markov_propagate(
    a_emp: np.ndarray, beta_diag: np.ndarray | float, dt: float
) -> np.ndarray:
    """Deterministic decay of empirical accelerations over dt seconds.

    The stochastic part of the process is carried entirely by Q; this applies
    only the mean dynamics a_i(t + dt) = exp(-beta_i dt) a_i(t).
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    beta = np.asarray(beta_diag, dtype=float)
    return np.asarray(a_emp, dtype=float) * np.exp(-beta * dt)


def q_numeric(
    model: "FilterModel",
    qtilde_diag: np.ndarray | float,
    t0: float,
    t1: float,
    ref_state: np.ndarray | None = None,
    n_subintervals: int = 64,
) -> np.ndarray:
    """Discrete Q by composite-Simpson quadrature over the interval.

    Integrates Phi(t1, tau) Gamma(tau) Qtilde Gamma(tau)^T Phi(t1, tau)^T
    d tau, where Phi and Gamma come from the model hooks. Serves as the
    independent oracle for the analytic forms; n_subintervals should grow
    with beta*dt when the integrand decays fast (64 covers the gentle cases).

    Args:
        model: supplies stm(x, t0, t1) and noise_map(t).
        qtilde_diag: diagonal PSD of the driving white noise.
        t0, t1: interval endpoints, t1 > t0.
        ref_state: reference state handed to stm for nonlinear models.
        n_subintervals: even Simpson subinterval count, >= 2.

    Returns:
        Symmetric PSD matrix of the model's state dimension.
    """
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if n_subintervals < 2 or n_subintervals % 2 != 0:
        raise ValueError("n_subintervals must be even and >= 2")
    q = np.atleast_1d(np.asarray(qtilde_diag, dtype=float))
    if np.any(q < 0.0):
        raise ValueError("qtilde_diag must be nonnegative")
    qtilde = np.diag(q)
    h = (t1 - t0) / n_subintervals
    weights = np.full(n_subintervals + 1, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= h / 3.0
    out = np.zeros((model.state_dim, model.state_dim))
    for j, w in enumerate(weights):
        tau = t0 + j * h
        phi = model.stm(ref_state, tau, t1)
        gam = model.noise_map(tau)
        g = phi @ gam
        out += w * (g @ qtilde @ g.T)
    return symmetrize(out)
