"""Keplerian elements, relative orbital elements, and zonal gravity.

Element sets are (a, e, i, raan, argp, M) with a in meters and angles in
radians. The inertial frame has the central body's spin axis on +z, so the
zonal gravity field is time-invariant in it. All acceleration and
propagation helpers broadcast over leading batch dimensions.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "kepler_to_cartesian",
    "cartesian_to_kepler",
    "solve_kepler",
    "roe_from_kepler",
    "deputy_from_roe",
    "argument_of_latitude",
    "zonal_accel",
    "orbit_period",
    "rk4_span",
    "rotation_z",
]


def solve_kepler(mean_anomaly: float, e: float, tol: float = 1e-14) -> float:
    """Eccentric anomaly from mean anomaly by Newton iteration."""
    m = float(mean_anomaly)
    ecc = np.pi if e > 0.8 else m
    for _ in range(60):
        f = ecc - e * np.sin(ecc) - m
        step = f / (1.0 - e * np.cos(ecc))
        ecc -= step
        if abs(step) < tol:
            return ecc
    raise RuntimeError(f"Kepler iteration stalled at M={m}, e={e}")


def kepler_to_cartesian(elements, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Inertial position (m) and velocity (m/s) from Keplerian elements."""
    a, e, inc, raan, argp, m_anom = (float(v) for v in elements)
    if a <= 0 or not 0.0 <= e < 1.0:
        raise ValueError("need a > 0 and 0 <= e < 1")
    ecc = solve_kepler(m_anom, e)
    cos_e, sin_e = np.cos(ecc), np.sin(ecc)
    rmag = a * (1.0 - e * cos_e)
    # perifocal coordinates
    r_pf = np.array([a * (cos_e - e), a * np.sqrt(1.0 - e**2) * sin_e, 0.0])
    v_scale = np.sqrt(mu * a) / rmag
    v_pf = np.array([-v_scale * sin_e, v_scale * np.sqrt(1.0 - e**2) * cos_e, 0.0])
    rot = _perifocal_to_inertial(inc, raan, argp)
    return rot @ r_pf, rot @ v_pf


def _perifocal_to_inertial(inc: float, raan: float, argp: float) -> np.ndarray:
    co, so = np.cos(raan), np.sin(raan)
    ci, si = np.cos(inc), np.sin(inc)
    cw, sw = np.cos(argp), np.sin(argp)
    rz_raan = np.array([[co, -so, 0.0], [so, co, 0.0], [0.0, 0.0, 1.0]])
    rx_inc = np.array([[1.0, 0.0, 0.0], [0.0, ci, -si], [0.0, si, ci]])
    rz_argp = np.array([[cw, -sw, 0.0], [sw, cw, 0.0], [0.0, 0.0, 1.0]])
    return rz_raan @ rx_inc @ rz_argp


def cartesian_to_kepler(r: np.ndarray, v: np.ndarray, mu: float) -> np.ndarray:
    """Keplerian elements (a, e, i, raan, argp, M) from an inertial state."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rmag = np.linalg.norm(r)
    h = np.cross(r, v)
    hmag = np.linalg.norm(h)
    node = np.cross([0.0, 0.0, 1.0], h)
    nmag = np.linalg.norm(node)
    e_vec = (np.cross(v, h) / mu) - r / rmag
    e = np.linalg.norm(e_vec)
    energy = 0.5 * v @ v - mu / rmag
    if energy >= 0.0:
        raise ValueError("state is not on a bound orbit")
    a = -mu / (2.0 * energy)
    inc = np.arccos(np.clip(h[2] / hmag, -1.0, 1.0))
    raan = np.arctan2(node[1], node[0]) % (2.0 * np.pi)
    if nmag < 1e-12 * hmag:
        raan = 0.0
        node = np.array([1.0, 0.0, 0.0])
        nmag = 1.0
    argp = np.arctan2(e_vec @ np.cross(h / hmag, node / nmag), e_vec @ node / nmag)
    argp %= 2.0 * np.pi
    true_anom = np.arctan2(r @ np.cross(h / hmag, e_vec / e), r @ e_vec / e)
    ecc_anom = np.arctan2(
        np.sqrt(1.0 - e**2) * np.sin(true_anom), e + np.cos(true_anom)
    )
    m_anom = (ecc_anom - e * np.sin(ecc_anom)) % (2.0 * np.pi)
    return np.array([a, e, inc, raan, argp, m_anom])


def argument_of_latitude(r: np.ndarray, v: np.ndarray) -> float:
    """Angle from the ascending node to the position vector, in [0, 2 pi)."""
    r = np.asarray(r, dtype=float)
    h = np.cross(r, v)
    node = np.cross([0.0, 0.0, 1.0], h)
    nmag = np.linalg.norm(node)
    if nmag < 1e-12 * np.linalg.norm(h):
        return float(np.arctan2(r[1], r[0]) % (2.0 * np.pi))
    n_hat = node / nmag
    h_hat = h / np.linalg.norm(h)
    cos_u = (r @ n_hat) / np.linalg.norm(r)
    sin_u = (r @ np.cross(h_hat, n_hat)) / np.linalg.norm(r)
    return float(np.arctan2(sin_u, cos_u) % (2.0 * np.pi))


def roe_from_kepler(chief, deputy) -> np.ndarray:
    """Quasi-nonsingular relative orbital elements of deputy about chief.

    Components: [da, dlambda, dex, dey, dix, diy], all dimensionless.
    The along-track offset uses the mean argument of latitude u = M + argp.
    """
    a_c, e_c, i_c, raan_c, argp_c, m_c = (float(x) for x in chief)
    a_d, e_d, i_d, raan_d, argp_d, m_d = (float(x) for x in deputy)
    u_c = m_c + argp_c
    u_d = m_d + argp_d
    return np.array(
        [
            (a_d - a_c) / a_c,
            (u_d - u_c) + (raan_d - raan_c) * np.cos(i_c),
            e_d * np.cos(argp_d) - e_c * np.cos(argp_c),
            e_d * np.sin(argp_d) - e_c * np.sin(argp_c),
            i_d - i_c,
            (raan_d - raan_c) * np.sin(i_c),
        ]
    )


def deputy_from_roe(chief, aroe_m) -> np.ndarray:
    """Invert the relative-element map: deputy elements from chief + a_c*ROE.

    Args:
        chief: chief elements (a, e, i, raan, argp, M).
        aroe_m: relative elements scaled by the chief semi-major axis, in
            meters.

    Returns:
        Deputy element set producing exactly the requested geometry.
    """
    a_c, e_c, i_c, raan_c, argp_c, m_c = (float(x) for x in chief)
    roe = np.asarray(aroe_m, dtype=float) / a_c
    a_d = a_c * (1.0 + roe[0])
    i_d = i_c + roe[4]
    if abs(np.sin(i_c)) < 1e-12:
        raise ValueError("chief inclination too close to equatorial for this map")
    raan_d = raan_c + roe[5] / np.sin(i_c)
    ex = e_c * np.cos(argp_c) + roe[2]
    ey = e_c * np.sin(argp_c) + roe[3]
    e_d = float(np.hypot(ex, ey))
    argp_d = float(np.arctan2(ey, ex))
    u_c = m_c + argp_c
    u_d = roe[1] + u_c - (raan_d - raan_c) * np.cos(i_c)
    m_d = u_d - argp_d
    return np.array([a_d, e_d, i_d, raan_d, argp_d, m_d])


def orbit_period(a: float, mu: float) -> float:
    """Two-body orbital period in seconds."""
    return 2.0 * np.pi * np.sqrt(a**3 / mu)


def zonal_accel(
    r: np.ndarray,
    mu: float,
    j2: float = 0.0,
    j3: float = 0.0,
    ref_radius: float = 1.0,
) -> np.ndarray:
    """Point-mass plus J2/J3 zonal gravity acceleration, batched over (..., 3)."""
    r = np.asarray(r, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    r2 = x * x + y * y + z * z
    rn = np.sqrt(r2)
    out = -mu * r / (rn**3)[..., None]
    if j2 != 0.0:
        k2 = -1.5 * j2 * mu * ref_radius**2 / (rn**5)
        z2r = 5.0 * z * z / r2
        out[..., 0] += k2 * x * (1.0 - z2r)
        out[..., 1] += k2 * y * (1.0 - z2r)
        out[..., 2] += k2 * z * (3.0 - z2r)
    if j3 != 0.0:
        k3 = -2.5 * j3 * mu * ref_radius**3 / (rn**7)
        z3r = 7.0 * z**3 / r2
        out[..., 0] += k3 * x * (3.0 * z - z3r)
        out[..., 1] += k3 * y * (3.0 * z - z3r)
        out[..., 2] += k3 * (6.0 * z * z - z3r * z - 0.6 * r2)
    return out


def rk4_span(deriv, t0: float, t1: float, y0: np.ndarray, substeps: int) -> np.ndarray:
    """Classic fixed-step fourth-order Runge-Kutta over [t0, t1].

    Args:
        deriv: callable (t, y) -> dy/dt, broadcasting over y of shape
            (..., d).
        t0, t1: span endpoints (t1 >= t0).
        y0: initial condition, shape (..., d).
        substeps: number of equal steps (>= 1).

    Returns:
        State at t1 with the same shape as y0.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = (t1 - t0) / substeps
    y = np.asarray(y0, dtype=float)
    t = t0
    for _ in range(substeps):
        k1 = deriv(t, y)
        k2 = deriv(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = deriv(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = deriv(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def rotation_z(angle: float) -> np.ndarray:
    """Right-handed rotation matrix about +z by the given angle."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
