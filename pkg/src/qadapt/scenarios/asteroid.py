"""Two-spacecraft formation about a small irregular body.

Truth dynamics carry point-mass + J2 + J3 zonal gravity, solar radiation
pressure, and a constant sun-gradient (tidal) acceleration, plus an optional
finite continuous-thrust maneuver on the chief. The filter models integrate
only point-mass + J2 (and the commanded maneuver), so the J3/SRP/tidal
residual is genuinely unmodeled acceleration for the adaptive estimators.

Each measurement epoch provides intersatellite range and range-rate plus
pinhole pixel pairs of surface landmarks seen by each spacecraft's
nadir-pointed camera. Camera rotation matrices come from the true states
(the known-attitude assumption), and a landmark is used only when it is
sunlit, projects inside the detector, and is not occluded by the body.

Truth generation is deterministic given the scenario config (measurement
noise and the filter-side maneuver perturbation are applied downstream), so
the expensive reference products are memoized per config.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from ..filter_core import FilterModel, NoiseSegment
from .config import ScenarioConfig
from .orbit import (
    argument_of_latitude,
    deputy_from_roe,
    kepler_to_cartesian,
    orbit_period,
    rk4_span,
    rotation_z,
    zonal_accel,
)

__all__ = [
    "ManeuverProfile",
    "FormationTruth",
    "fibonacci_ellipsoid",
    "camera_rotation",
    "landmark_visibility",
    "formation_truth",
    "formation_filter_model",
    "epoch_measurement",
    "STATE_SLICES",
]

# state layout per model kind: (chief pos, chief vel, deputy pos, deputy vel)
STATE_SLICES = {
    "white": (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)),
    "markov": (slice(0, 3), slice(3, 6), slice(9, 12), slice(12, 15)),
}


def fibonacci_ellipsoid(n: int, axes) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-uniform surface points on an ellipsoid with outward unit normals.

    Points come from the Fibonacci sphere lattice scaled by the semi-axes;
    normals follow the ellipsoid gradient (x/a^2, y/b^2, z/c^2).
    """
    axes = np.asarray(axes, dtype=float)
    k = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * k / n)
    azim = np.pi * (1.0 + np.sqrt(5.0)) * k
    unit = np.stack(
        [
            np.sin(polar) * np.cos(azim),
            np.sin(polar) * np.sin(azim),
            np.cos(polar),
        ],
        axis=-1,
    )
    points = unit * axes
    normals = unit / axes
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return points, normals


@dataclass
class ManeuverProfile:
    """The commanded burn as the filters integrate it.

    The thrust direction is sampled along the truth burn arc (the
    anti-momentum direction drifts slowly during the burn) and interpolated
    with re-normalization. ``scale`` and ``rot`` describe the filter's
    knowledge error relative to the flown burn; the defaults model it
    perfectly.
    """

    t_start: float
    duration: float
    accel: float
    times: np.ndarray
    dirs: np.ndarray
    scale: float = 1.0
    rot: np.ndarray | None = None

    def accel_at(self, t: float) -> np.ndarray:
        """Modeled thrust acceleration at time t, zero outside the burn."""
        if not self.t_start <= t <= self.t_start + self.duration:
            return np.zeros(3)
        d = np.array([np.interp(t, self.times, self.dirs[:, i]) for i in range(3)])
        d /= np.linalg.norm(d)
        if self.rot is not None:
            d = self.rot @ d
        return (self.scale * self.accel) * d

    def perturbed(
        self, rng: np.random.Generator, magnitude_std: float, direction_std_deg: float
    ) -> "ManeuverProfile":
        """Copy with magnitude/direction knowledge errors drawn from rng.

        Magnitude is scaled by 1 + N(0, magnitude_std^2); direction is
        rotated by a 3-2-1 Euler sequence with each angle N(0,
        direction_std_deg^2) in degrees.
        """
        scale = 1.0 + rng.normal(0.0, magnitude_std) if magnitude_std > 0 else 1.0
        rot = None
        if direction_std_deg > 0:
            a1, a2, a3 = np.radians(rng.normal(0.0, direction_std_deg, size=3))
            c1, s1 = np.cos(a1), np.sin(a1)
            c2, s2 = np.cos(a2), np.sin(a2)
            c3, s3 = np.cos(a3), np.sin(a3)
            rx = np.array([[1, 0, 0], [0, c1, -s1], [0, s1, c1]])
            ry = np.array([[c2, 0, s2], [0, 1, 0], [-s2, 0, c2]])
            rz = np.array([[c3, -s3, 0], [s3, c3, 0], [0, 0, 1]])
            rot = rx @ ry @ rz
        return ManeuverProfile(
            t_start=self.t_start,
            duration=self.duration,
            accel=self.accel,
            times=self.times,
            dirs=self.dirs,
            scale=scale,
            rot=rot,
        )


@dataclass
class FormationTruth:
    """Reference products for one formation scenario config.

    Attributes:
        config: the generating scenario.
        times: measurement epochs, shape (K,). t = 0 is not an epoch.
        initial: truth state [rc, vc, rd, vd] at t = 0, shape (12,).
        states: truth states at the epochs, shape (K, 12).
        period: chief two-body orbital period, s.
        maneuver: flown burn profile, or None.
        landmarks / normals: body-fixed surface points and outward normals.
        lm_aci: landmarks rotated into the inertial frame per epoch,
            shape (K, L, 3).
        cam_rot: inertial-to-camera rotations per epoch for (chief, deputy),
            shape (K, 2, 3, 3).
        visible: per epoch, (chief ids, deputy ids) of used landmarks.
        z_true: per epoch, the noiseless measurement vector
            [range, range_rate, chief pixels..., deputy pixels...].
        noise_std: per epoch, the per-component measurement sigmas.
    """

    config: ScenarioConfig
    times: np.ndarray
    initial: np.ndarray
    states: np.ndarray
    period: float
    maneuver: ManeuverProfile | None
    landmarks: np.ndarray
    normals: np.ndarray
    lm_aci: np.ndarray
    cam_rot: np.ndarray
    visible: list[tuple[np.ndarray, np.ndarray]]
    z_true: list[np.ndarray]
    noise_std: list[np.ndarray]


def _truth_accel(pos: np.ndarray, ast) -> np.ndarray:
    """Full truth acceleration for positions of shape (..., 3)."""
    sun = np.asarray(ast.sun_direction, dtype=float)
    sun = sun / np.linalg.norm(sun)
    acc = zonal_accel(pos, ast.mu, ast.j2, ast.j3, ast.ref_radius)
    # radiation pressure pushes away from the sun
    acc = acc - ast.srp_accel * sun
    if ast.sun_tidal_coeff > 0.0:
        radial = (pos @ sun)[..., None] * sun
        acc = acc + ast.sun_tidal_coeff * (3.0 * radial - pos)
    return acc


def _stacked_positions(y: np.ndarray) -> np.ndarray:
    """Chief and deputy positions of a (..., 12) truth state as (..., 2, 3)."""
    return np.stack([y[..., 0:3], y[..., 6:9]], axis=-2)


def _make_truth_rhs(ast, thrust: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None):
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        acc = _truth_accel(_stacked_positions(y), ast)
        out = np.empty_like(y)
        out[..., 0:3] = y[..., 3:6]
        out[..., 6:9] = y[..., 9:12]
        out[..., 3:6] = acc[..., 0, :]
        out[..., 9:12] = acc[..., 1, :]
        if thrust is not None:
            out[..., 3:6] += thrust(t, y[..., 0:3], y[..., 3:6])
        return out

    return rhs


def _solve(rhs, t0: float, t1: float, y0: np.ndarray, events=None):
    atol = np.tile(np.array([1e-6] * 3 + [1e-9] * 3), 2)
    sol = solve_ivp(
        rhs,
        (t0, t1),
        y0,
        method="DOP853",
        rtol=1e-12,
        atol=atol,
        dense_output=True,
        events=events,
    )
    if not sol.success:
        raise RuntimeError(f"truth integration failed on [{t0}, {t1}]: {sol.message}")
    return sol


def camera_rotation(r: np.ndarray) -> np.ndarray:
    """Inertial-to-camera rotation for a nadir-pointed camera at position r.

    The boresight (+z of the camera frame) points at the body center; the
    in-plane axes complete the frame deterministically from the inertial
    z-axis cross product.
    """
    z_cf = -np.asarray(r, dtype=float)
    z_cf = z_cf / np.linalg.norm(z_cf)
    x_cf = np.cross([0.0, 0.0, 1.0], z_cf)
    nx = np.linalg.norm(x_cf)
    if nx < 1e-12:
        x_cf = np.array([1.0, 0.0, 0.0])
    else:
        x_cf = x_cf / nx
    y_cf = np.cross(z_cf, x_cf)
    return np.stack([x_cf, y_cf, z_cf])


def landmark_visibility(
    r_aci: np.ndarray,
    cam_rot: np.ndarray,
    lm_aci: np.ndarray,
    landmarks: np.ndarray,
    normals: np.ndarray,
    sun_acaf: np.ndarray,
    r_acaf: np.ndarray,
    axes: np.ndarray,
    camera,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Visibility mask and pixel coordinates of all landmarks for one camera.

    A landmark is visible when (a) its surface normal faces the sun, (b) it
    projects with positive depth inside the detector, and (c) the ray to the
    spacecraft clears the bounding ellipsoid, tested in the axes-scaled space
    where the ellipsoid is the unit sphere: (C' - L') . L' > 0 for scaled
    spacecraft C' and landmark L'.

    Returns:
        (mask, px, py) over all landmarks; px/py are valid where depth > 0.
    """
    lit = normals @ sun_acaf > 0.0
    p = (lm_aci - r_aci) @ cam_rot.T
    depth = p[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        px = camera.focal_px * p[..., 0] / depth + camera.center
        py = camera.focal_px * p[..., 1] / depth + camera.center
    in_fov = (
        (depth > 0.0)
        & (px >= 0.0)
        & (px <= camera.n_px)
        & (py >= 0.0)
        & (py <= camera.n_px)
    )
    scaled_lm = landmarks / axes
    scaled_sc = r_acaf / axes
    clear = ((scaled_sc - scaled_lm) * scaled_lm).sum(axis=-1) > 0.0
    return lit & in_fov & clear, px, py


def _select_visible(mask: np.ndarray, px: np.ndarray, py: np.ndarray, camera, cap: int):
    ids = np.nonzero(mask)[0]
    if ids.size > cap:
        center_dist = (px[ids] - camera.center) ** 2 + (py[ids] - camera.center) ** 2
        keep = np.argsort(center_dist, kind="stable")[:cap]
        ids = np.sort(ids[keep])
    return ids


@lru_cache(maxsize=4)
def formation_truth(config: ScenarioConfig) -> FormationTruth:
    """Generate (and memoize) the truth products for a formation scenario."""
    if config.kind != "formation":
        raise ValueError("formation_truth needs a formation scenario")
    ast = config.asteroid
    orbit = config.orbit
    chief_el = np.asarray(orbit.chief, dtype=float)
    deputy_el = deputy_from_roe(chief_el, orbit.deputy_aroe)
    rc0, vc0 = kepler_to_cartesian(chief_el, ast.mu)
    rd0, vd0 = kepler_to_cartesian(deputy_el, ast.mu)
    y0 = np.concatenate([rc0, vc0, rd0, vd0])
    period = orbit_period(chief_el[0], ast.mu)
    t_end = orbit.n_orbits * period
    dt = config.meas_interval
    times = dt * np.arange(1, int(np.floor(t_end / dt)) + 1)

    coast = _make_truth_rhs(ast, None)
    maneuver = None
    if config.truth_mode in ("perfect", "imperfect"):
        man_cfg = config.maneuver
        t_search = man_cfg.start_orbits * period
        leg1 = _solve(coast, 0.0, t_search, y0)

        def ascending_quarter(t, y):
            # -cos(u) rises through zero at argument of latitude 90 deg
            return -np.cos(argument_of_latitude(y[0:3], y[3:6]))

        ascending_quarter.terminal = True
        ascending_quarter.direction = 1.0
        leg2 = _solve(coast, t_search, t_end, leg1.y[:, -1], events=ascending_quarter)
        if leg2.t_events[0].size == 0:
            raise RuntimeError("no ascending latitude-90 crossing after burn search start")
        t_burn = float(leg2.t_events[0][0])

        def thrust(t, rc, vc):
            h = np.cross(rc, vc)
            return (-man_cfg.accel / np.linalg.norm(h)) * h

        burn_rhs = _make_truth_rhs(ast, thrust)
        leg3 = _solve(burn_rhs, t_burn, t_burn + man_cfg.duration, leg2.y[:, -1])
        leg4 = _solve(coast, t_burn + man_cfg.duration, t_end, leg3.y[:, -1])

        sample_ts = np.linspace(t_burn, t_burn + man_cfg.duration, 33)
        burn_states = leg3.sol(sample_ts).T
        h_vecs = np.cross(burn_states[:, 0:3], burn_states[:, 3:6])
        dirs = -h_vecs / np.linalg.norm(h_vecs, axis=-1, keepdims=True)
        maneuver = ManeuverProfile(
            t_start=t_burn,
            duration=man_cfg.duration,
            accel=man_cfg.accel,
            times=sample_ts,
            dirs=dirs,
        )
        states = np.empty((times.size, 12))
        bounds = [leg1.t[-1], t_burn, t_burn + man_cfg.duration, t_end]
        sols = [leg1.sol, leg2.sol, leg3.sol, leg4.sol]
        for k, t in enumerate(times):
            idx = int(np.searchsorted(bounds, t, side="left"))
            idx = min(idx, len(sols) - 1)
            states[k] = sols[idx](t)
    else:
        sol = _solve(coast, 0.0, t_end, y0)
        states = sol.sol(times).T

    landmarks, normals = fibonacci_ellipsoid(config.n_landmarks, ast.ellipsoid)
    axes = np.asarray(ast.ellipsoid, dtype=float)
    sun = np.asarray(ast.sun_direction, dtype=float)
    sun = sun / np.linalg.norm(sun)
    cam = config.camera

    n_epochs = times.size
    lm_aci = np.empty((n_epochs, config.n_landmarks, 3))
    cam_rot = np.empty((n_epochs, 2, 3, 3))
    visible: list[tuple[np.ndarray, np.ndarray]] = []
    z_true: list[np.ndarray] = []
    noise_std: list[np.ndarray] = []

    for k, t in enumerate(times):
        spin = rotation_z(ast.spin_rate * t)
        lm_k = landmarks @ spin.T
        lm_aci[k] = lm_k
        sun_acaf = spin.T @ sun

        rc, vc = states[k, 0:3], states[k, 3:6]
        rd, vd = states[k, 6:9], states[k, 9:12]
        rel = rd - rc
        rho = float(np.linalg.norm(rel))
        rho_dot = float((vd - vc) @ rel / rho)

        parts = [np.array([rho, rho_dot])]
        stds = [np.array([config.range_std, config.range_rate_std])]
        ids_pair = []
        for cam_idx, r in enumerate((rc, rd)):
            rot = camera_rotation(r)
            cam_rot[k, cam_idx] = rot
            mask, px, py = landmark_visibility(
                r, rot, lm_k, landmarks, normals, sun_acaf, spin.T @ r, axes, cam
            )
            ids = _select_visible(mask, px, py, cam, config.max_visible)
            ids_pair.append(ids)
            if ids.size:
                parts.append(np.stack([px[ids], py[ids]], axis=-1).reshape(-1))
                stds.append(np.full(2 * ids.size, config.pixel_std))
        visible.append((ids_pair[0], ids_pair[1]))
        z_true.append(np.concatenate(parts))
        noise_std.append(np.concatenate(stds))

    return FormationTruth(
        config=config,
        times=times,
        initial=y0,
        states=states,
        period=period,
        maneuver=maneuver,
        landmarks=landmarks,
        normals=normals,
        lm_aci=lm_aci,
        cam_rot=cam_rot,
        visible=visible,
        z_true=z_true,
        noise_std=noise_std,
    )


def _no_measurement(x, t):
    raise RuntimeError("bind an epoch measurement before updating")


def formation_filter_model(
    config: ScenarioConfig,
    kind: str,
    maneuver: ManeuverProfile | None = None,
) -> FilterModel:
    """Unscented filter dynamics for the formation scenario.

    Args:
        config: formation scenario.
        kind: 'white' for the 12-state model (positions/velocities of both
            spacecraft), 'markov' for the 18-state model that adds a
            first-order Gauss-Markov empirical acceleration per spacecraft.
        maneuver: the filter's copy of the commanded burn, if any.

    The returned model's measure/meas_noise are placeholders; bind them per
    epoch with epoch_measurement(). Propagation is fixed-step RK4 with
    config.filter_substeps substeps, batched over sigma points.
    """
    ast = config.asteroid
    mu, j2, ref = ast.mu, ast.j2, ast.ref_radius
    substeps = config.filter_substeps

    if kind == "white":
        dim = 12
        segments = (
            NoiseSegment("white", 0, 3, 0),
            NoiseSegment("white", 6, 3, 3),
        )

        def deriv(t: float, y: np.ndarray) -> np.ndarray:
            acc = zonal_accel(_stacked_positions(y), mu, j2, 0.0, ref)
            out = np.empty_like(y)
            out[..., 0:3] = y[..., 3:6]
            out[..., 6:9] = y[..., 9:12]
            out[..., 3:6] = acc[..., 0, :]
            out[..., 9:12] = acc[..., 1, :]
            if maneuver is not None:
                out[..., 3:6] += maneuver.accel_at(t)
            return out

        def gamma(t: float) -> np.ndarray:
            g = np.zeros((12, 6))
            g[3:6, 0:3] = np.eye(3)
            g[9:12, 3:6] = np.eye(3)
            return g

    elif kind == "markov":
        dim = 18
        beta = config.beta
        segments = (
            NoiseSegment("gauss_markov", 0, 3, 0),
            NoiseSegment("gauss_markov", 9, 3, 3),
        )

        def deriv(t: float, y: np.ndarray) -> np.ndarray:
            pos = np.stack([y[..., 0:3], y[..., 9:12]], axis=-2)
            acc = zonal_accel(pos, mu, j2, 0.0, ref)
            out = np.empty_like(y)
            out[..., 0:3] = y[..., 3:6]
            out[..., 3:6] = acc[..., 0, :] + y[..., 6:9]
            out[..., 6:9] = -beta * y[..., 6:9]
            out[..., 9:12] = y[..., 12:15]
            out[..., 12:15] = acc[..., 1, :] + y[..., 15:18]
            out[..., 15:18] = -beta * y[..., 15:18]
            if maneuver is not None:
                out[..., 3:6] += maneuver.accel_at(t)
            return out

        def gamma(t: float) -> np.ndarray:
            g = np.zeros((18, 6))
            g[6:9, 0:3] = np.eye(3)
            g[15:18, 3:6] = np.eye(3)
            return g

    else:
        raise ValueError(f"unknown formation model kind {kind!r}")

    def propagate(x: np.ndarray, t0: float, t1: float) -> np.ndarray:
        if t1 == t0:
            return np.array(x, dtype=float)
        return rk4_span(deriv, t0, t1, x, substeps)

    return FilterModel(
        state_dim=dim,
        propagate=propagate,
        measure=_no_measurement,
        meas_noise=np.eye(1),
        noise_map=gamma,
        noise_segments=segments,
    )


def epoch_measurement(
    truth: FormationTruth, k: int, kind: str
) -> tuple[Callable[[np.ndarray, float], np.ndarray], np.ndarray]:
    """Measurement closure and noise covariance for epoch k.

    The closure maps stacked states (..., state_dim) to predicted
    measurements [range, range-rate, chief pixels..., deputy pixels...]
    using the true (known-attitude) camera rotations for the epoch.
    """
    cfg = truth.config
    cam = cfg.camera
    focal, center = cam.focal_px, cam.center
    ids_c, ids_d = truth.visible[k]
    lm_sets = (truth.lm_aci[k][ids_c], truth.lm_aci[k][ids_d])
    rots = (truth.cam_rot[k, 0], truth.cam_rot[k, 1])
    rc_sl, vc_sl, rd_sl, vd_sl = STATE_SLICES[kind]

    def measure(x: np.ndarray, t: float) -> np.ndarray:
        rc, vc = x[..., rc_sl], x[..., vc_sl]
        rd, vd = x[..., rd_sl], x[..., vd_sl]
        rel = rd - rc
        rho = np.linalg.norm(rel, axis=-1)
        rho_dot = ((vd - vc) * rel).sum(axis=-1) / rho
        parts = [rho[..., None], rho_dot[..., None]]
        for lm, rot, r in ((lm_sets[0], rots[0], rc), (lm_sets[1], rots[1], rd)):
            if lm.shape[0] == 0:
                continue
            p = (lm - r[..., None, :]) @ rot.T
            px = focal * p[..., 0] / p[..., 2] + center
            py = focal * p[..., 1] / p[..., 2] + center
            pix = np.stack([px, py], axis=-1)
            parts.append(pix.reshape(*pix.shape[:-2], -1))
        return np.concatenate(parts, axis=-1)

    return measure, np.diag(truth.noise_std[k] ** 2)
