"""Model-based gaze estimation from the imaged pupil ellipse.

The fitted ellipse is unprojected to the two 3D circles of known radius
whose perspective projection reproduces it exactly (the classical cone-circle
two-fold ambiguity), the ambiguity is resolved with a coarse eyeball-center
estimate, and the surviving circle normal is mapped to gaze angles through a
five-point axis calibration (primary plus four secondary positions).

The model deliberately ignores corneal and spectacle-lens refraction: how
strongly that mismatch degrades accuracy with lens power is exactly what the
experiment harness measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eye import Camera, EyePose
from .optics import dot, normalize
from .projection import Ellipse


class DegenerateConeError(ValueError):
    """The image conic does not define a proper elliptic cone."""


class DegenerateCalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CircleCandidate:
    """3D circle in the camera frame; normal oriented towards the camera."""

    center: np.ndarray  # mm
    normal: np.ndarray  # unit
    radius: float  # mm


def _ellipse_conic(e: Ellipse) -> np.ndarray:
    """Homogeneous 3x3 conic matrix of the ellipse in pixel coordinates."""
    c, s = math.cos(e.angle), math.sin(e.angle)
    r = np.array([[c, -s], [s, c]])
    m = r @ np.diag([1.0 / e.semi_major**2, 1.0 / e.semi_minor**2]) @ r.T
    ctr = np.array(e.center)
    q = np.zeros((3, 3))
    q[:2, :2] = m
    q[:2, 2] = -m @ ctr
    q[2, :2] = -m @ ctr
    q[2, 2] = float(ctr @ m @ ctr) - 1.0
    return q


def unproject_ellipse(
    e: Ellipse, camera: Camera, pupil_radius: float
) -> tuple[CircleCandidate, CircleCandidate]:
    """The two 3D circles of the given radius whose pinhole projection is e.

    Diagonalizes the quadratic form of the viewing cone through the ellipse;
    circular cross-sections have normals in the plane of the extreme
    eigenvectors.  Centers come out at positive camera z; normals satisfy
    dot(normal, camera_direction) > 0.
    """
    if pupil_radius <= 0:
        raise ValueError("pupil radius must be positive")
    k = np.array(
        [
            [camera.focal_px, 0.0, camera.cx],
            [0.0, camera.focal_px, camera.cy],
            [0.0, 0.0, 1.0],
        ]
    )
    cone = k.T @ _ellipse_conic(e) @ k
    eigval, eigvec = np.linalg.eigh(cone)
    if np.sum(eigval > 0) == 1 and np.sum(eigval < 0) == 2:
        eigval, eigvec = -eigval, eigvec
    order = np.argsort(eigval)[::-1]  # descending: l1 >= l2 > 0 > l3
    l1, l2, l3 = eigval[order]
    if not (l1 > 0 and l2 > 0 and l3 < 0):
        raise DegenerateConeError(
            f"cone eigenvalues {eigval} lack the (+,+,-) signature of an elliptic cone"
        )
    basis = eigvec[:, order]
    if np.linalg.det(basis) < 0:
        basis = basis.copy()
        basis[:, 1] = -basis[:, 1]

    sin_t = math.sqrt((l1 - l2) / (l1 - l3))
    cos_t = math.sqrt((l2 - l3) / (l1 - l3))
    scale = pupil_radius / math.sqrt(-l1 * l3)

    cands = []
    for sgn in (1.0, -1.0):
        n_eig = np.array([sgn * sin_t, 0.0, cos_t])
        c_eig = scale * np.array([l3 * sgn * sin_t, 0.0, l1 * cos_t])
        center = basis @ c_eig
        normal = basis @ n_eig
        if center[2] < 0:  # antipodal solution in front of the camera
            center = -center
        if float(dot(normal, center)) > 0:
            normal = -normal
        cands.append(CircleCandidate(center=center, normal=normal, radius=pupil_radius))
    return cands[0], cands[1]


def disambiguate(
    cands: tuple[CircleCandidate, CircleCandidate], eyeball_center_estimate: np.ndarray
) -> CircleCandidate:
    """Pick the candidate whose normal points away from the eyeball center."""
    a, b = cands
    est = np.asarray(eyeball_center_estimate, dtype=float)
    da = float(dot(a.normal, a.center - est))
    db = float(dot(b.normal, b.center - est))
    return a if da >= db else b


CALIBRATION_POSES = (
    EyePose(0.0, 0.0),
    EyePose(20.0, 0.0),
    EyePose(-20.0, 0.0),
    EyePose(0.0, 20.0),
    EyePose(0.0, -20.0),
)


@dataclass(frozen=True)
class AxisCalibration:
    """Five-point axis calibration of the normal-to-angle map.

    h_axis / v_axis span the observed normal deviations; per-axis scales are
    anchored separately on the positive and negative secondary observations,
    and a piecewise-linear cross-coupling correction (zero in symmetric
    scenes) makes the map exact at all five calibration observations.  This
    is the correction for the translation-like offsets the eyeglasses add.
    """

    origin_normal: np.ndarray
    h_axis: np.ndarray
    v_axis: np.ndarray
    # deviation coordinates of the four secondary observations
    p_east: tuple[float, float]
    p_west: tuple[float, float]
    p_north: tuple[float, float]
    p_south: tuple[float, float]
    slope_h_pos: float
    slope_h_neg: float
    slope_v_pos: float
    slope_v_neg: float


def _cross_h(cal: AxisCalibration, pv: float) -> float:
    """Interpolated h-coordinate drift caused by pure vertical rotation."""
    if pv >= 0:
        return cal.p_north[0] * pv / cal.p_north[1]
    return cal.p_south[0] * pv / cal.p_south[1]


def _cross_v(cal: AxisCalibration, ph: float) -> float:
    if ph >= 0:
        return cal.p_east[1] * ph / cal.p_east[0]
    return cal.p_west[1] * ph / cal.p_west[0]


def calibrate_axes(observations) -> AxisCalibration:
    """Build the axis calibration from 5 (pose, CircleCandidate) pairs taken
    at the primary and the four 20-degree secondary positions."""
    if len(observations) != 5:
        raise ValueError("axis calibration needs exactly 5 observations")
    by_pose = {}
    for pose, cand in observations:
        by_pose[(round(pose.theta_h, 9), round(pose.theta_v, 9))] = cand
    required = {(0.0, 0.0), (20.0, 0.0), (-20.0, 0.0), (0.0, 20.0), (0.0, -20.0)}
    if set(by_pose) != required:
        raise ValueError(f"calibration poses must be exactly {sorted(required)}")

    n0 = normalize(by_pose[(0.0, 0.0)].normal)
    ne = normalize(by_pose[(20.0, 0.0)].normal)
    nw = normalize(by_pose[(-20.0, 0.0)].normal)
    nn = normalize(by_pose[(0.0, 20.0)].normal)
    ns = normalize(by_pose[(0.0, -20.0)].normal)

    normals = [n0, ne, nw, nn, ns]
    for i in range(5):
        for j in range(i + 1, 5):
            cosang = float(np.clip(dot(normals[i], normals[j]), -1.0, 1.0))
            if math.acos(cosang) < 1e-6:
                raise DegenerateCalibrationError(
                    "two axis-defining normals are parallel within 1e-6 rad"
                )

    h_axis = normalize(ne - nw)
    v_raw = nn - ns
    v_axis = v_raw - float(dot(v_raw, h_axis)) * h_axis
    vn = float(np.linalg.norm(v_axis))
    if vn < 1e-9:
        raise DegenerateCalibrationError("vertical axis collapses onto the horizontal axis")
    v_axis = v_axis / vn

    def coords(n):
        dev = n - n0
        return float(dot(dev, h_axis)), float(dot(dev, v_axis))

    p_e, p_w, p_n, p_s = coords(ne), coords(nw), coords(nn), coords(ns)
    if not (p_e[0] > 0 and p_w[0] < 0 and p_n[1] > 0 and p_s[1] < 0):
        raise DegenerateCalibrationError("secondary observations are not axis-ordered")

    cal = AxisCalibration(
        origin_normal=n0,
        h_axis=h_axis,
        v_axis=v_axis,
        p_east=p_e,
        p_west=p_w,
        p_north=p_n,
        p_south=p_s,
        slope_h_pos=1.0,
        slope_h_neg=1.0,
        slope_v_pos=1.0,
        slope_v_neg=1.0,
    )
    qh_e = p_e[0] - _cross_h(cal, p_e[1])
    qh_w = p_w[0] - _cross_h(cal, p_w[1])
    qv_n = p_n[1] - _cross_v(cal, p_n[0])
    qv_s = p_s[1] - _cross_v(cal, p_s[0])
    if not (qh_e > 0 and qh_w < 0 and qv_n > 0 and qv_s < 0):
        raise DegenerateCalibrationError("corrected axis anchors are not sign-ordered")
    return AxisCalibration(
        origin_normal=n0,
        h_axis=h_axis,
        v_axis=v_axis,
        p_east=p_e,
        p_west=p_w,
        p_north=p_n,
        p_south=p_s,
        slope_h_pos=20.0 / qh_e,
        slope_h_neg=-20.0 / qh_w,
        slope_v_pos=20.0 / qv_n,
        slope_v_neg=-20.0 / qv_s,
    )


def predict_geometric(obs: CircleCandidate, cal: AxisCalibration) -> tuple[float, float]:
    """Gaze angles (degrees) for a disambiguated circle observation."""
    dev = normalize(obs.normal) - cal.origin_normal
    ph = float(dot(dev, cal.h_axis))
    pv = float(dot(dev, cal.v_axis))
    qh = ph - _cross_h(cal, pv)
    qv = pv - _cross_v(cal, ph)
    th = qh * (cal.slope_h_pos if qh >= 0 else cal.slope_h_neg)
    tv = qv * (cal.slope_v_pos if qv >= 0 else cal.slope_v_neg)
    return th, tv
