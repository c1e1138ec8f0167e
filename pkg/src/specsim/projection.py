"""Exact image-plane feature synthesis.

Pupil-contour points live inside the eye's aqueous medium, so imaging one is
a two-point boundary-value problem: find the initial direction at the point
such that the ray, refracted at the corneal surface (and through the
spectacle lens when present), passes through the camera pinhole.  The solver
is a 2-DOF shooting method with Newton iterations on a finite-difference
Jacobian, initialized from the straight line to the pinhole.

Glints are classical mirror-reflection (Alhazen) problems solved per LED and
specular surface by minimizing the reflection-law residual over the
surface's two-parameter domain.  No refraction is modeled along glint paths;
the glass is likewise transparent for glint occlusion tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .eye import EyeGeometry, EyePose, Scene, gaze_direction, pupil_contour
from .lens import LensGeometry, lens_transit
from .optics import Ray, dot, intersect_sphere, normalize, reflect, refract, vec

PINHOLE_MISS_TOL = 1e-6  # mm; convergence criterion of the shooting solver
FD_STEP = 1e-7  # rad; finite-difference step for the shooting Jacobian
MAX_NEWTON_ITER = 50
GLINT_RESIDUAL_TOL = 1e-8


class DegenerateProjectionError(RuntimeError):
    """Fewer than five pupil points could be imaged."""


class DegenerateFitError(ValueError):
    """The constrained conic solve admits no ellipse."""


@dataclass(frozen=True)
class Ellipse:
    """Image-plane ellipse: center in pixels, semi-axes in pixels, angle of
    the major axis in radians within [0, pi)."""

    center: tuple[float, float]
    semi_major: float
    semi_minor: float
    angle: float

    def __post_init__(self):
        if not (self.semi_major >= self.semi_minor > 0):
            raise ValueError("ellipse axes must satisfy a >= b > 0")
        if not (0.0 <= self.angle < math.pi):
            raise ValueError("ellipse angle must lie in [0, pi)")

    def boundary_points(self, n: int, phase: float = 0.0) -> np.ndarray:
        """n points around the boundary, shape (n, 2)."""
        t = phase + 2.0 * np.pi * np.arange(n) / n
        c, s = math.cos(self.angle), math.sin(self.angle)
        x = self.semi_major * np.cos(t)
        y = self.semi_minor * np.sin(t)
        return np.stack(
            [self.center[0] + c * x - s * y, self.center[1] + s * x + c * y], axis=-1
        )

    def boundary_distance(self, p) -> float:
        """Distance from p to the boundary point at the same parametric angle
        (exact for points on the ellipse, a tight proxy nearby)."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        xe = c * dx + s * dy
        ye = -s * dx + c * dy
        t = math.atan2(ye / self.semi_minor, xe / self.semi_major)
        bx = self.semi_major * math.cos(t)
        by = self.semi_minor * math.sin(t)
        return math.hypot(xe - bx, ye - by)


# ---------------------------------------------------------------------------
# forward propagation eye -> camera
# ---------------------------------------------------------------------------


@dataclass
class PathResult:
    ray: Ray | None  # exit ray in air, None if the path died
    cap_ok: bool = True
    cornea_point: np.ndarray | None = None


def default_stages(scene: Scene) -> tuple[str, ...]:
    return ("cornea", "lens") if scene.lens is not None else ("cornea",)


def propagate_from_eye(
    p: np.ndarray, d: np.ndarray, scene: Scene, gaze: np.ndarray, stages: tuple[str, ...]
) -> PathResult:
    """Push a ray from a point in the aqueous medium out to open air."""
    ray = Ray(np.asarray(p, dtype=float), np.asarray(d, dtype=float))
    cap_ok = True
    cornea_point = None
    if "cornea" in stages:
        eye = scene.eye
        hits = intersect_sphere(ray, eye.cornea_center(gaze), eye.cornea_radius)
        if not hits:
            return PathResult(None)
        hit = hits[0]
        cornea_point = hit.point
        cap_ok = eye.on_cap(hit.point, gaze)
        out = refract(ray.direction, hit.normal, eye.cornea_index, 1.0)
        if out is None:
            return PathResult(None, cap_ok, cornea_point)
        ray = Ray(hit.point, out).advanced()
    if "lens" in stages and scene.lens is not None:
        transit = lens_transit(ray, scene.lens)
        if transit.kind == "through":
            ray = transit.ray
        elif transit.kind == "blocked":
            return PathResult(None, cap_ok, cornea_point)
    return PathResult(ray, cap_ok, cornea_point)


def _miss_vector(exit_ray: Ray, pinhole: np.ndarray) -> np.ndarray:
    """Vector from the pinhole to the closest point of the exit ray."""
    t = float(dot(pinhole - exit_ray.origin, exit_ray.direction))
    return exit_ray.at(t) - pinhole


def _orthobasis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = vec(0.0, 1.0, 0.0) if abs(d[1]) < 0.9 else vec(1.0, 0.0, 0.0)
    e1 = normalize(np.cross(helper, d))
    return e1, np.cross(d, e1)


@dataclass
class FeatureSolution:
    """Converged shooting solution for one feature point."""

    uv: tuple[float, float]
    initial_direction: np.ndarray
    exit_ray: Ray
    miss_mm: float  # distance of the exit ray from the pinhole


def solve_feature_point(
    p: np.ndarray,
    scene: Scene,
    pose: EyePose,
    stages: tuple[str, ...] | None = None,
) -> FeatureSolution | None:
    """Shooting solve for the ray imaging a point inside the eye.

    None when the point cannot be imaged (occluded, TIR, vignetted, or the
    Newton iteration fails to converge within its budget).
    """
    if stages is None:
        stages = default_stages(scene)
    gaze = gaze_direction(pose)
    pinhole = scene.camera.position
    p = np.asarray(p, dtype=float)
    d0 = normalize(pinhole - p)
    e1, e2 = _orthobasis(d0)

    def shoot(a: float, b: float):
        d = normalize(d0 + a * e1 + b * e2)
        res = propagate_from_eye(p, d, scene, gaze, stages)
        if res.ray is None:
            return None
        m = _miss_vector(res.ray, pinhole)
        return np.array([float(dot(m, e1)), float(dot(m, e2))]), res, d

    ab = np.zeros(2)
    out = shoot(*ab)
    if out is None:
        return None
    f, res, d = out
    fn = float(np.hypot(*f))
    for _ in range(MAX_NEWTON_ITER):
        if fn < PINHOLE_MISS_TOL:
            break
        jac = np.empty((2, 2))
        for j in range(2):
            probe = ab.copy()
            probe[j] += FD_STEP
            bumped = shoot(*probe)
            if bumped is None:
                return None
            jac[:, j] = (bumped[0] - f) / FD_STEP
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return None
        # damped Newton: halve the step until the miss shrinks
        scale = 1.0
        for _ in range(5):
            trial = shoot(*(ab + scale * step))
            if trial is not None and float(np.hypot(*trial[0])) < fn:
                ab = ab + scale * step
                f, res, d = trial
                fn = float(np.hypot(*f))
                break
            scale *= 0.5
        else:
            return None
    if fn >= PINHOLE_MISS_TOL:
        return None
    if not res.cap_ok:
        return None
    exit_ray = res.ray
    if float(dot(pinhole - exit_ray.origin, exit_ray.direction)) <= 0:
        return None  # pinhole behind the exit ray
    uv = scene.camera.project_arriving(-exit_ray.direction)
    miss = float(np.linalg.norm(_miss_vector(exit_ray, pinhole)))
    return FeatureSolution(uv=uv, initial_direction=d, exit_ray=exit_ray, miss_mm=miss)


def trace_feature_point(
    p: np.ndarray,
    scene: Scene,
    pose: EyePose,
    stages: tuple[str, ...] | None = None,
) -> tuple[float, float] | None:
    """Image-plane position of a point inside the eye, or None when the point
    cannot be imaged."""
    sol = solve_feature_point(p, scene, pose, stages)
    return None if sol is None else sol.uv


def project_pupil(
    scene: Scene, pose: EyePose, k: int = 10, stages: tuple[str, ...] | None = None
) -> list[tuple[float, float]]:
    """Image the k-point pupil contour; points that fail to image are dropped."""
    if k < 5:
        raise ValueError("ellipse fitting requires at least 5 contour points")
    pts = []
    for p in pupil_contour(pose, scene.eye, k):
        uv = trace_feature_point(p, scene, pose, stages)
        if uv is not None:
            pts.append(uv)
    if len(pts) < 5:
        raise DegenerateProjectionError(
            f"only {len(pts)} of {k} pupil points imaged at pose {pose}"
        )
    return pts


# ---------------------------------------------------------------------------
# direct least-squares ellipse fit (algebraic distance, ellipse-constrained)
# ---------------------------------------------------------------------------


def fit_ellipse(points) -> Ellipse:
    """Fit an ellipse to >= 5 image points.

    Constrained conic minimization (4AC - B^2 = 1) via the numerically stable
    partitioned eigen formulation; data are centered and uniformly scaled
    before fitting and the conic is denormalized afterwards.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 5:
        raise ValueError("need at least 5 (u, v) points")
    mean = pts.mean(axis=0)
    centered = pts - mean
    scale = float(np.sqrt(np.mean(np.sum(centered**2, axis=1))))
    if scale == 0.0:
        raise DegenerateFitError("all points coincide")
    z = centered / scale

    x, y = z[:, 0], z[:, 1]
    d1 = np.stack([x * x, x * y, y * y], axis=1)
    d2 = np.stack([x, y, np.ones_like(x)], axis=1)
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t_mat = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise DegenerateFitError("rank-deficient point configuration")
    m = s1 + s2 @ t_mat
    # left-multiplied by the inverse constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    eigval, eigvec = np.linalg.eig(m)
    a1 = None
    for i in range(3):
        v = eigvec[:, i]
        if np.max(np.abs(np.imag(v))) > 1e-9:
            continue
        v = np.real(v)
        if 4.0 * v[0] * v[2] - v[1] ** 2 > 0.0:
            a1 = v
            break
    if a1 is None:
        raise DegenerateFitError("no ellipse satisfies the constrained fit")
    coeffs = np.concatenate([a1, t_mat @ a1])  # A, B, C, D, E, F in scaled frame

    # denormalize: substitute x -> (u - mu)/s into the conic
    A, B, C, D, E, F = coeffs
    s = scale
    mu, mv = mean
    A2, B2, C2 = A / s**2, B / s**2, C / s**2
    D2 = D / s - (2 * A * mu + B * mv) / s**2
    E2 = E / s - (B * mu + 2 * C * mv) / s**2
    F2 = (
        F
        + (A * mu * mu + B * mu * mv + C * mv * mv) / s**2
        - (D * mu + E * mv) / s
    )
    return _conic_to_ellipse(A2, B2, C2, D2, E2, F2)


def _conic_to_ellipse(A, B, C, D, E, F) -> Ellipse:
    den = B * B - 4.0 * A * C
    if den >= 0.0:
        raise DegenerateFitError("conic is not an ellipse")
    u0 = (2.0 * C * D - B * E) / den
    v0 = (2.0 * A * E - B * D) / den
    f0 = A * u0 * u0 + B * u0 * v0 + C * v0 * v0 + D * u0 + E * v0 + F
    m = np.array([[A, B / 2.0], [B / 2.0, C]])
    eigval, eigvec = np.linalg.eigh(m)
    axes2 = -f0 / eigval
    if np.any(axes2 <= 0.0) or not np.all(np.isfinite(axes2)):
        raise DegenerateFitError("conic is not a real ellipse")
    axes = np.sqrt(axes2)
    major = int(np.argmax(axes))
    vmaj = eigvec[:, major]
    angle = math.atan2(vmaj[1], vmaj[0]) % math.pi
    a, b = float(np.max(axes)), float(np.min(axes))
    if abs(a - b) < 1e-12 * max(a, 1.0):
        angle = 0.0  # circle: orientation is arbitrary
    return Ellipse(center=(float(u0), float(v0)), semi_major=a, semi_minor=b, angle=angle)


# ---------------------------------------------------------------------------
# glints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Glint:
    led: int
    surface: str  # "cornea" | "lens_front" | "lens_back"
    image_uv: tuple[float, float]
    point: np.ndarray  # 3D reflection point, world frame
    residual: float  # |reflect(incident) - required| at the point


def _reflection_residual(point, normal, led, pinhole) -> float:
    d_i = normalize(point - led)
    if float(dot(d_i, normal)) >= 0.0:
        return 10.0  # LED behind the surface; steer away
    d_o = normalize(pinhole - point)
    r = reflect(d_i, normal)
    return float(np.linalg.norm(r - d_o))


def _polish(param_to_geom, x0, led, pinhole, steps=12):
    """Gauss-Newton refinement of the 2-parameter reflection residual."""
    x = np.asarray(x0, dtype=float)

    def resid_vec(q):
        point, normal = param_to_geom(q)
        d_i = normalize(point - led)
        d_o = normalize(pinhole - point)
        return reflect(d_i, normal) - d_o

    h = 1e-8
    for _ in range(steps):
        r0 = resid_vec(x)
        if np.linalg.norm(r0) < 1e-13:
            break
        jac = np.empty((3, 2))
        for j in range(2):
            q = x.copy()
            q[j] += h
            jac[:, j] = (resid_vec(q) - r0) / h
        try:
            step, *_ = np.linalg.lstsq(jac, -r0, rcond=None)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        x = x + step
    return x


def _solve_surface_glints(param_to_geom, domain_ok, seeds, led, pinhole):
    """Nelder-Mead from several seeds; returns deduplicated solutions."""
    sols = []
    for seed in seeds:
        res = minimize(
            lambda q: _reflection_residual(*param_to_geom(q), led, pinhole) ** 2,
            np.asarray(seed, dtype=float),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-22, "maxiter": 300},
        )
        x = _polish(param_to_geom, res.x, led, pinhole)
        point, normal = param_to_geom(x)
        r = _reflection_residual(point, normal, led, pinhole)
        if r >= GLINT_RESIDUAL_TOL or not domain_ok(x, point):
            continue
        if any(np.linalg.norm(point - p) < 1e-3 for p, _ in sols):
            continue
        sols.append((point, r))
    return sols


def _segment_blocked(scene: Scene, a: np.ndarray, b: np.ndarray) -> bool:
    """True when the open segment a->b crosses opaque geometry (eyeball,
    corneal bulge, lens rim).  Lens glass does not occlude glint paths."""
    seg = b - a
    length = float(np.linalg.norm(seg))
    d = seg / length
    ray = Ray(a, d)
    win = (1e-6, length - 1e-6)
    for center, radius in (
        (scene.eye.center, scene.eye.eyeball_radius),
        (scene.eye.cornea_center(vec(0, 0, 1)), scene.eye.cornea_radius),
    ):
        for hit in intersect_sphere(ray, center, radius):
            if win[0] < hit.t < win[1]:
                return True
    lens = scene.lens
    if lens is not None:
        from .lens import _rim_hit_t

        t = _rim_hit_t(lens, ray, win[0])
        if t is not None and t < win[1]:
            return True
    return False


def _sphere_cap_seeds(axis, n_center, spread):
    e1, e2 = _orthobasis(axis)

    def to_angles(n):
        ct = float(np.clip(dot(n, axis), -1, 1))
        theta = math.acos(ct)
        phi = math.atan2(float(dot(n, e2)), float(dot(n, e1)))
        return theta, phi

    t0, p0 = to_angles(n_center)
    seeds = [(t0, p0)]
    for i in range(7):
        ang = 2 * math.pi * i / 7
        seeds.append((t0 + spread * math.cos(ang), p0 + spread * math.sin(ang)))
    return seeds, e1, e2


def compute_glints(scene: Scene, pose: EyePose) -> list[Glint]:
    """Mirror-reflection image of each LED on each specular surface.

    Straight-line Alhazen solves: the incident leg LED->surface and the
    reflected leg surface->pinhole are unrefracted.  Emits only solutions
    whose reflection-law residual is below 1e-8, which lie in the valid
    surface domain, and whose both legs are unoccluded.
    """
    if not scene.leds:
        raise ValueError("scene has no LEDs")
    pin = scene.camera.position
    gaze = gaze_direction(pose)
    eye = scene.eye
    out: list[Glint] = []

    surfaces = [("cornea", None)]
    if scene.lens is not None:
        lens = scene.lens
        if lens.curved_towards_eye:
            surfaces += [("lens_front", "planar"), ("lens_back", "curved")]
        else:
            surfaces += [("lens_front", "curved"), ("lens_back", "planar")]

    for led_idx, led in enumerate(scene.leds):
        for name, which in surfaces:
            if name == "cornea":
                center = eye.cornea_center(gaze)
                radius = eye.cornea_radius
                n0 = normalize(normalize(led - center) + normalize(pin - center))
                seeds, e1, e2 = _sphere_cap_seeds(gaze, n0, 0.15)

                def geom(q, center=center, radius=radius, e1=e1, e2=e2):
                    th, ph = q
                    n = (
                        math.cos(th) * gaze
                        + math.sin(th) * (math.cos(ph) * e1 + math.sin(ph) * e2)
                    )
                    return center + radius * n, n

                def ok(q, point, center=center):
                    return eye.on_cap(point, gaze)

            elif which == "curved":
                lens = scene.lens
                center = lens.sphere_center
                radius = lens.sphere_radius
                n0 = normalize(normalize(led - center) + normalize(pin - center))
                seeds, e1, e2 = _sphere_cap_seeds(lens.axis_dir, n0, 0.05)

                def geom(q, center=center, radius=radius, e1=e1, e2=e2, axis=lens.axis_dir):
                    th, ph = q
                    n = (
                        math.cos(th) * axis
                        + math.sin(th) * (math.cos(ph) * e1 + math.sin(ph) * e2)
                    )
                    return center + radius * n, n

                def ok(q, point, lens=lens):
                    if float(dot(point - lens.sphere_center, lens.axis_dir)) <= 0:
                        return False
                    return lens.transverse_radius(point) <= lens.aperture_radius

            else:  # planar face
                lens = scene.lens
                e1, e2 = _orthobasis(lens.axis_dir)
                p0 = lens.planar_point
                nrm = lens.planar_normal
                # seed ring across the aperture
                r_seed = 0.5 * lens.aperture_radius
                seeds = [(0.0, 0.0)] + [
                    (r_seed * math.cos(2 * math.pi * i / 7), r_seed * math.sin(2 * math.pi * i / 7))
                    for i in range(7)
                ]

                def geom(q, p0=p0, e1=e1, e2=e2, nrm=nrm):
                    return p0 + q[0] * e1 + q[1] * e2, nrm

                def ok(q, point, lens=lens):
                    return lens.transverse_radius(point) <= lens.aperture_radius

            for point, resid in _solve_surface_glints(geom, ok, seeds, led, pin):
                if _segment_blocked(scene, led, point) or _segment_blocked(scene, point, pin):
                    continue
                uv = scene.camera.project_arriving(point - pin)
                out.append(Glint(led=led_idx, surface=name, image_uv=uv, point=point, residual=resid))
    return out
