"""Schematic eye, pinhole camera, IR LEDs and scene assembly.

World frame: the eyeball center sits at the origin, +z is the straight-ahead
(primary) viewing direction, +y is up, +x completes a right-handed frame.
The eye rotates about its center; the spectacle lens, camera and LEDs are
rigidly mounted and never move with gaze.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lens import LensGeometry, LensPrescription, build_lens
from .optics import Ray, dot, normalize, vec


class SceneValidationError(ValueError):
    """Raised by assemble_scene; carries every violated invariant."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class EyeGeometry:
    """Single-surface schematic eye (Gullstrand-style population averages).

    The aqueous humor and cornea share one index, so refraction happens once
    at the anterior corneal sphere.  The pupil is a circle perpendicular to
    the gaze direction, strictly behind the corneal surface.
    """

    center: np.ndarray = field(default_factory=lambda: vec(0.0, 0.0, 0.0))
    eyeball_radius: float = 12.0
    cornea_radius: float = 7.8
    cornea_center_offset: float = 5.6  # corneal sphere center anterior of eye center
    cornea_index: float = 1.336
    pupil_radius: float = 2.0
    pupil_plane_offset: float = 9.6  # pupil circle center anterior of eye center

    def cornea_center(self, gaze: np.ndarray) -> np.ndarray:
        return self.center + self.cornea_center_offset * gaze

    def cornea_apex(self, gaze: np.ndarray) -> np.ndarray:
        return self.center + (self.cornea_center_offset + self.cornea_radius) * gaze

    def pupil_center(self, gaze: np.ndarray) -> np.ndarray:
        return self.center + self.pupil_plane_offset * gaze

    @property
    def limbus_axial(self) -> float:
        """Distance from the eye center to the sclera/cornea intersection plane."""
        d = self.cornea_center_offset
        return (d * d + self.eyeball_radius**2 - self.cornea_radius**2) / (2.0 * d)

    @property
    def limbus_radius(self) -> float:
        return math.sqrt(max(self.eyeball_radius**2 - self.limbus_axial**2, 0.0))

    @property
    def cap_cos_min(self) -> float:
        """Cosine bound (about the gaze axis, seen from the corneal sphere
        center) of the optically active corneal cap."""
        return (self.limbus_axial - self.cornea_center_offset) / self.cornea_radius

    def on_cap(self, point: np.ndarray, gaze: np.ndarray, slack: float = 1e-9) -> bool:
        n = normalize(point - self.cornea_center(gaze))
        return float(dot(n, gaze)) >= self.cap_cos_min - slack

    def validate(self) -> list[str]:
        problems = []
        if self.eyeball_radius <= 0 or self.cornea_radius <= 0:
            problems.append("eye radii must be positive")
            return problems
        if not self.cornea_center_offset + self.cornea_radius > self.eyeball_radius:
            problems.append("cornea must bulge past the sclera sphere")
        if self.cornea_center_offset <= 0:
            problems.append("cornea center must sit anterior of the eye center")
        if self.cornea_index < 1:
            problems.append("cornea index must be at least 1")
        if self.pupil_radius <= 0:
            problems.append("pupil radius must be positive")
        # every pupil-contour point must be strictly inside the corneal sphere
        axial = self.pupil_plane_offset - self.cornea_center_offset
        reach = math.hypot(axial, self.pupil_radius)
        if not reach < self.cornea_radius:
            problems.append("pupil circle must lie strictly behind the corneal surface")
        return problems


@dataclass(frozen=True)
class EyePose:
    """Gaze as horizontal/vertical angles in degrees."""

    theta_h: float
    theta_v: float

    def __post_init__(self):
        if abs(self.theta_h) > 45 or abs(self.theta_v) > 45:
            raise ValueError(f"gaze angles limited to +/-45 degrees, got {self}")


def gaze_direction(pose: EyePose) -> np.ndarray:
    """Unit gaze vector for a pose.

    theta_h and theta_v are the inclinations of the line of sight measured
    against the primary axis in the horizontal and vertical planes
    (atan2(x, z) and atan2(y, z) respectively), i.e. the angular coordinates
    of a fixation target on a frontal plane.  Horizontal-only and
    vertical-only poses reduce to pure rotations about the eye's vertical
    and horizontal axes.
    """
    th = math.radians(pose.theta_h)
    tv = math.radians(pose.theta_v)
    return normalize(vec(math.tan(th), math.tan(tv), 1.0))


def pose_from_direction(g: np.ndarray) -> tuple[float, float]:
    """Inverse of gaze_direction, in degrees."""
    return (
        math.degrees(math.atan2(g[0], g[2])),
        math.degrees(math.atan2(g[1], g[2])),
    )


def _transverse_basis(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    up = vec(0.0, 1.0, 0.0)
    e1 = np.cross(up, g)
    n = np.linalg.norm(e1)
    if n < 1e-12:  # gaze straight up/down; fall back to +x
        e1 = vec(1.0, 0.0, 0.0)
    else:
        e1 = e1 / n
    e2 = np.cross(g, e1)
    return e1, e2


def pupil_contour(pose: EyePose, eye: EyeGeometry, k: int) -> list[np.ndarray]:
    """k points evenly spaced on the 3D pupil circle for the given pose."""
    if k < 3:
        raise ValueError("pupil contour needs at least 3 points")
    g = gaze_direction(pose)
    center = eye.pupil_center(g)
    e1, e2 = _transverse_basis(g)
    pts = []
    for i in range(k):
        phi = 2.0 * math.pi * i / k
        pts.append(center + eye.pupil_radius * (math.cos(phi) * e1 + math.sin(phi) * e2))
    return pts


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; image u grows along `right`, v along `down`.

    The principal point is the image center (width/2, height/2).
    """

    position: np.ndarray
    right: np.ndarray
    down: np.ndarray
    forward: np.ndarray
    focal_px: float
    width: int
    height: int

    @staticmethod
    def looking_at(
        position,
        target,
        focal_px: float = 1400.0,
        width: int = 640,
        height: int = 480,
        up=(0.0, 1.0, 0.0),
    ) -> "Camera":
        position = np.asarray(position, dtype=float)
        forward = normalize(np.asarray(target, dtype=float) - position)
        right = np.cross(forward, np.asarray(up, dtype=float))
        n = np.linalg.norm(right)
        if n < 1e-12:
            raise ValueError("camera forward direction parallel to up vector")
        right = right / n
        down = np.cross(forward, right)
        return Camera(position, right, down, forward, float(focal_px), int(width), int(height))

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    def to_camera(self, p: np.ndarray) -> np.ndarray:
        rel = p - self.position
        return vec(float(dot(rel, self.right)), float(dot(rel, self.down)), float(dot(rel, self.forward)))

    def dir_to_camera(self, d: np.ndarray) -> np.ndarray:
        return vec(float(dot(d, self.right)), float(dot(d, self.down)), float(dot(d, self.forward)))

    def dir_to_world(self, d: np.ndarray) -> np.ndarray:
        return d[0] * self.right + d[1] * self.down + d[2] * self.forward

    def project_point(self, p: np.ndarray) -> tuple[float, float]:
        """Straight-line pinhole projection of a world point."""
        pc = self.to_camera(p)
        if pc[2] <= 0:
            raise ValueError("point behind the camera")
        return (
            self.focal_px * pc[0] / pc[2] + self.cx,
            self.focal_px * pc[1] / pc[2] + self.cy,
        )

    def project_arriving(self, toward_scene: np.ndarray) -> tuple[float, float]:
        """Image position of a ray arriving at the pinhole; the argument points
        from the pinhole towards the scene."""
        dc = self.dir_to_camera(toward_scene)
        if dc[2] <= 0:
            raise ValueError("arriving ray from behind the camera")
        return (
            self.focal_px * dc[0] / dc[2] + self.cx,
            self.focal_px * dc[1] / dc[2] + self.cy,
        )

    def pixel_ray(self, u: float, v: float) -> Ray:
        d = (
            (u - self.cx) / self.focal_px * self.right
            + (v - self.cy) / self.focal_px * self.down
            + self.forward
        )
        return Ray(self.position, normalize(d))


@dataclass(frozen=True)
class EnvPatch:
    """Bright angular rectangle (window / monitor) in the environment field."""

    azimuth_deg: float
    elevation_deg: float
    half_az_deg: float
    half_el_deg: float
    intensity: float


@dataclass(frozen=True)
class Environment:
    """Procedural radiance field: bright sky above, dim floor below, plus
    rectangular bright patches; continuous except at patch edges."""

    sky: float = 0.6
    floor: float = 0.05
    horizon_softness: float = 0.15  # blend half-band in sin(elevation)
    patches: tuple[EnvPatch, ...] = ()


@dataclass(frozen=True)
class SceneConfig:
    """Validated inputs to assemble_scene, before any geometry is built.

    The default camera sits 38 mm from the eye, offset to the lower temporal
    side (about 10 degrees horizontally, 24 degrees vertically).  The offset
    keeps the degenerate pupil-faces-camera pose away from every calibration
    and test pose, and the resulting ray obliquity stays clear of total
    internal reflection at the cornea for all gaze poses in the
    +/-20 degree working area across the whole diopter sweep.
    """

    eye: EyeGeometry = field(default_factory=EyeGeometry)
    lens: LensPrescription = field(default_factory=lambda: LensPrescription(power=0.0))
    camera_position: tuple[float, float, float] = (6.0, -15.3, 34.3)
    camera_target: tuple[float, float, float] | None = None  # None -> eye center
    camera_focal_px: float = 1400.0
    image_width: int = 640
    image_height: int = 480
    leds: tuple[tuple[float, float, float], ...] = ((15.0, -15.3, 34.3), (-15.0, -15.3, 34.3))
    environment: Environment = field(default_factory=Environment)

    def with_power(self, power: float) -> "SceneConfig":
        return replace(self, lens=replace(self.lens, power=float(power)))


@dataclass(frozen=True)
class Scene:
    """Immutable assembly of eye, optional lens, camera, LEDs and environment."""

    eye: EyeGeometry
    lens: LensGeometry | None
    camera: Camera
    leds: tuple[np.ndarray, ...]
    environment: Environment

    @property
    def optical_axis(self) -> np.ndarray:
        return vec(0.0, 0.0, 1.0)


def _point_inside_lens(lens: LensGeometry, p: np.ndarray) -> bool:
    if lens.transverse_radius(p) > lens.aperture_radius:
        return False
    z = lens.axial_coord(p)
    return lens.rim_lo <= z <= lens.rim_hi


def assemble_scene(config: SceneConfig) -> Scene:
    """Build a Scene from a config; raises SceneValidationError listing every
    violated invariant."""
    violations = list(config.eye.validate())

    lens = None
    if config.lens.power != 0:
        try:
            apex = config.eye.cornea_apex(vec(0.0, 0.0, 1.0))
            lens = build_lens(config.lens, vec(0.0, 0.0, 1.0), apex)
        except (ValueError, ArithmeticError) as exc:
            violations.append(f"lens construction failed: {exc}")
    else:
        bad = config.lens.validate()
        if bad:
            violations.extend(bad)

    cam_pos = np.asarray(config.camera_position, dtype=float)
    target = (
        config.eye.center
        if config.camera_target is None
        else np.asarray(config.camera_target, dtype=float)
    )
    camera = None
    try:
        camera = Camera.looking_at(
            cam_pos,
            target,
            focal_px=config.camera_focal_px,
            width=config.image_width,
            height=config.image_height,
        )
    except ValueError as exc:
        violations.append(str(exc))

    if config.camera_focal_px <= 0:
        violations.append("camera focal length must be positive")
    if config.image_width <= 0 or config.image_height <= 0:
        violations.append("image dimensions must be positive")

    if np.linalg.norm(cam_pos - config.eye.center) <= config.eye.eyeball_radius:
        violations.append("camera pinhole lies inside the eyeball")
    g0 = vec(0.0, 0.0, 1.0)
    if np.linalg.norm(cam_pos - config.eye.cornea_center(g0)) <= config.eye.cornea_radius:
        violations.append("camera pinhole lies inside the corneal sphere")
    if lens is not None and _point_inside_lens(lens, cam_pos):
        violations.append("camera pinhole lies inside the lens volume")

    leds = tuple(np.asarray(led, dtype=float) for led in config.leds)
    for i, led in enumerate(leds):
        if led.shape != (3,):
            violations.append(f"LED {i} is not a 3-vector")

    if violations:
        raise SceneValidationError(violations)
    return Scene(eye=config.eye, lens=lens, camera=camera, leds=leds, environment=config.environment)
