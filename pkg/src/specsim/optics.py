"""Vector geometry and physical-optics primitives.

Conventions used throughout the package:

* lengths in millimeters, wavelengths in micrometers, angles in radians
  (degrees only at the CLI boundary),
* direction vectors are unit length,
* surface normals returned by intersection routines are oriented against
  the incoming ray direction.

All functions are pure and broadcast over a trailing axis of size 3, so the
same code serves both the scalar ray walker and the vectorized brute-force
tracers used in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Advance ray origins by this much along the new direction after every
# surface interaction; keeps secondary rays from re-hitting their own surface.
EPS_ADVANCE = 1e-6

# Geometric residual tolerance for intersection post-conditions (mm).
GEOM_TOL = 1e-9


def vec(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    return np.sum(a * b, axis=-1)


def norm(v: np.ndarray) -> np.ndarray | float:
    return np.sqrt(np.sum(v * v, axis=-1))


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    return v / n


@dataclass(frozen=True)
class Ray:
    """Half-line with unit direction; origin in mm."""

    origin: np.ndarray
    direction: np.ndarray

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction

    def advanced(self, eps: float = EPS_ADVANCE) -> "Ray":
        return Ray(self.origin + eps * self.direction, self.direction)


@dataclass(frozen=True)
class SurfaceHit:
    """Intersection record; normal is unit and opposes the incoming ray."""

    t: float
    point: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class MaterialIndex:
    """Refractive index model: a fixed constant or a 3-term Sellmeier fit.

    Sellmeier C coefficients are in squared micrometers, matching glass
    catalog tables.
    """

    kind: str  # "constant" | "sellmeier"
    constant_n: float = 1.0
    sellmeier_B: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sellmeier_C: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("constant", "sellmeier"):
            raise ValueError(f"unknown material kind {self.kind!r}")
        if self.kind == "constant" and not self.constant_n > 0:
            raise ValueError("constant index must be positive")


# Schott catalog coefficients for N-BK7 borosilicate crown glass.
N_BK7 = MaterialIndex(
    kind="sellmeier",
    sellmeier_B=(1.03961212, 0.231792344, 1.01046945),
    sellmeier_C=(0.00600069867, 0.0200179144, 103.560653),
)


def sellmeier_index(material: MaterialIndex, wavelength_um: float) -> float:
    """Refractive index at the given wavelength (micrometers)."""
    if material.kind == "constant":
        return material.constant_n
    l2 = wavelength_um * wavelength_um
    n2 = 1.0
    for b, c in zip(material.sellmeier_B, material.sellmeier_C):
        if l2 == c:
            raise ValueError(f"wavelength^2 {l2} coincides with Sellmeier pole {c}")
        n2 += b * l2 / (l2 - c)
    return float(np.sqrt(n2))


def reflect(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror reflection of direction d about surface normal n."""
    return d - 2.0 * np.expand_dims(dot(d, n), -1) * n


def refract(d: np.ndarray, n: np.ndarray, n1: float, n2: float) -> np.ndarray | None:
    """Snell refraction of unit direction d at a surface with unit normal n.

    n opposes d (dot(d, n) < 0); n1 is the index on the incident side and
    n2 on the transmitted side.  Returns None on total internal reflection.
    """
    eta = n1 / n2
    cos_i = -float(dot(d, n))
    sin2_t = eta * eta * (1.0 - cos_i * cos_i)
    if sin2_t > 1.0:
        return None
    cos_t = np.sqrt(1.0 - sin2_t)
    return normalize(eta * d + (eta * cos_i - cos_t) * n)


def refract_batch(d: np.ndarray, n: np.ndarray, n1: float, n2: float):
    """Vectorized refraction: (dirs, valid_mask); invalid rows are NaN."""
    eta = n1 / n2
    cos_i = -dot(d, n)
    sin2_t = eta * eta * (1.0 - cos_i * cos_i)
    ok = sin2_t <= 1.0
    cos_t = np.sqrt(np.where(ok, 1.0 - sin2_t, np.nan))
    t = eta * d + np.expand_dims(eta * cos_i - cos_t, -1) * n
    return normalize(t), ok


def fresnel_reflectance(cos_i: float, n1: float, n2: float) -> float:
    """Unpolarized Fresnel reflectance (Rs + Rp)/2; 1.0 beyond the critical angle."""
    cos_i = float(cos_i)
    sin2_i = 1.0 - cos_i * cos_i
    sin2_t = (n1 / n2) ** 2 * sin2_i
    if sin2_t > 1.0:
        return 1.0
    cos_t = np.sqrt(1.0 - sin2_t)
    rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t)
    rp = (n1 * cos_t - n2 * cos_i) / (n1 * cos_t + n2 * cos_i)
    return float(0.5 * (rs * rs + rp * rp))


def intersect_sphere(ray: Ray, center: np.ndarray, radius: float) -> list[SurfaceHit]:
    """Forward intersections of a ray with a sphere, ascending t (0, 1 or 2).

    Normals oppose the ray direction, so an exit hit carries the inward
    surface normal.
    """
    oc = ray.origin - center
    b = float(dot(oc, ray.direction))
    c = float(dot(oc, oc)) - radius * radius
    disc = b * b - c
    if disc < 0.0:
        return []
    sq = float(np.sqrt(disc))
    ts = [-b - sq, -b + sq] if sq > 0.0 else [-b]
    hits = []
    for t in ts:
        if t < 0.0:
            continue
        p = ray.at(t)
        n = (p - center) / radius
        if dot(n, ray.direction) > 0.0:
            n = -n
        hits.append(SurfaceHit(t=t, point=p, normal=n))
    return hits


def intersect_sphere_batch(origins, dirs, center, radius):
    """First forward hit per ray: (t, point, outward_normal, hit_mask).

    Entry hits get the near root; rays starting inside get the far root.
    Misses are NaN with hit_mask False.
    """
    oc = origins - center
    b = dot(oc, dirs)
    c = dot(oc, oc) - radius * radius
    disc = b * b - c
    sq = np.sqrt(np.where(disc >= 0.0, disc, np.nan))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near >= 0.0, t_near, t_far)
    ok = (disc >= 0.0) & (t >= 0.0)
    t = np.where(ok, t, np.nan)
    p = origins + np.expand_dims(t, -1) * dirs
    n = (p - center) / radius
    return t, p, n, ok


def intersect_plane(ray: Ray, point: np.ndarray, normal: np.ndarray) -> SurfaceHit | None:
    """Forward intersection with an infinite plane; None if parallel or behind."""
    denom = float(dot(ray.direction, normal))
    if denom == 0.0:
        return None
    t = float(dot(point - ray.origin, normal)) / denom
    if t < 0.0:
        return None
    n = -normal if denom > 0.0 else normal
    return SurfaceHit(t=t, point=ray.at(t), normal=n)
