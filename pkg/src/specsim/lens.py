"""Plano-convex / plano-concave spectacle lens construction and ray transit.

A lens is cut from a box-sphere intersection: one planar face, one spherical
face, bounded transversally by a cylindrical rim of the prescribed diameter.
Orientation follows standard dispensing practice for simple lenses:

* positive power  -> converging plano-convex lens, planar face towards the eye
* negative power  -> diverging plano-concave lens, curved face towards the eye

Curvature radii are computed at the 589 nm design wavelength; rays are traced
with the 900 nm near-infrared index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optics import (
    EPS_ADVANCE,
    MaterialIndex,
    N_BK7,
    Ray,
    SurfaceHit,
    dot,
    fresnel_reflectance,
    intersect_plane,
    intersect_sphere,
    normalize,
    refract,
    sellmeier_index,
    vec,
)

DESIGN_WAVELENGTH_UM = 0.589
TRACE_WAVELENGTH_UM = 0.900

# Default reflectance of one coated surface; two surfaces together reflect
# about 5% of the irradiance.
COATED_RHO_PER_SURFACE = 0.025


class LensConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class LensPrescription:
    power: float  # diopters; sign selects convex/concave, 0 means "no lens"
    material: MaterialIndex = N_BK7
    coated: bool = True
    diameter: float = 50.0
    # center thickness for concave lenses, edge thickness for convex ones
    min_thickness: float = 2.0
    vertex_distance: float = 12.0  # eye-side face to cornea apex, mm

    def validate(self) -> list[str]:
        problems = []
        if self.diameter <= 0:
            problems.append("lens diameter must be positive")
        if self.min_thickness <= 0:
            problems.append("lens min_thickness must be positive")
        if self.vertex_distance <= 0:
            problems.append("lens vertex_distance must be positive")
        if abs(self.power) > 20:
            problems.append("lens power magnitude must be at most 20 dpt")
        return problems


@dataclass(frozen=True)
class LensGeometry:
    """Oriented lens surfaces in scene coordinates.

    axis_dir points from the eye towards the world.  The spherical face cap
    always lies on the +axis side of its center, so cap membership is a
    single dot-product test.
    """

    power: float
    planar_point: np.ndarray
    planar_normal: np.ndarray  # outward (away from the glass)
    sphere_center: np.ndarray
    sphere_radius: float
    curved_towards_eye: bool
    axis_point: np.ndarray
    axis_dir: np.ndarray
    diameter: float
    n_design: float
    n_trace: float
    coated: bool
    rim_lo: float = 0.0  # axial extent of the rim cylinder, relative to axis_point
    rim_hi: float = 0.0
    rho_per_surface: float = COATED_RHO_PER_SURFACE

    @property
    def aperture_radius(self) -> float:
        return 0.5 * self.diameter

    def transverse_radius(self, p: np.ndarray) -> float:
        rel = p - self.axis_point
        axial = dot(rel, self.axis_dir)
        return float(np.sqrt(max(float(dot(rel, rel)) - float(axial) ** 2, 0.0)))

    def axial_coord(self, p: np.ndarray) -> float:
        return float(dot(p - self.axis_point, self.axis_dir))


def curvature_radius(power: float, n_design: float) -> float:
    """Radius (mm) of the single curved surface of a plano lens of the given power.

    Thin-lens form of the lensmaker equation with one flat face:
    R = (n - 1) / |P|, converted from meters to millimeters.
    """
    if power == 0:
        raise ValueError("curvature radius is undefined for zero power")
    if not abs(power) <= 20:
        raise ValueError("power magnitude must be at most 20 dpt")
    if not n_design > 1:
        raise ValueError("design index must exceed 1")
    return 1000.0 * (n_design - 1.0) / abs(power)


def _sag(radius: float, half_aperture: float) -> float:
    return radius - float(np.sqrt(radius * radius - half_aperture * half_aperture))


def build_lens(
    prescription: LensPrescription,
    optical_axis: np.ndarray,
    cornea_apex: np.ndarray,
) -> LensGeometry:
    """Position the lens so its eye-side face vertex sits at the prescribed
    vertex distance from the cornea apex along the optical axis."""
    p = prescription
    problems = p.validate()
    if problems:
        raise LensConstructionError("; ".join(problems))
    if p.power == 0:
        raise LensConstructionError("power 0 denotes 'no lens'; nothing to build")

    axis = normalize(np.asarray(optical_axis, dtype=float))
    n_design = sellmeier_index(p.material, DESIGN_WAVELENGTH_UM)
    n_trace = sellmeier_index(p.material, TRACE_WAVELENGTH_UM)
    radius = curvature_radius(p.power, n_design)
    half_ap = 0.5 * p.diameter
    if radius < half_ap:
        raise LensConstructionError(
            f"curvature radius {radius:.2f} mm smaller than half-aperture {half_ap:.2f} mm"
        )
    sag = _sag(radius, half_ap)
    eye_vertex = np.asarray(cornea_apex, dtype=float) + p.vertex_distance * axis

    if p.power < 0:
        # Concave face towards the eye; its vertex is the eye-side vertex.
        # Glass spans axial [-sag, min_thickness] relative to the vertex.
        sphere_center = eye_vertex - radius * axis
        planar_point = eye_vertex + p.min_thickness * axis
        planar_normal = axis
        curved_towards_eye = True
        rim_lo, rim_hi = -sag, p.min_thickness
    else:
        # Planar face towards the eye; convex face bulges towards the world.
        # The rim cylinder spans [0, min_thickness] (edge thickness).
        planar_point = eye_vertex
        planar_normal = -axis
        apex = eye_vertex + (p.min_thickness + sag) * axis
        sphere_center = apex - radius * axis
        curved_towards_eye = False
        rim_lo, rim_hi = 0.0, p.min_thickness

    return LensGeometry(
        power=p.power,
        planar_point=planar_point,
        planar_normal=planar_normal,
        sphere_center=sphere_center,
        sphere_radius=radius,
        curved_towards_eye=curved_towards_eye,
        axis_point=eye_vertex,
        axis_dir=axis,
        diameter=p.diameter,
        n_design=n_design,
        n_trace=n_trace,
        coated=p.coated,
        rim_lo=rim_lo,
        rim_hi=rim_hi,
    )


def _curved_face_hit(lens: LensGeometry, ray: Ray, tmin: float) -> SurfaceHit | None:
    for hit in intersect_sphere(ray, lens.sphere_center, lens.sphere_radius):
        if hit.t <= tmin:
            continue
        # valid cap: world side of the sphere center, inside the aperture
        if dot(hit.point - lens.sphere_center, lens.axis_dir) <= 0:
            continue
        if lens.transverse_radius(hit.point) > lens.aperture_radius:
            continue
        return hit
    return None


def _planar_face_hit(lens: LensGeometry, ray: Ray, tmin: float) -> SurfaceHit | None:
    hit = intersect_plane(ray, lens.planar_point, lens.planar_normal)
    if hit is None or hit.t <= tmin:
        return None
    if lens.transverse_radius(hit.point) > lens.aperture_radius:
        return None
    return hit


def _rim_hit_t(lens: LensGeometry, ray: Ray, tmin: float) -> float | None:
    """Smallest forward t at which the ray crosses the rim cylinder between
    the two faces; None if it does not."""
    rel = ray.origin - lens.axis_point
    d_ax = float(dot(ray.direction, lens.axis_dir))
    o_ax = float(dot(rel, lens.axis_dir))
    d_t = ray.direction - d_ax * lens.axis_dir
    o_t = rel - o_ax * lens.axis_dir
    a = float(dot(d_t, d_t))
    if a == 0.0:
        return None
    b = float(dot(o_t, d_t))
    c = float(dot(o_t, o_t)) - lens.aperture_radius**2
    disc = b * b - a * c
    if disc < 0.0:
        return None
    sq = float(np.sqrt(disc))
    for t in ((-b - sq) / a, (-b + sq) / a):
        if t <= tmin:
            continue
        p = ray.at(t)
        if _between_faces(lens, p):
            return t
    return None


def _between_faces(lens: LensGeometry, p: np.ndarray) -> bool:
    """True when p lies axially within the rim cylinder extent."""
    z = lens.axial_coord(p)
    return lens.rim_lo - 1e-9 <= z <= lens.rim_hi + 1e-9


def surface_reflectance(lens: LensGeometry, cos_i: float) -> float:
    """Reflectance of one lens surface seen from air at incidence cosine cos_i."""
    if lens.coated:
        return lens.rho_per_surface
    return fresnel_reflectance(cos_i, 1.0, lens.n_trace)


class LensTransit:
    """Outcome of pushing a ray at the lens: miss / through / blocked."""

    __slots__ = ("kind", "ray", "entry", "exit_hit")

    def __init__(self, kind, ray=None, entry=None, exit_hit=None):
        self.kind = kind  # "miss" | "through" | "blocked"
        self.ray = ray
        self.entry = entry
        self.exit_hit = exit_hit


def lens_transit(ray: Ray, lens: LensGeometry) -> LensTransit:
    """Trace a ray arriving from air through the lens.

    "miss" leaves the ray unobstructed; "blocked" covers rim absorption and
    total internal reflection.
    """
    curved = _curved_face_hit(lens, ray, 0.0)
    planar = _planar_face_hit(lens, ray, 0.0)
    rim_t = _rim_hit_t(lens, ray, 0.0)

    candidates = [h for h in (curved, planar) if h is not None]
    entry = min(candidates, key=lambda h: h.t) if candidates else None
    if rim_t is not None and (entry is None or rim_t < entry.t):
        return LensTransit("blocked")
    if entry is None:
        return LensTransit("miss")

    inside_dir = refract(ray.direction, entry.normal, 1.0, lens.n_trace)
    if inside_dir is None:  # cannot happen entering the denser medium
        return LensTransit("blocked")
    inner = Ray(entry.point, inside_dir).advanced()

    curved2 = _curved_face_hit(lens, inner, 0.0)
    planar2 = _planar_face_hit(lens, inner, 0.0)
    rim2 = _rim_hit_t(lens, inner, 0.0)
    exits = [h for h in (curved2, planar2) if h is not None]
    exit_hit = min(exits, key=lambda h: h.t) if exits else None
    if exit_hit is None or (rim2 is not None and rim2 < exit_hit.t):
        return LensTransit("blocked")

    out_dir = refract(inner.direction, exit_hit.normal, lens.n_trace, 1.0)
    if out_dir is None:
        return LensTransit("blocked")
    out = Ray(exit_hit.point, out_dir).advanced()
    return LensTransit("through", ray=out, entry=entry, exit_hit=exit_hit)


def trace_through_lens(ray: Ray, lens: LensGeometry) -> Ray | None:
    """Refract a ray through both lens surfaces.

    Returns None when the ray misses the aperture (caller treats it as
    unobstructed) or does not emerge (rim absorption / TIR).
    """
    transit = lens_transit(ray, lens)
    return transit.ray if transit.kind == "through" else None
