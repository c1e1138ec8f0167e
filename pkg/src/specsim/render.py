"""Deterministic Whitted-style grayscale renderer.

Camera rays refract through the spectacle lens (splitting into a reflected
environment branch weighted by the surface reflectance) and at the cornea,
so the dark pupil appears refraction-shifted exactly like the synthesized
features.  LED specular highlights are drawn along straight sightlines, the
same simplified geometry the glint solver uses, which keeps every emitted
glint aligned with a rendered intensity maximum.

The production path traces wavefronts of rays with numpy; a scalar
per-pixel tracer with the same semantics backs it in the test suite.
Pixel (ix, iy) is sampled at image coordinates (ix + 0.5, iy + 0.5); output
intensities are clamped to [0, 1] only at image write time.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .eye import Environment, EyePose, Scene, gaze_direction
from .lens import LensGeometry, lens_transit, surface_reflectance, _curved_face_hit, _planar_face_hit, _rim_hit_t
from .optics import (
    EPS_ADVANCE,
    Ray,
    dot,
    intersect_sphere,
    normalize,
    reflect,
    refract,
    refract_batch,
)

SCLERA_ALBEDO = 0.9
IRIS_ALBEDO = 0.35
AMBIENT = 0.08
DIFFUSE = 0.5
CORNEA_SPEC_WEIGHT = 1.6  # saturates the corneal glint core (dark-pupil IR look)
CORNEA_PHONG_EXP = 120.0
# A point LED mirrored in a smooth lens face images to a point, so lens-face
# glints are drawn as pixel-scale dots at the solved mirror positions.
LENS_GLINT_SIGMA_PX = 0.8


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) float64 in [0, 1], row-major

    def pixel(self, ix: int, iy: int) -> float:
        return float(self.pixels[iy, ix])


@dataclass
class RenderStats:
    preclamp_max: float = 0.0


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


def environment_radiance(direction: np.ndarray, env: Environment) -> float:
    """Procedural sky/floor field with bright rectangular patches."""
    return float(environment_radiance_batch(np.asarray(direction, dtype=float)[None, :], env)[0])


def environment_radiance_batch(dirs: np.ndarray, env: Environment) -> np.ndarray:
    sin_el = np.clip(dirs[..., 1], -1.0, 1.0)
    if env.horizon_softness > 0:
        t = np.clip((sin_el + env.horizon_softness) / (2.0 * env.horizon_softness), 0.0, 1.0)
    else:
        t = (sin_el >= 0).astype(float)
    out = env.floor + (env.sky - env.floor) * t
    if env.patches:
        az = np.degrees(np.arctan2(dirs[..., 0], dirs[..., 2]))
        el = np.degrees(np.arcsin(sin_el))
        for patch in env.patches:
            daz = (az - patch.azimuth_deg + 180.0) % 360.0 - 180.0
            inside = (np.abs(daz) <= patch.half_az_deg) & (np.abs(el - patch.elevation_deg) <= patch.half_el_deg)
            out = np.where(inside, patch.intensity, out)
    return out


# ---------------------------------------------------------------------------
# batched surface intersections (masked; t = +inf on miss)
# ---------------------------------------------------------------------------

_INF = np.inf


def _sphere_roots(o, d, center, radius):
    oc = o - center
    b = np.sum(oc * d, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radius * radius
    disc = b * b - c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    return np.where(ok, -b - sq, _INF), np.where(ok, -b + sq, _INF)


def _cap_face_t(o, d, lens: LensGeometry):
    """Min forward root on the spherical lens face within cap and aperture."""
    t1, t2 = _sphere_roots(o, d, lens.sphere_center, lens.sphere_radius)
    best = np.full(t1.shape, _INF)
    for t in (t1, t2):
        tc = np.where(np.isfinite(t), t, 0.0)
        p = o + tc[..., None] * d
        rel = p - lens.axis_point
        axial = np.sum((p - lens.sphere_center) * lens.axis_dir, axis=-1)
        trans2 = np.sum(rel * rel, axis=-1) - np.sum(rel * lens.axis_dir, axis=-1) ** 2
        ok = np.isfinite(t) & (t > 0.0) & (axial > 0.0) & (trans2 <= lens.aperture_radius**2)
        best = np.where(ok & (t < best), t, best)
    return best


def _plane_face_t(o, d, lens: LensGeometry):
    denom = np.sum(d * lens.planar_normal, axis=-1)
    num = np.sum((lens.planar_point - o) * lens.planar_normal, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom != 0.0, num / denom, _INF)
    tc = np.where(np.isfinite(t), t, 0.0)
    p = o + tc[..., None] * d
    rel = p - lens.axis_point
    trans2 = np.sum(rel * rel, axis=-1) - np.sum(rel * lens.axis_dir, axis=-1) ** 2
    ok = np.isfinite(t) & (t > 0.0) & (trans2 <= lens.aperture_radius**2)
    return np.where(ok, t, _INF)


def _rim_t(o, d, lens: LensGeometry):
    rel = o - lens.axis_point
    d_ax = np.sum(d * lens.axis_dir, axis=-1)
    o_ax = np.sum(rel * lens.axis_dir, axis=-1)
    d_t = d - d_ax[..., None] * lens.axis_dir
    o_t = rel - o_ax[..., None] * lens.axis_dir
    a = np.sum(d_t * d_t, axis=-1)
    b = np.sum(o_t * d_t, axis=-1)
    c = np.sum(o_t * o_t, axis=-1) - lens.aperture_radius**2
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - a * c
        sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
        t1 = np.where((a > 0) & (disc >= 0), (-b - sq) / a, _INF)
        t2 = np.where((a > 0) & (disc >= 0), (-b + sq) / a, _INF)
    best = np.full(t1.shape, _INF)
    for t in (t1, t2):
        z = o_ax + np.where(np.isfinite(t), t, 0.0) * d_ax
        ok = np.isfinite(t) & (t > 0.0) & (z >= lens.rim_lo - 1e-9) & (z <= lens.rim_hi + 1e-9)
        best = np.where(ok & (t < best), t, best)
    return best


def _eye_ts(o, d, scene: Scene, gaze):
    eye = scene.eye
    cc = eye.cornea_center(gaze)
    t1, t2 = _sphere_roots(o, d, cc, eye.cornea_radius)
    t_first = np.where(t1 > 0.0, t1, t2)
    with np.errstate(invalid="ignore"):
        p = o + np.where(np.isfinite(t_first), t_first, 0.0)[..., None] * d
        on_cap = np.sum((p - cc) * gaze, axis=-1) / eye.cornea_radius >= eye.cap_cos_min - 1e-9
    cornea_t = np.where(np.isfinite(t_first) & (t_first > 0.0) & on_cap, t_first, _INF)

    s1, s2 = _sphere_roots(o, d, eye.center, eye.eyeball_radius)
    s_first = np.where(s1 > 0.0, s1, s2)
    sclera_t = np.where(np.isfinite(s_first) & (s_first > 0.0), s_first, _INF)
    return cornea_t, sclera_t


def _lambert_batch(albedo, points, normals, scene: Scene):
    val = np.full(points.shape[:-1], AMBIENT * albedo)
    for led in scene.leds:
        l = led - points
        l = l / np.linalg.norm(l, axis=-1, keepdims=True)
        val += DIFFUSE * albedo * np.clip(np.sum(normals * l, axis=-1), 0.0, None)
    return val


def _interior_batch(origins, dirs, scene: Scene, gaze):
    """Shade refracted in-eye rays at the pupil plane: dark pupil or iris."""
    eye = scene.eye
    pc = eye.pupil_center(gaze)
    denom = np.sum(dirs * gaze, axis=-1)
    num = np.sum((pc - origins) * gaze, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    hit_ok = (denom != 0.0) & (t > 0.0)
    p = origins + t[..., None] * dirs
    r2 = np.sum((p - pc) ** 2, axis=-1)
    gz = np.broadcast_to(gaze, p.shape)
    iris = _lambert_batch(IRIS_ALBEDO, p, gz, scene)
    out = np.where(r2 <= eye.pupil_radius**2, 0.0, iris)
    return np.where(hit_ok, out, AMBIENT * IRIS_ALBEDO)


def _reflect_batch(d, n):
    return d - 2.0 * np.sum(d * n, axis=-1, keepdims=True) * n


def _render_pass(scene: Scene, origins, dirs, gaze, max_depth: int):
    """Trace one wavefront per depth level; returns radiance per input ray."""
    n_rays = dirs.shape[0]
    radiance = np.zeros(n_rays)
    wave = [(origins, dirs, np.ones(n_rays), np.arange(n_rays), max_depth)]
    eye = scene.eye
    lens = scene.lens
    while wave:
        o, d, w, idx, depth = wave.pop()
        cornea_t, sclera_t = _eye_ts(o, d, scene, gaze)
        ts = [cornea_t, sclera_t]
        kinds = ["cornea", "sclera"]
        if lens is not None:
            ts += [_cap_face_t(o, d, lens), _plane_face_t(o, d, lens), _rim_t(o, d, lens)]
            kinds += ["curved", "planar", "rim"]
        stack = np.stack(ts, axis=0)
        best = np.argmin(stack, axis=0)
        t_best = np.take_along_axis(stack, best[None], axis=0)[0]
        miss = ~np.isfinite(t_best)
        if np.any(miss):
            np.add.at(radiance, idx[miss], w[miss] * environment_radiance_batch(d[miss], scene.environment))

        for k_i, kind in enumerate(kinds):
            sel = (best == k_i) & ~miss
            if not np.any(sel):
                continue
            so, sd, sw, sidx = o[sel], d[sel], w[sel], idx[sel]
            t = t_best[sel]
            p = so + t[:, None] * sd
            if kind == "rim":
                continue  # absorbed
            if kind == "sclera":
                n = (p - eye.center) / eye.eyeball_radius
                n = np.where(np.sum(n * sd, axis=-1, keepdims=True) > 0, -n, n)
                np.add.at(radiance, sidx, sw * _lambert_batch(SCLERA_ALBEDO, p, n, scene))
                continue
            if kind == "cornea":
                n = (p - eye.cornea_center(gaze)) / eye.cornea_radius
                n = np.where(np.sum(n * sd, axis=-1, keepdims=True) > 0, -n, n)
                inner, ok = refract_batch(sd, n, 1.0, eye.cornea_index)
                val = np.zeros(len(t))
                if np.any(ok):
                    io = p[ok] + EPS_ADVANCE * inner[ok]
                    val[ok] = _interior_batch(io, inner[ok], scene, gaze)
                np.add.at(radiance, sidx, sw * val)
                continue
            # lens faces: split into reflected and transmitted branches
            if kind == "curved":
                n = (p - lens.sphere_center) / lens.sphere_radius
            else:
                n = np.broadcast_to(lens.planar_normal, p.shape).copy()
            n = np.where(np.sum(n * sd, axis=-1, keepdims=True) > 0, -n, n)
            cos_i = -np.sum(sd * n, axis=-1)
            if lens.coated:
                rho = np.full(len(t), lens.rho_per_surface)
            else:
                rho = np.array([surface_reflectance(lens, ci) for ci in np.clip(cos_i, 1e-9, 1.0)])
            refl_d = _reflect_batch(sd, n)
            refl_o = p + EPS_ADVANCE * refl_d
            if depth > 0:
                wave.append((refl_o, refl_d, sw * rho, sidx, depth - 1))
            else:
                np.add.at(radiance, sidx, sw * rho * environment_radiance_batch(refl_d, scene.environment))
            # transmitted leg: refract in, cross the glass, refract out
            t_in, ok_in = refract_batch(sd, n, 1.0, lens.n_trace)
            go = p + EPS_ADVANCE * np.where(ok_in[:, None], t_in, sd)
            exit_ts = [_cap_face_t(go, t_in, lens), _plane_face_t(go, t_in, lens)]
            rim_inside = _rim_t(go, t_in, lens)
            t_exit = np.minimum(exit_ts[0], exit_ts[1])
            blocked = ~ok_in | ~np.isfinite(t_exit) | (rim_inside < t_exit)
            t_exit_c = np.where(np.isfinite(t_exit), t_exit, 0.0)
            pe = go + t_exit_c[:, None] * np.where(ok_in[:, None], t_in, sd)
            use_curved = exit_ts[0] <= exit_ts[1]
            n_exit = np.where(
                use_curved[:, None],
                (pe - lens.sphere_center) / lens.sphere_radius,
                np.broadcast_to(lens.planar_normal, pe.shape),
            )
            n_exit = np.where(np.sum(n_exit * t_in, axis=-1, keepdims=True) > 0, -n_exit, n_exit)
            t_out, ok_out = refract_batch(np.where(ok_in[:, None], t_in, sd), n_exit, lens.n_trace, 1.0)
            alive = ~blocked & ok_out
            if np.any(alive):
                oo = pe[alive] + EPS_ADVANCE * t_out[alive]
                if depth > 0:
                    wave.append((oo, t_out[alive], sw[alive] * (1.0 - rho[alive]), sidx[alive], depth - 1))
                else:
                    np.add.at(
                        radiance,
                        sidx[alive],
                        sw[alive] * (1.0 - rho[alive]) * environment_radiance_batch(t_out[alive], scene.environment),
                    )
    return radiance


def _overlay_pass(scene: Scene, origins, dirs, gaze):
    """LED highlights along unrefracted sightlines (matches compute_glints)."""
    eye = scene.eye
    total = np.zeros(dirs.shape[0])
    cc = eye.cornea_center(gaze)
    t1, t2 = _sphere_roots(origins, dirs, cc, eye.cornea_radius)
    t = np.where(t1 > 0.0, t1, t2)
    with np.errstate(invalid="ignore"):
        p = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * dirs
        on = np.isfinite(t) & (t > 0.0) & (np.sum((p - cc) * gaze, axis=-1) / eye.cornea_radius >= eye.cap_cos_min - 1e-9)
    if np.any(on):
        n = (p[on] - cc) / eye.cornea_radius
        r = _reflect_batch(dirs[on], n)
        acc = np.zeros(int(np.sum(on)))
        for led in scene.leds:
            l = led - p[on]
            l = l / np.linalg.norm(l, axis=-1, keepdims=True)
            acc += CORNEA_SPEC_WEIGHT * np.clip(np.sum(r * l, axis=-1), 0.0, None) ** CORNEA_PHONG_EXP
        total[on] += acc
    return total


def _lens_glint_splats(scene: Scene, pose: EyePose):
    """(u, v, amplitude) dots for the solved lens-face glints."""
    from .projection import compute_glints

    if scene.lens is None or not scene.leds:
        return []
    out = []
    lens = scene.lens
    for g in compute_glints(scene, pose):
        if g.surface == "cornea":
            continue  # drawn by the corneal Phong lobe
        led = scene.leds[g.led]
        d_i = normalize(g.point - led)
        on_curved_face = (g.surface == "lens_back") == lens.curved_towards_eye
        if on_curved_face:
            n = (g.point - lens.sphere_center) / lens.sphere_radius
        else:
            n = lens.planar_normal
        cos_i = abs(float(dot(d_i, n)))
        rho = surface_reflectance(lens, min(max(cos_i, 1e-9), 1.0))
        out.append((g.image_uv[0], g.image_uv[1], rho))
    return out


def render_with_stats(
    scene: Scene,
    pose: EyePose | None = None,
    max_depth: int = 4,
    samples_per_pixel: int = 1,
) -> tuple[Image, RenderStats]:
    """Render the scene; also report the maximum pre-clamp pixel value."""
    if pose is None:
        pose = EyePose(0.0, 0.0)
    gaze = gaze_direction(pose)
    cam = scene.camera
    s = max(int(samples_per_pixel), 1)
    acc = np.zeros(cam.height * cam.width)
    ix = np.tile(np.arange(cam.width, dtype=float), cam.height)
    iy = np.repeat(np.arange(cam.height, dtype=float), cam.width)
    splats = _lens_glint_splats(scene, pose)
    for oy in ((k + 0.5) / s for k in range(s)):
        for ox in ((k + 0.5) / s for k in range(s)):
            u = ix + ox
            v = iy + oy
            d = (
                ((u - cam.cx) / cam.focal_px)[:, None] * cam.right
                + ((v - cam.cy) / cam.focal_px)[:, None] * cam.down
                + cam.forward
            )
            d = d / np.linalg.norm(d, axis=-1, keepdims=True)
            o = np.broadcast_to(cam.position, d.shape)
            acc += _render_pass(scene, o, d, gaze, max_depth) + _overlay_pass(scene, o, d, gaze)
            for gu, gv, amp in splats:
                acc += amp * np.exp(-((u - gu) ** 2 + (v - gv) ** 2) / (2.0 * LENS_GLINT_SIGMA_PX**2))
    acc /= s * s
    stats = RenderStats(preclamp_max=float(np.max(acc)))
    pixels = np.clip(acc, 0.0, 1.0).reshape(cam.height, cam.width)
    return Image(width=cam.width, height=cam.height, pixels=pixels), stats


def render(
    scene: Scene,
    pose: EyePose | None = None,
    max_depth: int = 4,
    samples_per_pixel: int = 1,
) -> Image:
    image, _ = render_with_stats(scene, pose, max_depth, samples_per_pixel)
    return image


# ---------------------------------------------------------------------------
# scalar reference tracer (same semantics; used to cross-check the wavefront
# path in the test suite)
# ---------------------------------------------------------------------------


def _lambert(albedo: float, point, normal, scene: Scene) -> float:
    val = AMBIENT * albedo
    for led in scene.leds:
        l = normalize(led - point)
        val += DIFFUSE * albedo * max(0.0, float(dot(normal, l)))
    return val


def _surface_candidates(scene: Scene, ray: Ray, gaze):
    out = []
    eye = scene.eye
    hits = intersect_sphere(ray, eye.cornea_center(gaze), eye.cornea_radius)
    if hits and eye.on_cap(hits[0].point, gaze):
        out.append((hits[0].t, "cornea", hits[0]))
    hits = intersect_sphere(ray, eye.center, eye.eyeball_radius)
    if hits:
        out.append((hits[0].t, "sclera", hits[0]))
    lens = scene.lens
    if lens is not None:
        for hit in (_curved_face_hit(lens, ray, 0.0), _planar_face_hit(lens, ray, 0.0)):
            if hit is not None:
                out.append((hit.t, "lens", hit))
        t = _rim_hit_t(lens, ray, 0.0)
        if t is not None:
            out.append((t, "rim", None))
    return out


def _interior_shade(scene: Scene, ray: Ray, gaze) -> float:
    eye = scene.eye
    pc = eye.pupil_center(gaze)
    denom = float(dot(ray.direction, gaze))
    if denom == 0.0:
        return AMBIENT * IRIS_ALBEDO
    t = float(dot(pc - ray.origin, gaze)) / denom
    if t <= 0.0:
        return AMBIENT * IRIS_ALBEDO
    p = ray.at(t)
    if float(np.linalg.norm(p - pc)) <= eye.pupil_radius:
        return 0.0
    return _lambert(IRIS_ALBEDO, p, gaze, scene)


def _radiance_scalar(scene: Scene, ray: Ray, gaze, depth: int) -> float:
    candidates = _surface_candidates(scene, ray, gaze)
    if not candidates:
        return environment_radiance(ray.direction, scene.environment)
    t, kind, hit = min(candidates, key=lambda c: c[0])
    if kind == "rim":
        return 0.0
    if kind == "sclera":
        return _lambert(SCLERA_ALBEDO, hit.point, hit.normal, scene)
    if kind == "cornea":
        inner = refract(ray.direction, hit.normal, 1.0, scene.eye.cornea_index)
        if inner is None:
            return 0.0
        return _interior_shade(scene, Ray(hit.point, inner).advanced(), gaze)
    lens = scene.lens
    cos_i = -float(dot(ray.direction, hit.normal))
    rho = surface_reflectance(lens, cos_i)
    refl_dir = reflect(ray.direction, hit.normal)
    if depth > 0:
        reflected = _radiance_scalar(scene, Ray(hit.point, refl_dir).advanced(), gaze, depth - 1)
    else:
        reflected = environment_radiance(refl_dir, scene.environment)
    transit = lens_transit(ray, lens)
    if transit.kind == "through":
        if depth > 0:
            transmitted = _radiance_scalar(scene, transit.ray, gaze, depth - 1)
        else:
            transmitted = environment_radiance(transit.ray.direction, scene.environment)
    else:
        transmitted = 0.0
    return (1.0 - rho) * transmitted + rho * reflected


def _overlay_scalar(scene: Scene, ray: Ray, gaze) -> float:
    total = 0.0
    eye = scene.eye
    hits = intersect_sphere(ray, eye.cornea_center(gaze), eye.cornea_radius)
    if hits and eye.on_cap(hits[0].point, gaze):
        hit = hits[0]
        r = reflect(ray.direction, hit.normal)
        for led in scene.leds:
            l = normalize(led - hit.point)
            total += CORNEA_SPEC_WEIGHT * max(0.0, float(dot(r, l))) ** CORNEA_PHONG_EXP
    return total


def render_pixel_reference(scene: Scene, pose: EyePose, ix: int, iy: int, max_depth: int = 4) -> float:
    """Scalar-path radiance of one pixel, pre-clamp; for cross-validation."""
    gaze = gaze_direction(pose)
    ray = scene.camera.pixel_ray(ix + 0.5, iy + 0.5)
    val = _radiance_scalar(scene, ray, gaze, max_depth) + _overlay_scalar(scene, ray, gaze)
    u, v = ix + 0.5, iy + 0.5
    for gu, gv, amp in _lens_glint_splats(scene, pose):
        val += amp * math.exp(-((u - gu) ** 2 + (v - gv) ** 2) / (2.0 * LENS_GLINT_SIGMA_PX**2))
    return val


# ---------------------------------------------------------------------------
# image output
# ---------------------------------------------------------------------------


def to_bytes(image: Image) -> bytes:
    return np.rint(255.0 * np.clip(image.pixels, 0.0, 1.0)).astype(np.uint8).tobytes()


def write_pgm(image: Image, path) -> None:
    """Binary PGM (P5, maxval 255); the bit-exact reference output format."""
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(to_bytes(image))


def write_png(image: Image, path) -> None:
    """Minimal 8-bit grayscale PNG writer (no external imaging dependency)."""
    raw = np.rint(255.0 * np.clip(image.pixels, 0.0, 1.0)).astype(np.uint8)
    scanlines = b"".join(b"\x00" + raw[y].tobytes() for y in range(image.height))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        data = tag + payload
        return struct.pack(">I", len(payload)) + data + struct.pack(">I", zlib.crc32(data) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", image.width, image.height, 8, 0, 0, 0, 0)
    png = b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(scanlines, 9)) + chunk(b"IEND", b"")
    with open(path, "wb") as fh:
        fh.write(png)
