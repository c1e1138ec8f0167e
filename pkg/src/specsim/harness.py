"""Experiment orchestration: calibration/test grids, feature synthesis for
both gaze mappers across diopter conditions, angular errors, and the CSV /
text outputs.

All numeric output uses 12 significant digits, '.' decimals and LF line
endings so repeated runs are byte-identical.  Conditions may be evaluated by
a worker pool (capped by the SPECSIM_THREADS environment variable); results
are assembled in condition order, so outputs never depend on scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eye import EyePose, Scene, SceneConfig, assemble_scene, gaze_direction
from .gaze_geometric import (
    CALIBRATION_POSES,
    calibrate_axes,
    disambiguate,
    predict_geometric,
    unproject_ellipse,
)
from .gaze_poly import BASIS_NAMES, fit_poly, predict_poly
from .projection import Ellipse, Glint, compute_glints, fit_ellipse, project_pupil

METHODS = ("polynomial", "geometric")
GLINT_SURFACES = ("cornea", "lens_front", "lens_back")


def calibration_grid() -> list[EyePose]:
    """The nine polynomial calibration poses: {-20, 0, 20}^2, row-major."""
    return [EyePose(h, v) for h in (-20.0, 0.0, 20.0) for v in (-20.0, 0.0, 20.0)]


def geometric_calibration_grid() -> list[EyePose]:
    """Primary plus the four 20-degree secondary poses."""
    return list(CALIBRATION_POSES)


def test_grid() -> list[EyePose]:
    """Sixteen test poses strictly inside the calibrated area, row-major."""
    return [EyePose(h, v) for h in (-15.0, -5.0, 5.0, 15.0) for v in (-15.0, -5.0, 5.0, 15.0)]


def angular_error(true_pose: EyePose, predicted: tuple[float, float]) -> float:
    """Angle in degrees between the true and the predicted gaze directions."""
    g1 = gaze_direction(true_pose)
    g2 = gaze_direction(EyePose(*predicted))
    return math.degrees(math.acos(min(max(float(np.dot(g1, g2)), -1.0), 1.0)))


@dataclass(frozen=True)
class ExperimentConfig:
    diopters: tuple[float, ...] = (0.0, -1.0, -3.0, -5.0)
    methods: tuple[str, ...] = METHODS
    seed: int = 0  # reserved; the pipeline is deterministic
    scene: SceneConfig = field(default_factory=SceneConfig)

    def validate(self) -> list[str]:
        problems = []
        if not self.diopters:
            problems.append("experiment needs at least one diopter condition")
        if not self.methods:
            problems.append("experiment needs at least one method")
        for m in self.methods:
            if m not in METHODS:
                problems.append(f"unknown method {m!r}")
        return problems


@dataclass(frozen=True)
class ErrorRecord:
    diopter: float
    method: str
    theta_h: float
    theta_v: float
    pred_theta_h: float
    pred_theta_v: float
    angular_error_deg: float


@dataclass(frozen=True)
class SummaryRow:
    diopter: float
    method: str
    n: int
    mean_deg: float
    std_deg: float


@dataclass(frozen=True)
class PoseFeatures:
    diopter: float
    pose: EyePose
    ellipse: Ellipse
    glints: tuple[Glint, ...] = ()

    @property
    def pupil_center(self) -> tuple[float, float]:
        return self.ellipse.center


@dataclass
class ExperimentResult:
    records: list[ErrorRecord]
    summary: list[SummaryRow]
    calibrations: list[tuple[float, str, str, float]]  # diopter, method, parameter, value


def worker_count() -> int:
    """Worker cap from SPECSIM_THREADS (0 or unset = auto)."""
    raw = os.environ.get("SPECSIM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SPECSIM_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError("SPECSIM_THREADS must be non-negative")
    return n if n > 0 else (os.cpu_count() or 1)


def _ordered_map(fn, items):
    """Map preserving input order, optionally on a thread pool."""
    items = list(items)
    workers = min(worker_count(), len(items)) if items else 1
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def pose_features(scene: Scene, pose: EyePose, diopter: float, k: int = 10, with_glints: bool = False) -> PoseFeatures:
    ellipse = fit_ellipse(project_pupil(scene, pose, k))
    glints = tuple(compute_glints(scene, pose)) if with_glints else ()
    return PoseFeatures(diopter=diopter, pose=pose, ellipse=ellipse, glints=glints)


def _pose_key(pose: EyePose) -> tuple[float, float]:
    return (pose.theta_h, pose.theta_v)


def run_condition(cfg: ExperimentConfig, diopter: float):
    """Evaluate one diopter condition for every requested method."""
    scene = assemble_scene(cfg.scene.with_power(diopter))
    poses = []
    seen = set()
    for pose in calibration_grid() + test_grid():
        if _pose_key(pose) not in seen:
            seen.add(_pose_key(pose))
            poses.append(pose)
    try:
        features = {_pose_key(p): pose_features(scene, p, diopter) for p in poses}
    except Exception as exc:
        raise RuntimeError(f"feature synthesis failed at {diopter} dpt: {exc}") from exc

    records: list[ErrorRecord] = []
    calibrations: list[tuple[float, str, str, float]] = []

    if "polynomial" in cfg.methods:
        samples = [
            (features[_pose_key(p)].pupil_center, (p.theta_h, p.theta_v)) for p in calibration_grid()
        ]
        pmap = fit_poly(samples)
        raw_h, raw_v = pmap.raw_coefficients()
        for name, ch, cv in zip(BASIS_NAMES, raw_h, raw_v):
            calibrations.append((diopter, "polynomial", f"coeff_h_{name}", float(ch)))
            calibrations.append((diopter, "polynomial", f"coeff_v_{name}", float(cv)))
        for name, val in zip(("u0", "v0", "su", "sv"), pmap.normalization):
            calibrations.append((diopter, "polynomial", f"norm_{name}", float(val)))
        for pose in test_grid():
            pred = predict_poly(pmap, features[_pose_key(pose)].pupil_center)
            records.append(
                ErrorRecord(
                    diopter=diopter,
                    method="polynomial",
                    theta_h=pose.theta_h,
                    theta_v=pose.theta_v,
                    pred_theta_h=pred[0],
                    pred_theta_v=pred[1],
                    angular_error_deg=angular_error(pose, pred),
                )
            )

    if "geometric" in cfg.methods:
        est = scene.camera.to_camera(scene.eye.center)

        def observe(pose: EyePose):
            cands = unproject_ellipse(
                features[_pose_key(pose)].ellipse, scene.camera, scene.eye.pupil_radius
            )
            return disambiguate(cands, est)

        axis_cal = calibrate_axes([(p, observe(p)) for p in geometric_calibration_grid()])
        for axis_name, vec3 in (
            ("origin_normal", axis_cal.origin_normal),
            ("h_axis", axis_cal.h_axis),
            ("v_axis", axis_cal.v_axis),
        ):
            for comp, val in zip("xyz", vec3):
                calibrations.append((diopter, "geometric", f"{axis_name}_{comp}", float(val)))
        for name, val in (
            ("slope_h_pos", axis_cal.slope_h_pos),
            ("slope_h_neg", axis_cal.slope_h_neg),
            ("slope_v_pos", axis_cal.slope_v_pos),
            ("slope_v_neg", axis_cal.slope_v_neg),
        ):
            calibrations.append((diopter, "geometric", name, float(val)))
        for pose in test_grid():
            pred = predict_geometric(observe(pose), axis_cal)
            records.append(
                ErrorRecord(
                    diopter=diopter,
                    method="geometric",
                    theta_h=pose.theta_h,
                    theta_v=pose.theta_v,
                    pred_theta_h=pred[0],
                    pred_theta_v=pred[1],
                    angular_error_deg=angular_error(pose, pred),
                )
            )
    return records, calibrations


def summarize(records: list[ErrorRecord]) -> list[SummaryRow]:
    """Mean and sample standard deviation per (diopter, method), in record order."""
    order: list[tuple[float, str]] = []
    groups: dict[tuple[float, str], list[float]] = {}
    for rec in records:
        key = (rec.diopter, rec.method)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec.angular_error_deg)
    out = []
    for diopter, method in order:
        errs = np.array(groups[(diopter, method)])
        std = float(np.std(errs, ddof=1)) if errs.size > 1 else 0.0
        out.append(
            SummaryRow(diopter=diopter, method=method, n=int(errs.size), mean_deg=float(np.mean(errs)), std_deg=std)
        )
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    problems = cfg.validate()
    if problems:
        raise ValueError("; ".join(problems))
    per_condition = _ordered_map(lambda d: run_condition(cfg, d), cfg.diopters)
    records: list[ErrorRecord] = []
    calibrations: list[tuple[float, str, str, float]] = []
    for recs, cals in per_condition:
        records.extend(recs)
        calibrations.extend(cals)
    return ExperimentResult(records=records, summary=summarize(records), calibrations=calibrations)


# ---------------------------------------------------------------------------
# deterministic text output
# ---------------------------------------------------------------------------


def fmt(x: float) -> str:
    """12-significant-digit decimal representation; never negative zero."""
    if x == 0:
        x = 0.0
    return f"{x:.12g}"


def write_records_csv(path, records: list[ErrorRecord]) -> None:
    lines = ["diopter,method,theta_h,theta_v,pred_theta_h,pred_theta_v,angular_error_deg"]
    for r in records:
        lines.append(
            ",".join(
                [fmt(r.diopter), r.method, fmt(r.theta_h), fmt(r.theta_v), fmt(r.pred_theta_h), fmt(r.pred_theta_v), fmt(r.angular_error_deg)]
            )
        )
    _write_lines(path, lines)


def write_summary_csv(path, summary: list[SummaryRow]) -> None:
    lines = ["diopter,method,n_test,mean_error_deg,std_error_deg"]
    for s in summary:
        lines.append(",".join([fmt(s.diopter), s.method, str(s.n), fmt(s.mean_deg), fmt(s.std_deg)]))
    _write_lines(path, lines)


def write_calibrations_csv(path, calibrations) -> None:
    lines = ["diopter,method,parameter,value"]
    for diopter, method, name, value in calibrations:
        lines.append(",".join([fmt(diopter), method, name, fmt(value)]))
    _write_lines(path, lines)


def summary_table(summary: list[SummaryRow]) -> str:
    """Human-readable table: one diopter row, one column per method."""
    methods = []
    for s in summary:
        if s.method not in methods:
            methods.append(s.method)
    diopters = []
    for s in summary:
        if s.diopter not in diopters:
            diopters.append(s.diopter)
    cells = {(s.diopter, s.method): s for s in summary}
    headers = ["Eyeglass"] + [{"polynomial": "Polynomial fitting", "geometric": "Geometrical model"}.get(m, m) for m in methods]
    rows = []
    for d in diopters:
        row = [f"{fmt(d)} dpt"]
        for m in methods:
            s = cells.get((d, m))
            row.append("-" if s is None else f"{s.mean_deg:.2f} +/- {s.std_deg:.2f} deg")
        rows.append(row)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(out) + "\n"


def feature_csv_header(n_leds: int) -> str:
    cols = [
        "diopter",
        "theta_h",
        "theta_v",
        "ellipse_center_u",
        "ellipse_center_v",
        "ellipse_semi_major",
        "ellipse_semi_minor",
        "ellipse_angle_rad",
        "pupil_u",
        "pupil_v",
    ]
    for led in range(n_leds):
        for surf in GLINT_SURFACES:
            cols.append(f"glint{led}_{surf}_u")
            cols.append(f"glint{led}_{surf}_v")
    return ",".join(cols)


def feature_csv_row(f: PoseFeatures, n_leds: int) -> str:
    e = f.ellipse
    cells = [
        fmt(f.diopter),
        fmt(f.pose.theta_h),
        fmt(f.pose.theta_v),
        fmt(e.center[0]),
        fmt(e.center[1]),
        fmt(e.semi_major),
        fmt(e.semi_minor),
        fmt(e.angle),
        fmt(f.pupil_center[0]),
        fmt(f.pupil_center[1]),
    ]
    by_slot = {(g.led, g.surface): g for g in f.glints}
    for led in range(n_leds):
        for surf in GLINT_SURFACES:
            g = by_slot.get((led, surf))
            cells.append("" if g is None else fmt(g.image_uv[0]))
            cells.append("" if g is None else fmt(g.image_uv[1]))
    return ",".join(cells)


def write_features_csv(path, features: list[PoseFeatures], n_leds: int) -> None:
    lines = [feature_csv_header(n_leds)] + [feature_csv_row(f, n_leds) for f in features]
    _write_lines(path, lines)


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
