"""JSON configuration: one document with scene / lens / camera / leds /
experiment sections.  Every section is optional and falls back to the
built-in defaults; unknown keys anywhere are errors."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from .eye import Environment, EnvPatch, EyeGeometry, SceneConfig
from .harness import ExperimentConfig
from .lens import LensPrescription
from .optics import MaterialIndex, N_BK7


class ConfigError(ValueError):
    pass


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _vec3(section: str, value) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{section} must be a 3-element array")
    return tuple(float(x) for x in value)


def _parse_material(value) -> MaterialIndex:
    if isinstance(value, str):
        if value.upper().replace("-", "") in ("NBK7", "N_BK7"):
            return N_BK7
        raise ConfigError(f"unknown material name {value!r} (only 'N-BK7' is built in)")
    if isinstance(value, dict):
        _check_keys("lens.material", value, {"constant_n", "sellmeier_B", "sellmeier_C"})
        if "constant_n" in value:
            if "sellmeier_B" in value or "sellmeier_C" in value:
                raise ConfigError("lens.material: give either constant_n or Sellmeier coefficients")
            return MaterialIndex(kind="constant", constant_n=float(value["constant_n"]))
        if "sellmeier_B" in value and "sellmeier_C" in value:
            b = tuple(float(x) for x in value["sellmeier_B"])
            c = tuple(float(x) for x in value["sellmeier_C"])
            if len(b) != 3 or len(c) != 3:
                raise ConfigError("lens.material: Sellmeier coefficient arrays must have 3 entries")
            return MaterialIndex(kind="sellmeier", sellmeier_B=b, sellmeier_C=c)
        raise ConfigError("lens.material: incomplete material specification")
    raise ConfigError("lens.material must be a name or an object")


def _parse_eye(data: dict) -> EyeGeometry:
    _check_keys(
        "scene.eye",
        data,
        {
            "center",
            "eyeball_radius",
            "cornea_radius",
            "cornea_center_offset",
            "cornea_index",
            "pupil_radius",
            "pupil_plane_offset",
        },
    )
    eye = EyeGeometry()
    kwargs = {}
    if "center" in data:
        import numpy as np

        kwargs["center"] = np.asarray(_vec3("scene.eye.center", data["center"]), dtype=float)
    for key in (
        "eyeball_radius",
        "cornea_radius",
        "cornea_center_offset",
        "cornea_index",
        "pupil_radius",
        "pupil_plane_offset",
    ):
        if key in data:
            kwargs[key] = float(data[key])
    return replace(eye, **kwargs)


def _parse_environment(data: dict) -> Environment:
    _check_keys("scene.environment", data, {"sky", "floor", "horizon_softness", "patches"})
    patches = []
    for i, p in enumerate(data.get("patches", [])):
        _check_keys(
            f"scene.environment.patches[{i}]",
            p,
            {"azimuth_deg", "elevation_deg", "half_az_deg", "half_el_deg", "intensity"},
        )
        patches.append(
            EnvPatch(
                azimuth_deg=float(p.get("azimuth_deg", 0.0)),
                elevation_deg=float(p.get("elevation_deg", 0.0)),
                half_az_deg=float(p.get("half_az_deg", 10.0)),
                half_el_deg=float(p.get("half_el_deg", 10.0)),
                intensity=float(p.get("intensity", 0.95)),
            )
        )
    env = Environment()
    return Environment(
        sky=float(data.get("sky", env.sky)),
        floor=float(data.get("floor", env.floor)),
        horizon_softness=float(data.get("horizon_softness", env.horizon_softness)),
        patches=tuple(patches),
    )


def _parse_lens(data: dict) -> LensPrescription:
    _check_keys(
        "lens", data, {"power", "material", "coated", "diameter", "min_thickness", "vertex_distance"}
    )
    lens = LensPrescription(power=0.0)
    kwargs = {}
    if "power" in data:
        kwargs["power"] = float(data["power"])
    if "material" in data:
        kwargs["material"] = _parse_material(data["material"])
    if "coated" in data:
        if not isinstance(data["coated"], bool):
            raise ConfigError("lens.coated must be a boolean")
        kwargs["coated"] = data["coated"]
    for key in ("diameter", "min_thickness", "vertex_distance"):
        if key in data:
            kwargs[key] = float(data[key])
    return replace(lens, **kwargs)


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")
    _check_keys("config", doc, {"scene", "lens", "camera", "leds", "experiment"})

    scene_cfg = SceneConfig()
    scene_kwargs = {}

    scene_section = doc.get("scene", {})
    _check_keys("scene", scene_section, {"eye", "environment"})
    if "eye" in scene_section:
        scene_kwargs["eye"] = _parse_eye(scene_section["eye"])
    if "environment" in scene_section:
        scene_kwargs["environment"] = _parse_environment(scene_section["environment"])

    if "lens" in doc:
        scene_kwargs["lens"] = _parse_lens(doc["lens"])

    cam = doc.get("camera", {})
    _check_keys("camera", cam, {"position", "target", "focal_px", "width", "height"})
    if "position" in cam:
        scene_kwargs["camera_position"] = _vec3("camera.position", cam["position"])
    if "target" in cam:
        scene_kwargs["camera_target"] = None if cam["target"] is None else _vec3("camera.target", cam["target"])
    if "focal_px" in cam:
        scene_kwargs["camera_focal_px"] = float(cam["focal_px"])
    if "width" in cam:
        scene_kwargs["image_width"] = int(cam["width"])
    if "height" in cam:
        scene_kwargs["image_height"] = int(cam["height"])

    if "leds" in doc:
        if not isinstance(doc["leds"], list):
            raise ConfigError("leds must be an array of 3-element positions")
        scene_kwargs["leds"] = tuple(_vec3(f"leds[{i}]", led) for i, led in enumerate(doc["leds"]))

    scene_cfg = replace(scene_cfg, **scene_kwargs)

    exp = doc.get("experiment", {})
    _check_keys("experiment", exp, {"diopters", "methods", "seed"})
    exp_cfg = ExperimentConfig(scene=scene_cfg)
    kwargs = {}
    if "diopters" in exp:
        if not isinstance(exp["diopters"], list) or not exp["diopters"]:
            raise ConfigError("experiment.diopters must be a non-empty array")
        kwargs["diopters"] = tuple(float(d) for d in exp["diopters"])
    if "methods" in exp:
        if not isinstance(exp["methods"], list) or not exp["methods"]:
            raise ConfigError("experiment.methods must be a non-empty array")
        kwargs["methods"] = tuple(str(m) for m in exp["methods"])
    if "seed" in exp:
        kwargs["seed"] = int(exp["seed"])
    exp_cfg = replace(exp_cfg, **kwargs)
    problems = exp_cfg.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    return exp_cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(doc)
