"""Head-mounted IR eye-tracker simulator with spectacle-lens refraction and
reflection: exact pupil/glint feature synthesis, a deterministic renderer,
and polynomial vs. geometric gaze-mapping evaluation."""

from .eye import (
    Camera,
    Environment,
    EnvPatch,
    EyeGeometry,
    EyePose,
    Scene,
    SceneConfig,
    SceneValidationError,
    assemble_scene,
    gaze_direction,
    pupil_contour,
)
from .gaze_geometric import (
    AxisCalibration,
    CircleCandidate,
    DegenerateCalibrationError,
    DegenerateConeError,
    calibrate_axes,
    disambiguate,
    predict_geometric,
    unproject_ellipse,
)
from .gaze_poly import PolyMap, RankDeficiencyError, fit_poly, predict_poly
from .harness import (
    ErrorRecord,
    ExperimentConfig,
    angular_error,
    calibration_grid,
    run_experiment,
    test_grid,
)
from .lens import (
    LensConstructionError,
    LensGeometry,
    LensPrescription,
    build_lens,
    curvature_radius,
    surface_reflectance,
    trace_through_lens,
)
from .optics import (
    MaterialIndex,
    N_BK7,
    Ray,
    SurfaceHit,
    fresnel_reflectance,
    intersect_plane,
    intersect_sphere,
    reflect,
    refract,
    sellmeier_index,
)
from .projection import (
    DegenerateFitError,
    DegenerateProjectionError,
    Ellipse,
    Glint,
    compute_glints,
    fit_ellipse,
    project_pupil,
    trace_feature_point,
)
from .render import Image, environment_radiance, render, render_with_stats, write_pgm, write_png

__version__ = "0.1.0"
