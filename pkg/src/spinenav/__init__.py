"""Marker-based surgical navigation geometry toolkit.

Stereo fiducial pose estimation, surface-digitization registration of
digitized anatomy to a preoperative model, screw-trajectory feedback, rod
templating, and a seeded synthetic evaluation harness.
"""

from .errors import (
    CoincidentControlPoints,
    DegenerateGeometry,
    EmptyInput,
    InvalidParams,
    MismatchedLengths,
    MissingNormals,
    NoCorrespondences,
    NonMonotonicTimestamp,
    ParallelRays,
    PointsTooClose,
    SpineNavError,
    UnknownRegion,
)
from .evaluation import (
    BatchReport,
    ExecutionNoise,
    ScrewResult,
    TrialReport,
    evaluate_trial,
    load_config,
    run_experiment,
)
from .geometry import (
    PointCloud,
    Ray,
    RigidTransform,
    TriangleMesh,
    absolute_orientation,
    apply_transform,
    ray_mesh_first_intersection,
    rmse,
    sample_mesh_surface,
)
from .navigation import (
    FeedbackTriangle,
    RodTemplate,
    ScrewPlan,
    build_rod_template,
    catmull_rom_centripetal,
    feedback_triangle,
    rod_length,
    screw_head_capture,
    trajectory_angle,
)
from .phantom import PhantomParams, PhantomSpec, generate_phantom
from .registration import (
    ExtremeTriple,
    IcpResult,
    PrincipalAxes,
    RegistrationConfig,
    RegistrationResult,
    coarse_registrations,
    extreme_points,
    icp,
    pca_axes,
    register,
    trim_by_mask,
    trim_reachable,
)
from .simulation import (
    DigitizationSim,
    StereoSimResult,
    fit_trajectory_axis,
    simulate_digitization,
    simulate_stereo_observations,
)
from .tracking import (
    CameraModel,
    CornerFilterState,
    CornerObservation,
    KalmanConfig,
    MarkerGeometry,
    MarkerPose,
    StereoRig,
    ToolGeometry,
    corner_ray,
    estimate_marker_pose,
    kalman_update,
    tool_tip_position,
    triangulate_closest_point,
    unproject_to_unit_plane,
)

__version__ = "0.1.0"
