"""6DoF fiducial pose estimation from paired stereo corner observations.

The chain per frame: raw pixel corners are smoothed by one constant-velocity
Kalman filter per corner stream, unprojected onto each camera's z=1 plane,
expressed in the shared rig frame, triangulated ray-to-ray, and finally fit
to the known square marker layout with the absolute-orientation solver.

Corner detection itself is out of scope; this module consumes observation
streams produced by a detector or by the simulation harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonMonotonicTimestamp, ParallelRays
from .geometry import (
    Ray,
    RigidTransform,
    absolute_orientation,
    as_point,
    as_unit_vector,
    unit_vector,
)

PARALLEL_RAY_TOL = 1e-12


@dataclass(frozen=True)
class CameraModel:
    """Rectified pinhole camera.

    ``cam_to_rig`` maps the camera's own 3D view space into the shared rig
    frame, so both cameras can be triangulated against each other.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    cam_to_rig: RigidTransform

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.image_width and 0 <= self.cy < self.image_height):
            raise ValueError("principal point outside image bounds")

    def center_in_rig(self) -> np.ndarray:
        """Camera center expressed in the rig frame."""
        return self.cam_to_rig.translation.copy()

    def project(self, point_rig) -> tuple[np.ndarray, bool]:
        """Project a rig-frame point; the flag marks in-front-and-in-bounds."""
        p = self.cam_to_rig.inverse().apply(point_rig)
        if p[2] <= 1e-9:
            return np.array([np.nan, np.nan]), False
        u = self.fx * p[0] / p[2] + self.cx
        v = self.fy * p[1] / p[2] + self.cy
        visible = bool(0 <= u < self.image_width and 0 <= v < self.image_height)
        return np.array([u, v]), visible


@dataclass(frozen=True)
class StereoRig:
    """Calibrated two-camera model with a non-zero baseline."""

    left: CameraModel
    right: CameraModel

    def __post_init__(self):
        baseline = np.linalg.norm(
            self.left.center_in_rig() - self.right.center_in_rig()
        )
        if baseline < 1e-9:
            raise ValueError("left and right cameras must have a non-zero baseline")


@dataclass(frozen=True)
class CornerObservation:
    """One detected marker corner in one camera image."""

    corner_id: int
    pixel: tuple[float, float]
    timestamp: float

    def __post_init__(self):
        if self.corner_id not in (1, 2, 3, 4):
            raise ValueError(f"corner_id must be 1..4, got {self.corner_id}")


@dataclass(frozen=True)
class ObservationRecord:
    """Flat CSV row of an observation stream: one corner in one camera."""

    timestamp_s: float
    camera: str  # "L" or "R"
    corner_id: int
    u_px: float
    v_px: float


@dataclass(frozen=True)
class KalmanConfig:
    """Constant-velocity filter noise settings.

    accel_noise is the white acceleration standard deviation (px/s^2) used to
    build the process covariance; measurement_variance is per-axis (px^2).
    """

    accel_noise: float = 100.0
    measurement_variance: float = 1.0
    init_position_variance: float = 1e4
    init_velocity_variance: float = 1e4


@dataclass
class CornerFilterState:
    """State of one corner's filter: (u, v, du/dt, dv/dt) and its covariance."""

    state: np.ndarray
    covariance: np.ndarray
    last_timestamp: float

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64).reshape(4)
        cov = np.asarray(self.covariance, dtype=np.float64).reshape(4, 4)
        if np.max(np.abs(cov - cov.T)) > 1e-9:
            raise ValueError("covariance must be symmetric")
        # Strictly positive-definite under positive noise settings; the
        # degenerate zero-measurement-noise configuration yields a PSD
        # posterior, so only reject clearly indefinite matrices here.
        if np.linalg.eigvalsh(cov).min() < -1e-9:
            raise ValueError("covariance must be positive (semi-)definite")
        self.covariance = cov

    @classmethod
    def from_first_observation(
        cls, obs: CornerObservation, config: KalmanConfig = KalmanConfig()
    ) -> "CornerFilterState":
        """Initialize at the raw observation with zero velocity."""
        state = np.array([obs.pixel[0], obs.pixel[1], 0.0, 0.0])
        cov = np.diag(
            [
                config.init_position_variance,
                config.init_position_variance,
                config.init_velocity_variance,
                config.init_velocity_variance,
            ]
        )
        return cls(state, cov, obs.timestamp)

    @property
    def position(self) -> np.ndarray:
        return self.state[:2].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.state[2:].copy()


def kalman_update(
    state: CornerFilterState,
    obs: CornerObservation,
    config: KalmanConfig = KalmanConfig(),
) -> CornerFilterState:
    """Advance one corner filter by a predict-then-correct step.

    The process model is constant velocity over dt = obs.timestamp minus the
    state's last timestamp, with discrete white-acceleration process noise.
    The covariance update uses the Joseph form, which keeps it symmetric
    positive-definite under any update sequence with positive noise settings.

    Raises:
        NonMonotonicTimestamp: the observation is older than the state.
    """
    dt = obs.timestamp - state.last_timestamp
    if dt < 0:
        raise NonMonotonicTimestamp(
            f"observation at t={obs.timestamp} precedes filter at t={state.last_timestamp}"
        )

    f = np.eye(4)
    f[0, 2] = dt
    f[1, 3] = dt
    q_var = config.accel_noise**2
    q_axis = q_var * np.array([[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]])
    q = np.zeros((4, 4))
    q[np.ix_([0, 2], [0, 2])] = q_axis
    q[np.ix_([1, 3], [1, 3])] = q_axis

    x_pred = f @ state.state
    p_pred = f @ state.covariance @ f.T + q

    h = np.zeros((2, 4))
    h[0, 0] = 1.0
    h[1, 1] = 1.0
    r = config.measurement_variance * np.eye(2)
    z = np.array([obs.pixel[0], obs.pixel[1]])

    s = h @ p_pred @ h.T + r
    k = np.linalg.solve(s.T, (p_pred @ h.T).T).T
    x_new = x_pred + k @ (z - h @ x_pred)
    i_kh = np.eye(4) - k @ h
    p_new = i_kh @ p_pred @ i_kh.T + k @ r @ k.T
    p_new = 0.5 * (p_new + p_new.T)
    return CornerFilterState(x_new, p_new, obs.timestamp)


def unproject_to_unit_plane(cam: CameraModel, pixel) -> np.ndarray:
    """Lift a pixel onto the camera's z=1 plane in its own view space."""
    u, v = float(pixel[0]), float(pixel[1])
    if not (np.isfinite(u) and np.isfinite(v)):
        raise ValueError("pixel coordinates must be finite")
    return np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])


def corner_ray(cam: CameraModel, pixel) -> Ray:
    """Rig-frame viewing ray from the camera center through a pixel."""
    p_rig = cam.cam_to_rig.apply(unproject_to_unit_plane(cam, pixel))
    center = cam.center_in_rig()
    return Ray(center, unit_vector(p_rig - center))


def triangulate_closest_point(left: Ray, right: Ray) -> tuple[np.ndarray, float]:
    """Midpoint of the mutual perpendicular between two viewing lines.

    Returns:
        (midpoint, gap): gap is the length of the perpendicular segment, 0
        when the lines truly intersect.

    Raises:
        ParallelRays: direction cross product is numerically zero.
    """
    d1 = left.direction
    d2 = right.direction
    if np.linalg.norm(np.cross(d1, d2)) < PARALLEL_RAY_TOL:
        raise ParallelRays("rays are parallel; no unique closest point")
    w0 = left.origin - right.origin
    b = float(d1 @ d2)
    d = float(d1 @ w0)
    e = float(d2 @ w0)
    denom = 1.0 - b * b
    s = (b * e - d) / denom
    t = (e - b * d) / denom
    p1 = left.at(s)
    p2 = right.at(t)
    return 0.5 * (p1 + p2), float(np.linalg.norm(p1 - p2))


@dataclass(frozen=True)
class MarkerGeometry:
    """Known square fiducial layout: 4 corners in the marker frame.

    The marker frame has its origin at the marker center and the marker in
    the z=0 plane. Corners are ordered counter-clockwise starting top-left,
    with ids 1..4 mapping to rows 0..3 of ``corners``.
    """

    side_length: float
    corners: np.ndarray

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=np.float64).reshape(4, 3)
        if np.max(np.abs(corners[:, 2])) > 1e-9:
            raise ValueError("marker corners must lie in the z=0 plane")
        if np.max(np.abs(corners.mean(axis=0))) > 1e-9:
            raise ValueError("marker centroid must be at the origin")
        d = self.side_length
        sides = np.linalg.norm(corners - np.roll(corners, -1, axis=0), axis=1)
        if np.max(np.abs(sides - d)) > 1e-9:
            raise ValueError("corner layout is not a square of the stated side length")
        object.__setattr__(self, "corners", corners)

    @classmethod
    def square(cls, side_length: float) -> "MarkerGeometry":
        h = side_length / 2.0
        corners = np.array(
            [[-h, h, 0.0], [-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0]]
        )
        return cls(side_length, corners)


@dataclass
class MarkerPose:
    """Estimated marker pose (marker frame to rig frame) with fit diagnostics."""

    pose: RigidTransform
    reprojection_rmse: float
    triangulation_gaps: np.ndarray

    def __post_init__(self):
        self.triangulation_gaps = np.asarray(
            self.triangulation_gaps, dtype=np.float64
        ).reshape(4)
        if self.reprojection_rmse < 0 or np.any(self.triangulation_gaps < 0):
            raise ValueError("rmse and gaps must be non-negative")


@dataclass(frozen=True)
class ToolGeometry:
    """Tracked tool description in the marker frame.

    tip_offset locates the working tip; axis is the tool's pointing
    direction, used as the navigated trajectory of sleeve-style tools.
    """

    tip_offset: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "tip_offset", as_point(self.tip_offset))
        object.__setattr__(self, "axis", as_unit_vector(self.axis))


def estimate_marker_pose(
    rig: StereoRig,
    left_pixels,
    right_pixels,
    geom: MarkerGeometry,
) -> MarkerPose:
    """Recover the 6DoF marker pose from filtered stereo corner pixels.

    Each corner is unprojected in both cameras, expressed in the rig frame,
    and triangulated; the four triangulated corners are then fit to the known
    layout with the absolute-orientation solver.

    Args:
        rig: calibrated stereo pair.
        left_pixels: (4, 2) filtered (u, v) per corner id 1..4, left camera.
        right_pixels: (4, 2) same corners in the right camera.
        geom: known marker corner layout.

    Returns:
        MarkerPose with per-corner triangulation gaps and the pixel-space
        reprojection RMSE over all 8 observations.

    Raises:
        ParallelRays: a corner's viewing rays are parallel.
        DegenerateGeometry: triangulated corners are collinear.
    """
    lp = np.asarray(left_pixels, dtype=np.float64).reshape(4, 2)
    rp = np.asarray(right_pixels, dtype=np.float64).reshape(4, 2)

    triangulated = np.zeros((4, 3))
    gaps = np.zeros(4)
    for i in range(4):
        point, gap = triangulate_closest_point(
            corner_ray(rig.left, lp[i]), corner_ray(rig.right, rp[i])
        )
        triangulated[i] = point
        gaps[i] = gap

    pose = absolute_orientation(geom.corners, triangulated)

    posed = pose.apply_points(geom.corners)
    residuals = []
    for i in range(4):
        proj_l, _ = rig.left.project(posed[i])
        proj_r, _ = rig.right.project(posed[i])
        residuals.append(proj_l - lp[i])
        residuals.append(proj_r - rp[i])
    reproj = float(np.sqrt(np.mean(np.sum(np.square(residuals), axis=1))))
    return MarkerPose(pose, reproj, gaps)


def tool_tip_position(pose: MarkerPose, tool: ToolGeometry) -> np.ndarray:
    """Tool tip in the rig frame: the marker pose applied to the tip offset."""
    return pose.pose.apply(tool.tip_offset)
