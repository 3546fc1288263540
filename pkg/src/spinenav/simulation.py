"""Simulators that close the loop for testing: digitization, stereo streams.

Digitization mimics a tracked pointer dragged across the reachable surface:
strokes are random walks over the mesh vertices of a labeled region, with
Gaussian noise applied along the local surface normal (a pointer mostly errs
in the pressing direction). Stereo simulation projects a moving marker into
both cameras with pixel noise. Both are deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, UnknownRegion
from .geometry import PointCloud, Ray, RigidTransform, as_point
from .phantom import PhantomSpec
from .tracking import MarkerGeometry, ObservationRecord, StereoRig


@dataclass(frozen=True)
class DigitizationSim:
    """Stroke-pattern settings for simulated surface digitization."""

    noise_sigma: float = 0.5  # mm, along the surface normal
    points_per_stroke: int = 250
    strokes: tuple[str, ...] | None = None  # None: one stroke per labeled region
    seed: int = 0
    sampling_rate: float = 16.0  # points per second, for simulated timing

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.points_per_stroke < 1:
            raise ValueError("points_per_stroke must be >= 1")
        if self.sampling_rate <= 0:
            raise ValueError("sampling_rate must be positive")


def _stroke_path(vertex_ids: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Snake-sweep ordering of a region's vertices: strips along x, zigzag in y."""
    n_strips = max(1, int(round(np.sqrt(len(vertex_ids)))))
    x, y = positions[:, 0], positions[:, 1]
    lo, hi = x.min(), x.max()
    span = hi - lo if hi > lo else 1.0
    strip = np.clip(((x - lo) / span * n_strips).astype(int), 0, n_strips - 1)
    order = []
    for s in range(n_strips):
        members = np.flatnonzero(strip == s)
        if len(members) == 0:
            continue
        members = members[np.argsort(y[members], kind="stable")]
        if s % 2:
            members = members[::-1]
        order.extend(vertex_ids[members])
    return np.asarray(order, dtype=np.int64)


def simulate_digitization(spec: PhantomSpec, sim: DigitizationSim) -> PointCloud:
    """Sample sweeping strokes on the reachable regions and pose them into world.

    Each stroke traverses its region's vertices in a snake sweep (the trained
    back-and-forth digitization pattern), looping ping-pong from a seeded
    start until points_per_stroke samples are collected. Every sample is the
    touched vertex displaced along its vertex normal by N(0, noise_sigma).
    The phantom's ground-truth pose is applied last, so the returned cloud
    lives in the world frame where registration starts.

    Raises:
        UnknownRegion: a stroke names a region the phantom does not define.
    """
    rng = np.random.default_rng(sim.seed)
    stroke_ids = sim.strokes if sim.strokes is not None else tuple(sorted(spec.regions))
    vertex_normals = spec.mesh.vertex_normals()

    samples = []
    normals = []
    for region_id in stroke_ids:
        if region_id not in spec.regions:
            raise UnknownRegion(f"phantom defines no region {region_id!r}")
        vertex_ids = np.unique(spec.mesh.faces[spec.regions[region_id]])
        path = _stroke_path(vertex_ids, spec.mesh.vertices[vertex_ids])
        cycle = np.concatenate([path, path[::-1]])  # ping-pong, no end-to-start jump
        start = int(rng.integers(len(cycle)))
        picks = cycle[(start + np.arange(sim.points_per_stroke)) % len(cycle)]
        samples.append(spec.mesh.vertices[picks])
        normals.append(vertex_normals[picks])

    positions = np.concatenate(samples)
    normals = np.concatenate(normals)
    offsets = rng.normal(0.0, sim.noise_sigma, size=len(positions))  # scale 0 gives exact zeros
    noisy = positions + offsets[:, None] * normals
    return PointCloud(spec.ground_truth_pose.apply_points(noisy))


def digitization_time_s(n_points: int, sim: DigitizationSim) -> float:
    """Simulated acquisition time: points divided by the sampling rate."""
    return n_points / sim.sampling_rate


@dataclass
class StereoSimResult:
    """Simulated observation stream plus the poses that had to be skipped."""

    records: list[ObservationRecord] = field(default_factory=list)
    skipped_timestamps: list[float] = field(default_factory=list)


def simulate_stereo_observations(
    rig: StereoRig,
    marker_trajectory: list[tuple[float, RigidTransform]],
    geom: MarkerGeometry,
    pixel_noise_sigma: float = 0.0,
    seed: int = 0,
) -> StereoSimResult:
    """Project a marker trajectory into both cameras with pixel noise.

    Frames where any corner is behind a camera or (after noise) outside the
    image are skipped and reported, not emitted.
    """
    rng = np.random.default_rng(seed)
    result = StereoSimResult()
    for timestamp, pose in marker_trajectory:
        corners_rig = pose.apply_points(geom.corners)
        frame_rows: list[ObservationRecord] = []
        ok = True
        for camera, model in (("L", rig.left), ("R", rig.right)):
            for i in range(4):
                pixel, visible = model.project(corners_rig[i])
                if not visible:
                    ok = False
                    break
                noisy = pixel + rng.normal(0.0, pixel_noise_sigma, size=2)
                if not (
                    0 <= noisy[0] < model.image_width and 0 <= noisy[1] < model.image_height
                ):
                    ok = False
                    break
                frame_rows.append(
                    ObservationRecord(timestamp, camera, i + 1, float(noisy[0]), float(noisy[1]))
                )
            if not ok:
                break
        if ok:
            result.records.extend(frame_rows)
        else:
            result.skipped_timestamps.append(timestamp)
    return result


def fit_trajectory_axis(wire_points: PointCloud, tip_hint=None) -> Ray:
    """Line fit to an elongated sample of an executed wire.

    The axis is the dominant principal direction through the centroid. The
    direction sign points toward the tip end: toward ``tip_hint`` when given,
    otherwise toward the final point (captures are ordered tail to tip).

    Raises:
        DegenerateGeometry: fewer than 10 points, or no dominant axis
            (largest eigenvalue not above 5x the second).
    """
    pts = wire_points.points
    if len(pts) < 10:
        raise DegenerateGeometry(f"axis fit needs >= 10 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if sv[0] == 0.0 or sv[0] ** 2 <= 5.0 * sv[1] ** 2:
        raise DegenerateGeometry("samples have no dominant elongation axis")
    direction = vt[0]
    reference = as_point(tip_hint) if tip_hint is not None else pts[-1]
    if direction @ (reference - centroid) < 0:
        direction = -direction
    return Ray(centroid, direction)
