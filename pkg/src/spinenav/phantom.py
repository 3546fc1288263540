"""Seeded synthetic phantom generation for desk-scale evaluation.

Real evaluations digitize CT-derived bone phantoms; this module stands in
with a watertight, vertebra-like surface: an elongated body with smooth
process-like lobes, deliberately close to (but not exactly) symmetric
end-for-end so that both coarse registration configurations get exercised.
The faces a pointer could reach are labeled and split into named regions for
the stroke simulator, and each phantom carries ground truth: its placement
pose and the planned screw trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams
from .geometry import (
    PointCloud,
    Ray,
    RigidTransform,
    TriangleMesh,
    ray_mesh_first_intersection,
    unit_vector,
)
from .navigation import ScrewPlan


@dataclass(frozen=True)
class PhantomParams:
    """Generator knobs. Defaults give a lumbar-vertebra-scale shape in mm."""

    n_longitudes: int = 48
    n_latitudes: int = 30
    half_axes: tuple[float, float, float] = (45.0, 18.0, 14.0)
    lobe_amplitude: float = 0.45
    lobe_width: float = 0.55
    end_asymmetry: float = 0.18
    texture_scale: float = 1.0
    seed_jitter: float = 0.10
    reachable_normal_z: float = 0.15
    regions_x: int = 4
    regions_y: int = 2
    n_screws: int = 2
    screw_length: float = 35.0
    screw_convergence_deg: float = 15.0
    pose_mode: str = "general"  # "identity" | "general" | "about_pa1"
    max_rotation_deg: float = 60.0
    max_tilt_deg: float = 30.0
    max_translation: float = 150.0

    def __post_init__(self):
        if self.n_longitudes < 8 or self.n_latitudes < 6:
            raise InvalidParams("mesh resolution too low (need >= 8 x 6)")
        if any(a <= 0 for a in self.half_axes):
            raise InvalidParams("half axes must be positive")
        if not 0.0 <= self.lobe_amplitude < 1.0:
            raise InvalidParams("lobe_amplitude must be in [0, 1)")
        if self.lobe_width <= 0:
            raise InvalidParams("lobe_width must be positive")
        if not 0.0 <= self.end_asymmetry < 1.0:
            raise InvalidParams("end_asymmetry must be in [0, 1)")
        if self.texture_scale < 0:
            raise InvalidParams("texture_scale must be >= 0")
        if not -1.0 < self.reachable_normal_z < 1.0:
            raise InvalidParams("reachable_normal_z must be in (-1, 1)")
        if self.regions_x < 1 or self.regions_y < 1:
            raise InvalidParams("region grid must be at least 1 x 1")
        if self.n_screws < 1 or self.screw_length <= 0:
            raise InvalidParams("need at least one screw of positive length")
        if self.pose_mode not in ("identity", "general", "about_pa1"):
            raise InvalidParams(f"unknown pose_mode {self.pose_mode!r}")


@dataclass
class PhantomSpec:
    """A generated phantom: mesh, region labels, placement pose, screw plans.

    ``ground_truth_pose`` maps the phantom (preoperative) frame into the
    world/tracking frame where digitization happens. ``regions`` maps region
    ids to face-index arrays on the reachable side of the surface.
    """

    mesh: TriangleMesh
    regions: dict[str, np.ndarray]
    ground_truth_pose: RigidTransform
    plans: list[ScrewPlan] = field(default_factory=list)

    def reachable_faces(self) -> np.ndarray:
        if not self.regions:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(list(self.regions.values())))

    def preoperative_cloud(self) -> PointCloud:
        """Model vertices with vertex normals: the registration target."""
        return self.mesh.to_point_cloud(with_normals=True)


def _lobe_field(directions: np.ndarray, centers: np.ndarray, amps: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """Sum of angular Gaussian bumps evaluated at unit directions."""
    out = np.zeros(len(directions))
    for center, amp, width in zip(centers, amps, widths):
        ang = np.arccos(np.clip(directions @ center, -1.0, 1.0))
        out += amp * np.exp(-((ang / width) ** 2))
    return out


def _sphere_grid(n_lat: int, n_lon: int, rng: np.random.Generator) -> np.ndarray:
    """Unit directions of a jittered lat-long grid with poles on the +-x axis.

    Each interior grid node is nudged by up to a quarter cell in both angles.
    A perfectly regular grid is rotationally near-periodic about the long
    axis, which creates spurious lattice-locking minima for vertex-sampled
    registration; the jitter removes that artifact while keeping the radial
    triangulation valid.
    """
    d_theta = np.pi / n_lat
    d_phi = 2.0 * np.pi / n_lon
    rows = [np.array([[1.0, 0.0, 0.0]])]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat + rng.uniform(-0.25, 0.25, n_lon) * d_theta
        phi = 2.0 * np.pi * np.arange(n_lon) / n_lon + rng.uniform(-0.25, 0.25, n_lon) * d_phi
        ring = np.column_stack(
            [np.cos(theta), np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi)]
        )
        rows.append(ring)
    rows.append(np.array([[-1.0, 0.0, 0.0]]))
    return np.vstack(rows)


def _sphere_faces(n_lat: int, n_lon: int) -> np.ndarray:
    """Triangulation of the grid from _sphere_grid, outward-oriented."""
    faces = []
    ring = lambda i: 1 + (i - 1) * n_lon  # first vertex index of ring i (1-based rings)
    for j in range(n_lon):
        faces.append([0, ring(1) + j, ring(1) + (j + 1) % n_lon])
    for i in range(1, n_lat - 1):
        a = ring(i)
        b = ring(i + 1)
        for j in range(n_lon):
            jn = (j + 1) % n_lon
            faces.append([a + j, b + j, b + jn])
            faces.append([a + j, b + jn, a + jn])
    south = ring(n_lat - 1) + n_lon  # the final pole vertex
    a = ring(n_lat - 1)
    for j in range(n_lon):
        faces.append([south, a + (j + 1) % n_lon, a + j])
    return np.asarray(faces, dtype=np.int64)


def _signed_volume(vertices: np.ndarray, faces: np.ndarray) -> float:
    tri = vertices[faces]
    return float(np.einsum("ij,ij->", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0


def _random_rotation(rng: np.random.Generator, max_angle_deg: float) -> RigidTransform:
    axis = unit_vector(rng.normal(size=3))
    angle = rng.uniform(0.0, max_angle_deg)
    return RigidTransform.from_axis_angle(axis, angle)


def _build_pose(params: PhantomParams, vertices: np.ndarray, rng: np.random.Generator) -> RigidTransform:
    if params.pose_mode == "identity":
        return RigidTransform.identity()
    translation = rng.uniform(-params.max_translation, params.max_translation, size=3)
    if params.pose_mode == "general":
        rot = _random_rotation(rng, params.max_rotation_deg)
        return RigidTransform(rot.rotation, translation)
    # about_pa1: a big flip-scale spin about the elongation axis plus a tilt
    centroid = vertices.mean(axis=0)
    centered = vertices - centroid
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    pa1 = vt[0]
    spin = RigidTransform.rotation_about_point(pa1, rng.uniform(-180.0, 180.0), centroid)
    tilt = _random_rotation(rng, params.max_tilt_deg)
    combined = tilt.compose(spin)
    return RigidTransform(combined.rotation, combined.translation + translation)


def _plan_screws(mesh: TriangleMesh, params: PhantomParams, rng: np.random.Generator) -> list[ScrewPlan]:
    """Cast entry rays from the reachable (+z) side toward the body."""
    centroid = mesh.vertices.mean(axis=0)
    extent = np.linalg.norm(mesh.vertices - centroid, axis=1).max()
    _, b, _ = params.half_axes
    conv = np.deg2rad(params.screw_convergence_deg)
    plans = []
    for k in range(params.n_screws):
        side = 1.0 if k % 2 == 0 else -1.0
        x_off = (k // 2) * 6.0 + rng.uniform(-2.0, 2.0)
        direction = unit_vector(
            [0.08 + rng.uniform(-0.03, 0.03), -side * np.sin(conv), -np.cos(conv)]
        )
        aim = centroid + np.array([x_off, side * 0.45 * b, 0.0])
        ray = Ray(aim - 3.0 * extent * direction, direction)
        entry = ray_mesh_first_intersection(ray, mesh)
        if entry is None:
            raise InvalidParams("screw plan ray missed the phantom surface")
        plans.append(ScrewPlan(entry, direction, params.screw_length))
    return plans


def _label_regions(mesh: TriangleMesh, params: PhantomParams) -> dict[str, np.ndarray]:
    normals = mesh.face_normals()
    # Region faces must also have all vertex normals facing the approach, so
    # every vertex a stroke can sample survives the default reachability trim
    # of the registration target.
    vertex_ok = mesh.vertex_normals()[:, 2] > 1e-6
    reachable = np.flatnonzero(
        (normals[:, 2] > params.reachable_normal_z) & np.all(vertex_ok[mesh.faces], axis=1)
    )
    if len(reachable) == 0:
        raise InvalidParams("no reachable faces; lower reachable_normal_z")
    centroids = mesh.triangles()[reachable].mean(axis=1)
    xs, ys = centroids[:, 0], centroids[:, 1]

    def bin_of(values: np.ndarray, nbins: int) -> np.ndarray:
        lo, hi = values.min(), values.max()
        span = hi - lo if hi > lo else 1.0
        return np.clip(((values - lo) / span * nbins).astype(int), 0, nbins - 1)

    bx = bin_of(xs, params.regions_x)
    by = bin_of(ys, params.regions_y)
    regions: dict[str, np.ndarray] = {}
    for ix in range(params.regions_x):
        for iy in range(params.regions_y):
            members = reachable[(bx == ix) & (by == iy)]
            if len(members):
                regions[f"r{ix}{iy}"] = members
    return regions


def generate_phantom(seed: int, params: PhantomParams = PhantomParams()) -> PhantomSpec:
    """Build a deterministic phantom for the given seed.

    The surface is a radially perturbed ellipsoid (long axis x): paired
    lateral lobes sit symmetrically so the shape is nearly invariant under an
    end-for-end flip, while a single off-center lobe and a +x end bump keep
    the two ends distinguishable. Identical seeds give byte-identical output.
    """
    rng = np.random.default_rng(seed)
    a, b, c = params.half_axes
    jit = lambda v: v * (1.0 + rng.uniform(-params.seed_jitter, params.seed_jitter))

    # One dominant lateral lobe (spinous-process-like) makes the pa2 extreme
    # unambiguous in both clouds; the paired end lobes keep the +-x ends nearly
    # interchangeable so both coarse configurations stay plausible, and the
    # single +x bump is the deliberate asymmetry that lets ICP pick a winner.
    centers = [
        unit_vector([jit(0.05), 0.0, 1.0]),       # posterior midline ridge
        unit_vector([0.0, jit(1.0), 0.50]),       # dominant lateral lobe
        unit_vector([1.0, jit(-0.35), 0.30]),     # paired end lobes,
        unit_vector([-1.0, jit(-0.35), 0.30]),    # mirrored end-for-end
        unit_vector([jit(1.0), 0.25, 0.20]),      # +x end bump: the asymmetry
    ]
    amps = [
        jit(0.70 * params.lobe_amplitude),
        jit(params.lobe_amplitude),
        jit(0.55 * params.lobe_amplitude),
        jit(0.55 * params.lobe_amplitude),
        jit(params.end_asymmetry),
    ]
    widths = [jit(params.lobe_width) for _ in range(len(centers))]

    # Mid-scale texture on the reachable side. Smooth featureless patches let
    # noisy nearest-neighbor fits slide tangentially; these bumps act like the
    # ridges and facets of real bone and pin that sliding.
    texture_dirs = [
        [0.55, 0.45, 0.70],
        [-0.40, 0.60, 0.68],
        [0.25, -0.55, 0.80],
        [-0.65, -0.35, 0.66],
        [0.80, -0.10, 0.58],
        [-0.15, 0.15, 0.98],
    ]
    for base_dir, rel_amp in zip(texture_dirs, (0.13, 0.10, 0.12, 0.14, 0.09, 0.08)):
        centers.append(unit_vector(np.asarray(base_dir) + rng.uniform(-0.08, 0.08, 3)))
        amps.append(jit(rel_amp * params.texture_scale))
        widths.append(jit(0.22))

    centers = np.asarray(centers)
    amps = np.asarray(amps)
    widths = np.asarray(widths)

    directions = _sphere_grid(params.n_latitudes, params.n_longitudes, rng)
    ellipsoid_r = 1.0 / np.sqrt(
        (directions[:, 0] / a) ** 2
        + (directions[:, 1] / b) ** 2
        + (directions[:, 2] / c) ** 2
    )
    radii = ellipsoid_r * (1.0 + _lobe_field(directions, centers, amps, widths))
    vertices = directions * radii[:, None]
    faces = _sphere_faces(params.n_latitudes, params.n_longitudes)
    if _signed_volume(vertices, faces) < 0:
        faces = faces[:, ::-1]
    mesh = TriangleMesh(vertices, faces)

    regions = _label_regions(mesh, params)
    plans = _plan_screws(mesh, params, rng)
    pose = _build_pose(params, vertices, rng)
    return PhantomSpec(mesh=mesh, regions=regions, ground_truth_pose=pose, plans=plans)
