"""Core 3D types and geometric operations shared by all other modules.

Conventions: right-handed frames, millimeters everywhere. A point is a
length-3 float64 array; a cloud is an (N, 3) array. All operations are pure
functions over immutable inputs and safe to call from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, EmptyInput, MismatchedLengths

UNIT_TOL = 1e-9
ORTHONORMAL_TOL = 1e-9
COLLINEARITY_RATIO = 1e-9
BARYCENTRIC_TOL = 1e-9


def as_point(p) -> np.ndarray:
    """Coerce to a finite (3,) float64 point, in mm."""
    a = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"point has non-finite components: {a}")
    return a


def as_points(pts) -> np.ndarray:
    """Coerce to a finite (N, 3) float64 array."""
    a = np.asarray(pts, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("points contain non-finite components")
    return a


def unit_vector(v) -> np.ndarray:
    """Normalize to unit length. Raises on (near-)zero input."""
    a = as_point(v)
    n = np.linalg.norm(a)
    if n < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return a / n


def as_unit_vector(v) -> np.ndarray:
    """Coerce to (3,) float64, requiring unit norm within 1e-9."""
    a = as_point(v)
    if abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
        raise ValueError(f"vector is not unit length: {a}")
    return a


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform between right-handed 3D frames.

    Attributes:
        rotation: (3, 3) orthonormal matrix with determinant +1.
        translation: (3,) offset in mm.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tr = as_point(self.translation)
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation must be proper (determinant +1)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, axis, angle_deg: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Rotation of ``angle_deg`` about ``axis`` (Rodrigues), then translation."""
        k = unit_vector(axis)
        theta = np.deg2rad(angle_deg)
        kmat = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        rot = np.eye(3) + np.sin(theta) * kmat + (1.0 - np.cos(theta)) * (kmat @ kmat)
        return cls(rot, as_point(translation))

    @classmethod
    def rotation_about_point(cls, axis, angle_deg: float, center) -> "RigidTransform":
        """Rotation about an axis through ``center`` (a fixed point of the map)."""
        c = as_point(center)
        r = cls.from_axis_angle(axis, angle_deg)
        return cls(r.rotation, c - r.rotation @ c)

    def apply(self, point) -> np.ndarray:
        return self.rotation @ as_point(point) + self.translation

    def apply_points(self, points) -> np.ndarray:
        return as_points(points) @ self.rotation.T + self.translation

    def rotate(self, vector) -> np.ndarray:
        return self.rotation @ as_point(vector)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self after other, i.e. (self o other)(x) = self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)

    def rotation_angle_deg(self) -> float:
        """Geodesic rotation angle of this transform, in degrees.

        Uses atan2 of the antisymmetric part rather than arccos of the trace,
        which stays accurate for very small angles.
        """
        r = self.rotation
        w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        sin_theta = 0.5 * np.linalg.norm(w)
        cos_theta = (np.trace(r) - 1.0) / 2.0
        return float(np.degrees(np.arctan2(sin_theta, cos_theta)))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass
class PointCloud:
    """Ordered 3D point samples with optional per-point unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.normals is not None:
            self.normals = as_points(self.normals)
            if len(self.normals) != len(self.points):
                raise ValueError(
                    f"normals length {len(self.normals)} != points length {len(self.points)}"
                )

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Ray:
    """Half-line from ``origin`` along unit ``direction``."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.origin = as_point(self.origin)
        self.direction = as_unit_vector(self.direction)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass
class TriangleMesh:
    """Triangle surface mesh: (V, 3) vertices and (F, 3) vertex-index faces."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = as_points(self.vertices)
        faces = np.asarray(self.faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"expected (F, 3) faces, got shape {faces.shape}")
        if faces.min(initial=0) < 0 or faces.max(initial=-1) >= len(self.vertices):
            raise ValueError("face indices out of vertex range")
        self.faces = faces
        if np.any(self.face_areas() < 1e-12):
            raise ValueError("mesh contains degenerate (zero-area) faces")

    def triangles(self) -> np.ndarray:
        """Face corner coordinates, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        tri = self.triangles()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[np.asarray(self.faces, dtype=np.int64)]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals, unit length."""
        tri = self.triangles()
        fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])  # area-weighted
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], fn)
        return vn / np.linalg.norm(vn, axis=1, keepdims=True)

    def to_point_cloud(self, with_normals: bool = True) -> PointCloud:
        normals = self.vertex_normals() if with_normals else None
        return PointCloud(self.vertices.copy(), normals)


def absolute_orientation(source, target) -> RigidTransform:
    """Least-squares proper rigid transform mapping ``source`` onto ``target``.

    Solves min sum ||R s_i + t - g_i||^2 over proper rotations via SVD of the
    cross-covariance, with reflection correction so the result is always a
    rotation (determinant +1), even for noisy or mirrored inputs.

    Args:
        source: (N, 3) points, N >= 3, not collinear.
        target: (N, 3) corresponding points.

    Returns:
        The optimal RigidTransform. Deterministic for fixed input.

    Raises:
        MismatchedLengths: source and target lengths differ.
        DegenerateGeometry: fewer than 3 points, or source points collinear
            or coincident.
    """
    src = as_points(source)
    tgt = as_points(target)
    if len(src) != len(tgt):
        raise MismatchedLengths(f"{len(src)} source vs {len(tgt)} target points")
    if len(src) < 3:
        raise DegenerateGeometry(f"need at least 3 point pairs, got {len(src)}")

    src_centroid = src.mean(axis=0)
    tgt_centroid = tgt.mean(axis=0)
    src_c = src - src_centroid
    tgt_c = tgt - tgt_centroid

    sv = np.linalg.svd(src_c, compute_uv=False)
    if sv[1] < COLLINEARITY_RATIO * sv[0] or sv[0] == 0.0:
        raise DegenerateGeometry("source points are collinear or coincident")

    cross_cov = src_c.T @ tgt_c
    u, _, vt = np.linalg.svd(cross_cov)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, tgt_centroid - rot @ src_centroid)


def apply_transform(t: RigidTransform, pc: PointCloud) -> PointCloud:
    """Transform a cloud: points get the full map, normals are rotated only."""
    normals = None if pc.normals is None else pc.normals @ t.rotation.T
    return PointCloud(t.apply_points(pc.points), normals)


def rmse(a, b) -> float:
    """Root-mean-square Euclidean distance between paired points, in mm.

    Raises:
        MismatchedLengths: the lists differ in length.
        EmptyInput: the lists are empty.
    """
    pa = as_points(a)
    pb = as_points(b)
    if len(pa) != len(pb):
        raise MismatchedLengths(f"{len(pa)} vs {len(pb)} points")
    if len(pa) == 0:
        raise EmptyInput("rmse of empty point lists is undefined")
    return float(np.sqrt(np.mean(np.sum((pa - pb) ** 2, axis=1))))


def ray_mesh_first_intersection(ray: Ray, mesh: TriangleMesh) -> np.ndarray | None:
    """First surface point hit by a ray, or None on a miss.

    Runs a Moller-Trumbore test against every face with a 1e-9 tolerance on
    the barycentric bounds, keeps hits with non-negative ray parameter, and
    returns the one with the smallest parameter. Ties between coincident
    faces are broken by the lowest face index, so the output is deterministic.
    """
    tri = mesh.triangles()
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    h = np.cross(ray.direction[None, :], e2)
    det = np.einsum("ij,ij->i", e1, h)
    near_parallel = np.abs(det) < 1e-12
    safe_det = np.where(near_parallel, 1.0, det)
    inv_det = 1.0 / safe_det

    s = ray.origin[None, :] - v0
    u = np.einsum("ij,ij->i", s, h) * inv_det
    q = np.cross(s, e1)
    v = np.einsum("j,ij->i", ray.direction, q) * inv_det
    t = np.einsum("ij,ij->i", e2, q) * inv_det

    hit = (
        ~near_parallel
        & (u >= -BARYCENTRIC_TOL)
        & (v >= -BARYCENTRIC_TOL)
        & (u + v <= 1.0 + BARYCENTRIC_TOL)
        & (t >= -BARYCENTRIC_TOL)
    )
    if not np.any(hit):
        return None
    t_hit = np.where(hit, t, np.inf)
    t_min = t_hit.min()
    face_idx = int(np.argmax(t_hit <= t_min + BARYCENTRIC_TOL))
    return ray.at(max(t_hit[face_idx], 0.0))


def sample_mesh_surface(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Uniform area-weighted surface samples with face normals attached."""
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    faces = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles()[faces]
    pts = (
        (1.0 - r1)[:, None] * tri[:, 0]
        + (r1 * (1.0 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )
    return PointCloud(pts, mesh.face_normals()[faces])
