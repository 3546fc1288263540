"""Surface-digitization registration: trim, PCA coarse alignment, ICP, selection.

Registers a sparse digitized point cloud (intra) to the point cloud of a
preoperative bone model (pre). The preoperative cloud is first trimmed to the
surface a pointer could actually reach, then both clouds are reduced to three
extreme points along their principal axes. Because an elongated bone is close
to symmetric end-for-end, two coarse correspondences are plausible; both are
refined with point-to-point ICP and the one ending with the smaller RMSE wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, MissingNormals, NoCorrespondences
from .geometry import (
    COLLINEARITY_RATIO,
    PointCloud,
    RigidTransform,
    absolute_orientation,
    as_unit_vector,
    rmse,
)

DUPLICATE_EXTREME_TOL = 1e-6


@dataclass
class PrincipalAxes:
    """Principal directions of a cloud, ordered by decreasing eigenvalue.

    Axes are sign-fixed: each is flipped so the point with the largest
    absolute centered projection projects positively. That makes extreme-point
    extraction deterministic; the remaining end-for-end ambiguity is handled
    by evaluating both coarse configurations downstream.
    """

    axes: np.ndarray  # (3, 3), rows pa1, pa2, pa3
    eigenvalues: np.ndarray  # (3,), non-increasing
    centroid: np.ndarray  # (3,)

    def __post_init__(self):
        self.axes = np.asarray(self.axes, dtype=np.float64).reshape(3, 3)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64).reshape(3)
        self.centroid = np.asarray(self.centroid, dtype=np.float64).reshape(3)
        gram = self.axes @ self.axes.T
        if np.max(np.abs(gram - np.eye(3))) > 1e-9:
            raise ValueError("principal axes must be orthonormal")
        if np.any(np.diff(self.eigenvalues) > 1e-12):
            raise ValueError("eigenvalues must be non-increasing")

    @property
    def pa1(self) -> np.ndarray:
        return self.axes[0]

    @property
    def pa2(self) -> np.ndarray:
        return self.axes[1]

    @property
    def pa3(self) -> np.ndarray:
        return self.axes[2]


@dataclass
class ExtremeTriple:
    """The three coarse-correspondence points picked from a cloud."""

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    indices: tuple[int, int, int] = (0, 0, 0)

    def as_array(self) -> np.ndarray:
        return np.vstack([self.e1, self.e2, self.e3])

    def has_duplicate(self, tol: float = DUPLICATE_EXTREME_TOL) -> bool:
        pts = self.as_array()
        for i in range(3):
            for j in range(i + 1, 3):
                if np.linalg.norm(pts[i] - pts[j]) <= tol:
                    return True
        return False


@dataclass(frozen=True)
class RegistrationConfig:
    """Tunables for the registration pipeline."""

    icp_max_iterations: int = 100
    icp_convergence_delta: float = 1e-4  # mm
    icp_max_correspondence_dist: float = 20.0  # mm
    trim_normal_threshold: float = 0.0  # keep normal . (-approach) > this

    def __post_init__(self):
        if self.icp_max_iterations < 1:
            raise ValueError("icp_max_iterations must be >= 1")
        if self.icp_convergence_delta <= 0 or self.icp_max_correspondence_dist <= 0:
            raise ValueError("ICP tolerances must be positive")
        if not -1.0 <= self.trim_normal_threshold <= 1.0:
            raise ValueError("trim_normal_threshold must be in [-1, 1]")


@dataclass
class IcpResult:
    """Fine-registration outcome with the per-iteration RMSE trace."""

    transform: RigidTransform
    final_rmse: float
    iterations: int
    rmse_history: list[float] = field(default_factory=list)


@dataclass
class RegistrationResult:
    """Selected transform (intra frame to pre frame) plus both candidates' stats."""

    transform: RigidTransform
    final_rmse: float
    chosen_configuration: int  # 1 or 2
    configuration_rmses: tuple[float, float]
    iterations: tuple[int, int]
    rmse_histories: tuple[list[float], list[float]]
    warnings: list[str] = field(default_factory=list)


def trim_reachable(
    pre: PointCloud, approach, cfg: RegistrationConfig = RegistrationConfig()
) -> PointCloud:
    """Drop model points a pointer approaching along ``approach`` cannot touch.

    Keeps points whose normal faces the pointer: normal . (-approach) must
    exceed cfg.trim_normal_threshold. Point order is preserved.

    Raises:
        MissingNormals: the model cloud carries no normals.
    """
    if pre.normals is None:
        raise MissingNormals("trimming requires per-point normals")
    direction = -as_unit_vector(approach)
    keep = pre.normals @ direction > cfg.trim_normal_threshold
    return trim_by_mask(pre, keep)


def trim_by_mask(pre: PointCloud, keep_mask) -> PointCloud:
    """Alternative trim path: apply a caller-computed boolean keep mask."""
    keep = np.asarray(keep_mask, dtype=bool).reshape(len(pre))
    normals = None if pre.normals is None else pre.normals[keep]
    return PointCloud(pre.points[keep], normals)


def pca_axes(pc: PointCloud) -> PrincipalAxes:
    """Principal axes of a cloud from the eigendecomposition of its covariance.

    Uses the sample covariance of centered points. Axes come out orthonormal,
    ordered by decreasing eigenvalue, and sign-fixed as described on
    PrincipalAxes.

    Raises:
        DegenerateGeometry: fewer than 3 points or rank < 2 (collinear cloud).
    """
    pts = pc.points
    if len(pts) < 3:
        raise DegenerateGeometry(f"PCA needs at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid

    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0.0 or sv[1] < COLLINEARITY_RATIO * sv[0]:
        raise DegenerateGeometry("cloud is collinear; principal axes undefined")

    cov = centered.T @ centered / (len(pts) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    axes = eigvecs[:, order].T

    projections = centered @ axes.T  # (N, 3)
    for k in range(3):
        extreme = np.argmax(np.abs(projections[:, k]))
        if projections[extreme, k] < 0:
            axes[k] = -axes[k]
    return PrincipalAxes(axes, eigvals, centroid)


def extreme_points(pc: PointCloud, axes: PrincipalAxes) -> ExtremeTriple:
    """Pick the coarse-correspondence triple from centered projections.

    e1 maximizes the projection on pa1, e2 minimizes it, e3 maximizes the
    absolute projection on pa2. Ties break to the lowest point index. The
    same point may appear twice for pathological clouds; downstream code
    flags that instead of failing here.
    """
    if len(pc) == 0:
        raise DegenerateGeometry("cannot take extreme points of an empty cloud")
    centered = pc.points - axes.centroid
    d1 = centered @ axes.pa1
    d2 = centered @ axes.pa2
    i1 = int(np.argmax(d1))
    i2 = int(np.argmin(d1))
    i3 = int(np.argmax(np.abs(d2)))
    return ExtremeTriple(
        pc.points[i1].copy(), pc.points[i2].copy(), pc.points[i3].copy(), (i1, i2, i3)
    )


def coarse_registrations(
    intra: ExtremeTriple, pre: ExtremeTriple
) -> tuple[RigidTransform, RigidTransform]:
    """Both candidate coarse alignments from the extreme-point triples.

    Configuration 1 pairs like-for-like (e1-e1, e2-e2, e3-e3); configuration 2
    swaps the ends (e1-e2, e2-e1, e3-e3), covering the end-for-end symmetry of
    elongated anatomy. Each is solved with the absolute-orientation solver.

    Raises:
        DegenerateGeometry: a triple is degenerate (duplicate or collinear
            points), so no coarse transform exists.
    """
    src = intra.as_array()
    tgt1 = pre.as_array()
    tgt2 = np.vstack([pre.e2, pre.e1, pre.e3])
    return absolute_orientation(src, tgt1), absolute_orientation(src, tgt2)


def icp(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform,
    cfg: RegistrationConfig = RegistrationConfig(),
    target_index: cKDTree | None = None,
) -> IcpResult:
    """Point-to-point iterative closest point refinement.

    Alternates gated nearest-neighbor correspondence against ``target`` with
    a full absolute-orientation re-solve from the original source points. An
    iteration is accepted only if it does not increase the correspondence
    RMSE, so the reported history is non-increasing by construction. Stops
    when the improvement drops below cfg.icp_convergence_delta, when the RMSE
    is already below that delta, or at the iteration cap.

    Args:
        target_index: optional prebuilt cKDTree over target.points, so a
            caller running several refinements can share one index.

    Raises:
        NoCorrespondences: every source point's nearest neighbor is farther
            than cfg.icp_max_correspondence_dist.
    """
    if len(source) < 3:
        raise DegenerateGeometry("ICP needs a source cloud of at least 3 points")
    if len(target) == 0:
        raise DegenerateGeometry("ICP target cloud is empty")
    tree = target_index if target_index is not None else cKDTree(target.points)

    transform = init
    best_rmse = np.inf
    history: list[float] = []

    for _ in range(cfg.icp_max_iterations):
        moved = transform.apply_points(source.points)
        dist, idx = tree.query(moved, distance_upper_bound=cfg.icp_max_correspondence_dist)
        mask = np.isfinite(dist)
        if not mask.any():
            raise NoCorrespondences(
                f"no target point within {cfg.icp_max_correspondence_dist} mm of any source point"
            )

        candidate = absolute_orientation(source.points[mask], target.points[idx[mask]])
        candidate_rmse = rmse(
            candidate.apply_points(source.points[mask]), target.points[idx[mask]]
        )
        if candidate_rmse > best_rmse:
            break  # re-gating made things worse; keep the last accepted state
        improvement = best_rmse - candidate_rmse
        transform = candidate
        best_rmse = candidate_rmse
        history.append(candidate_rmse)
        if candidate_rmse < cfg.icp_convergence_delta or improvement < cfg.icp_convergence_delta:
            break

    return IcpResult(transform, float(best_rmse), len(history), history)


def register(
    intra: PointCloud,
    pre_model: PointCloud,
    approach,
    cfg: RegistrationConfig = RegistrationConfig(),
    keep_mask=None,
) -> RegistrationResult:
    """Full registration pipeline from digitized points to the selected pose.

    Steps: trim the model cloud to reachable points (by approach direction,
    or by ``keep_mask`` when the caller precomputed reachability), extract
    principal axes and extreme points of both clouds, build the two coarse
    candidates, refine each with ICP, and return the candidate with the
    smaller final RMSE (ties select configuration 1).

    A coarse candidate whose triple is degenerate is recorded as a warning
    and skipped rather than failing the registration, as long as the other
    candidate survives.

    Raises:
        DegenerateGeometry: the intra cloud (or trimmed model) cannot support
            PCA, or both coarse candidates are degenerate.
        MissingNormals: pre_model lacks normals and no keep_mask was given.
        NoCorrespondences: ICP found no gated correspondences for the only
            viable candidate.
    """
    if keep_mask is not None:
        trimmed = trim_by_mask(pre_model, keep_mask)
    else:
        trimmed = trim_reachable(pre_model, approach, cfg)
    if len(trimmed) < 3:
        raise DegenerateGeometry("trimming left fewer than 3 reachable model points")

    warnings: list[str] = []
    axes_intra = pca_axes(intra)
    axes_pre = pca_axes(trimmed)
    tri_intra = extreme_points(intra, axes_intra)
    tri_pre = extreme_points(trimmed, axes_pre)
    if tri_intra.has_duplicate():
        warnings.append("intra extreme points contain a duplicate; coarse fit degraded")
    if tri_pre.has_duplicate():
        warnings.append("model extreme points contain a duplicate; coarse fit degraded")

    src = tri_intra.as_array()
    targets = (
        tri_pre.as_array(),
        np.vstack([tri_pre.e2, tri_pre.e1, tri_pre.e3]),
    )

    tree = cKDTree(trimmed.points)
    results: list[IcpResult | None] = []
    for config_num, tgt in zip((1, 2), targets):
        try:
            coarse = absolute_orientation(src, tgt)
            results.append(icp(intra, trimmed, coarse, cfg, target_index=tree))
        except (DegenerateGeometry, NoCorrespondences) as exc:
            warnings.append(f"configuration {config_num} infeasible: {exc}")
            results.append(None)

    if results[0] is None and results[1] is None:
        raise DegenerateGeometry("both coarse configurations are infeasible: " + "; ".join(warnings))

    rmses = tuple(np.inf if r is None else r.final_rmse for r in results)
    chosen = 1 if rmses[0] <= rmses[1] else 2
    winner = results[chosen - 1]
    assert winner is not None
    return RegistrationResult(
        transform=winner.transform,
        final_rmse=winner.final_rmse,
        chosen_configuration=chosen,
        configuration_rmses=(float(rmses[0]), float(rmses[1])),
        iterations=tuple(0 if r is None else r.iterations for r in results),
        rmse_histories=tuple([] if r is None else r.rmse_history for r in results),
        warnings=warnings,
    )
