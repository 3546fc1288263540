"""Core geometry: absolute orientation, transforms, RMSE, ray casting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_rigid_transform
from spinenav import (
    PointCloud,
    Ray,
    RigidTransform,
    absolute_orientation,
    apply_transform,
    ray_mesh_first_intersection,
    rmse,
)
from spinenav.errors import DegenerateGeometry, EmptyInput, MismatchedLengths


class TestAbsoluteOrientation:
    def test_identity(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        t = absolute_orientation(pts, pts)
        np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(t.translation, 0.0, atol=1e-12)

    def test_pure_translation(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        t = absolute_orientation(pts, pts + np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(t.translation, [1.0, 2.0, 3.0], atol=1e-12)

    def test_round_trip_recovers_random_transform(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            source = rng.uniform(-500, 500, (10, 3))
            truth = random_rigid_transform(rng)
            target = truth.apply_points(source)
            recovered = absolute_orientation(source, target)
            assert rmse(recovered.apply_points(source), target) < 1e-9
            np.testing.assert_allclose(recovered.rotation, truth.rotation, atol=1e-9)

    def test_mismatched_lengths(self):
        with pytest.raises(MismatchedLengths):
            absolute_orientation(np.zeros((4, 3)), np.zeros((5, 3)))

    def test_too_few_points(self):
        with pytest.raises(DegenerateGeometry):
            absolute_orientation(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_collinear_source(self):
        src = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
        with pytest.raises(DegenerateGeometry):
            absolute_orientation(src, src)

    def test_coincident_source(self):
        src = np.ones((5, 3))
        with pytest.raises(DegenerateGeometry):
            absolute_orientation(src, src)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_always_proper_rotation_for_noisy_input(self, seed):
        # even for non-rigid correspondence (heavy noise, near-reflections)
        # the result must stay orthonormal with determinant +1
        rng = np.random.default_rng(seed)
        source = rng.uniform(-100, 100, (6, 3))
        target = rng.uniform(-100, 100, (6, 3))
        try:
            t = absolute_orientation(source, target)
        except DegenerateGeometry:
            return
        assert np.max(np.abs(t.rotation.T @ t.rotation - np.eye(3))) < 1e-9
        assert abs(np.linalg.det(t.rotation) - 1.0) < 1e-9

    def test_recovers_despite_mirrored_target(self):
        # a mirrored target must still produce a proper rotation, not a reflection
        rng = np.random.default_rng(3)
        source = rng.uniform(-50, 50, (8, 3))
        mirrored = source * np.array([1.0, 1.0, -1.0])
        t = absolute_orientation(source, mirrored)
        assert abs(np.linalg.det(t.rotation) - 1.0) < 1e-9


class TestApplyTransform:
    def test_identity(self):
        cloud = PointCloud(np.random.default_rng(0).uniform(-10, 10, (20, 3)))
        out = apply_transform(RigidTransform.identity(), cloud)
        np.testing.assert_array_equal(out.points, cloud.points)

    def test_translation(self):
        out = apply_transform(
            RigidTransform(np.eye(3), [0.0, 0.0, 5.0]), PointCloud([[1.0, 1.0, 1.0]])
        )
        np.testing.assert_allclose(out.points, [[1.0, 1.0, 6.0]])

    def test_composition_matches_sequential(self):
        rng = np.random.default_rng(7)
        cloud = PointCloud(rng.uniform(-100, 100, (100, 3)))
        t1 = random_rigid_transform(rng)
        t2 = random_rigid_transform(rng)
        sequential = apply_transform(t2, apply_transform(t1, cloud))
        composed = apply_transform(t2.compose(t1), cloud)
        np.testing.assert_allclose(composed.points, sequential.points, atol=1e-12 * 600)

    def test_normals_rotated_not_translated(self):
        normals = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        cloud = PointCloud(np.zeros((2, 3)), normals)
        t = RigidTransform.from_axis_angle([1, 0, 0], 90.0, [10.0, 20.0, 30.0])
        out = apply_transform(t, cloud)
        np.testing.assert_allclose(out.normals[0], [0.0, -1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(out.normals[1], [1.0, 0.0, 0.0], atol=1e-12)
        assert np.allclose(np.linalg.norm(out.normals, axis=1), 1.0)

    def test_transform_then_rmse_is_zero(self):
        rng = np.random.default_rng(12)
        cloud = PointCloud(rng.uniform(-500, 500, (50, 3)))
        t = random_rigid_transform(rng)
        direct = cloud.points @ t.rotation.T + t.translation
        assert rmse(apply_transform(t, cloud).points, direct) < 1e-12


class TestRmse:
    def test_identical(self):
        pts = np.random.default_rng(1).normal(size=(10, 3))
        assert rmse(pts, pts) == 0.0

    def test_three_four_five(self):
        assert rmse([[0.0, 0.0, 0.0]], [[3.0, 4.0, 0.0]]) == pytest.approx(5.0)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(-100, 100, (50, 3))
        b = rng.uniform(-100, 100, (50, 3))
        total = 0.0
        for pa, pb in zip(a, b):
            total += sum((va - vb) ** 2 for va, vb in zip(pa, pb))
        expected = (total / 50) ** 0.5
        assert rmse(a, b) == pytest.approx(expected, abs=1e-12)

    def test_errors(self):
        with pytest.raises(MismatchedLengths):
            rmse(np.zeros((2, 3)), np.zeros((3, 3)))
        with pytest.raises(EmptyInput):
            rmse(np.zeros((0, 3)), np.zeros((0, 3)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_and_rigid_invariant(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-100, 100, (12, 3))
        b = rng.uniform(-100, 100, (12, 3))
        assert rmse(a, b) == pytest.approx(rmse(b, a), abs=1e-12)
        t = random_rigid_transform(rng)
        both_moved = rmse(t.apply_points(a), t.apply_points(b))
        assert both_moved == pytest.approx(rmse(a, b), rel=1e-9, abs=1e-9)


class TestRayMeshIntersection:
    def test_hits_front_face_of_cube(self, unit_cube_mesh):
        hit = ray_mesh_first_intersection(
            Ray([0.0, 0.0, -10.0], [0.0, 0.0, 1.0]), unit_cube_mesh
        )
        np.testing.assert_allclose(hit, [0.0, 0.0, -0.5], atol=1e-12)

    def test_miss_returns_none(self, unit_cube_mesh):
        assert ray_mesh_first_intersection(
            Ray([0.0, 0.0, -10.0], [0.0, 0.0, -1.0]), unit_cube_mesh
        ) is None

    def test_origin_inside_hits_exit(self, unit_cube_mesh):
        hit = ray_mesh_first_intersection(Ray([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]), unit_cube_mesh)
        np.testing.assert_allclose(hit, [0.5, 0.0, 0.0], atol=1e-12)

    def test_matches_brute_force_on_random_rays(self, unit_cube_mesh):
        # half the rays are aimed near the cube so the hit path dominates,
        # the other half roam freely to exercise misses
        rng = np.random.default_rng(17)
        hits = 0
        for k in range(100):
            origin = rng.uniform(-3, 3, 3)
            if k % 2 == 0:
                direction = rng.uniform(-0.4, 0.4, 3) - origin
            else:
                direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            ray = Ray(origin, direction)
            mine = ray_mesh_first_intersection(ray, unit_cube_mesh)
            reference = oracles.ray_mesh_brute_force(
                origin, direction, unit_cube_mesh.vertices, unit_cube_mesh.faces
            )
            if reference is None:
                assert mine is None
            else:
                hits += 1
                assert mine is not None
                np.testing.assert_allclose(mine, reference, atol=1e-9)
        assert hits >= 50  # the sampling actually exercised the hit path

    def test_matches_brute_force_on_curved_mesh(self):
        from spinenav import generate_phantom

        mesh = generate_phantom(3).mesh
        rng = np.random.default_rng(23)
        hits = 0
        for k in range(60):
            origin = rng.uniform(-120, 120, 3)
            if k % 2 == 0:
                direction = rng.uniform(-1, 1, 3) * np.array([25.0, 8.0, 6.0]) - origin
            else:
                direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            mine = ray_mesh_first_intersection(Ray(origin, direction), mesh)
            reference = oracles.ray_mesh_brute_force(origin, direction, mesh.vertices, mesh.faces)
            if reference is None:
                assert mine is None
            else:
                hits += 1
                np.testing.assert_allclose(mine, reference, atol=1e-9)
        assert hits >= 30

    def test_hit_lies_on_a_face_plane_with_minimal_parameter(self, unit_cube_mesh):
        rng = np.random.default_rng(29)
        for _ in range(50):
            origin = rng.uniform(-3, 3, 3)
            target = rng.uniform(-0.4, 0.4, 3)
            direction = target - origin
            direction /= np.linalg.norm(direction)
            hit = ray_mesh_first_intersection(Ray(origin, direction), unit_cube_mesh)
            assert hit is not None
            # on some face plane
            dists = [
                oracles.point_to_triangle_distance(hit, *unit_cube_mesh.vertices[f])
                for f in unit_cube_mesh.faces
            ]
            assert min(dists) < 1e-9
            # minimal parameter among all brute-force face hits
            reference = oracles.ray_mesh_brute_force(
                origin, direction, unit_cube_mesh.vertices, unit_cube_mesh.faces
            )
            t_mine = (hit - origin) @ direction
            t_ref = (reference - origin) @ direction
            assert t_mine <= t_ref + 1e-9


class TestRigidTransformType:
    def test_rejects_reflection(self):
        reflection = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidTransform(reflection, np.zeros(3))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 1.001, np.zeros(3))

    def test_inverse_composes_to_identity(self):
        t = random_rigid_transform(np.random.default_rng(5))
        ident = t.compose(t.inverse())
        np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(ident.translation, 0.0, atol=1e-9)

    def test_rotation_angle_small_angles(self):
        t = RigidTransform.from_axis_angle([0, 0, 1], 1e-7)
        assert t.rotation_angle_deg() == pytest.approx(1e-7, rel=1e-6)
