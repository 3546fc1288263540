import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spinenav import RigidTransform
from spinenav.tracking import CameraModel, StereoRig

FIXTURES = Path(__file__).parent / "fixtures"


def make_rig(baseline: float = 100.0, fx: float = 450.0) -> StereoRig:
    """Forward-facing rectified pair at the low resolution under test."""

    def cam(x_offset: float) -> CameraModel:
        return CameraModel(
            fx=fx,
            fy=fx,
            cx=320.0,
            cy=240.0,
            image_width=640,
            image_height=480,
            cam_to_rig=RigidTransform(np.eye(3), np.array([x_offset, 0.0, 0.0])),
        )

    return StereoRig(left=cam(-baseline / 2.0), right=cam(baseline / 2.0))


@pytest.fixture(scope="session")
def rig() -> StereoRig:
    return make_rig()


def random_rigid_transform(rng: np.random.Generator, max_angle: float = 180.0, max_translation: float = 500.0) -> RigidTransform:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    translation = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform.from_axis_angle(axis, angle, translation)


@pytest.fixture(scope="session")
def unit_cube_mesh():
    """Axis-aligned unit cube centered at the origin, 12 triangles."""
    from spinenav import TriangleMesh

    h = 0.5
    v = np.array(
        [
            [-h, -h, -h], [h, -h, -h], [h, h, -h], [-h, h, -h],
            [-h, -h, h], [h, -h, h], [h, h, h], [-h, h, h],
        ]
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # z = -h
            [4, 5, 6], [4, 6, 7],  # z = +h
            [0, 1, 5], [0, 5, 4],  # y = -h
            [2, 3, 7], [2, 7, 6],  # y = +h
            [1, 2, 6], [1, 6, 5],  # x = +h
            [0, 4, 7], [0, 7, 3],  # x = -h
        ]
    )
    return TriangleMesh(v, f)
