"""Screw-trajectory feedback quantities and the rod-bending template.

Angles and the A/B/C feedback triangle quantify how far the current tool
trajectory is from the planned one. Rod templating interpolates captured
screw-head positions with a centripetal Catmull-Rom spline and estimates the
rod length to cut. All inputs are expected in the preoperative frame; callers
map tracked poses through their registration result first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoincidentControlPoints, PointsTooClose
from .geometry import as_point, as_points, as_unit_vector

CENTRIPETAL_ALPHA = 0.5
MIN_CONTROL_SPACING = 1e-9  # mm
DEFAULT_ARC_TOLERANCE = 0.1  # mm


@dataclass(frozen=True)
class ScrewPlan:
    """Planned pedicle screw: entry point, insertion direction, length (mm)."""

    entry_point: np.ndarray
    trajectory: np.ndarray
    planned_length: float

    def __post_init__(self):
        object.__setattr__(self, "entry_point", as_point(self.entry_point))
        object.__setattr__(self, "trajectory", as_unit_vector(self.trajectory))
        if self.planned_length <= 0:
            raise ValueError("planned_length must be positive")


@dataclass(frozen=True)
class FeedbackTriangle:
    """The three display points visualizing angular deviation.

    A is the entry point; B and C sit at the same display distance along the
    current and the targeted trajectory.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    angle_deg: float


@dataclass
class RodTemplate:
    """Spline template through captured screw-head positions.

    knots are the centripetal parameter values of the control points;
    estimated_length is the arc length of the interpolating spline.
    """

    control_points: np.ndarray
    knots: np.ndarray
    estimated_length: float

    def __post_init__(self):
        self.control_points = as_points(self.control_points)
        self.knots = np.asarray(self.knots, dtype=np.float64).reshape(-1)
        if len(self.control_points) < 2:
            raise ValueError("a rod template needs at least 2 control points")
        if len(self.knots) != len(self.control_points):
            raise ValueError("one knot per control point required")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        chord = float(np.linalg.norm(self.control_points[-1] - self.control_points[0]))
        if self.estimated_length < 0 or self.estimated_length < chord - DEFAULT_ARC_TOLERANCE:
            raise ValueError("estimated_length shorter than the endpoint chord")


def trajectory_angle(current, target) -> float:
    """3D angle between two unit directions, in degrees within [0, 180]."""
    c = as_unit_vector(current)
    t = as_unit_vector(target)
    return float(np.degrees(np.arccos(np.clip(c @ t, -1.0, 1.0))))


def feedback_triangle(entry, current, target, d: float = 50.0) -> FeedbackTriangle:
    """Build the A/B/C display triangle at display distance ``d`` (mm)."""
    if d <= 0:
        raise ValueError("display distance must be positive")
    a = as_point(entry)
    c_dir = as_unit_vector(current)
    t_dir = as_unit_vector(target)
    return FeedbackTriangle(
        a=a,
        b=a + d * c_dir,
        c=a + d * t_dir,
        angle_deg=trajectory_angle(c_dir, t_dir),
    )


def centripetal_knots(control_points: np.ndarray) -> np.ndarray:
    """Cumulative chord^alpha parameter values (alpha = 0.5, centripetal).

    Raises:
        CoincidentControlPoints: consecutive points closer than 1e-9 mm.
    """
    pts = as_points(control_points)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg <= MIN_CONTROL_SPACING):
        bad = int(np.argmax(seg <= MIN_CONTROL_SPACING))
        raise CoincidentControlPoints(
            f"control points {bad} and {bad + 1} coincide (distance {seg[bad]:.3g} mm)"
        )
    return np.concatenate([[0.0], np.cumsum(seg**CENTRIPETAL_ALPHA)])


def _with_phantom_endpoints(pts: np.ndarray, knots: np.ndarray):
    """Pad with reflected endpoint phantoms so the curve spans every control point."""
    p_first = 2.0 * pts[0] - pts[1]
    p_last = 2.0 * pts[-1] - pts[-2]
    padded = np.vstack([p_first, pts, p_last])
    t_first = knots[0] - np.linalg.norm(pts[0] - p_first) ** CENTRIPETAL_ALPHA
    t_last = knots[-1] + np.linalg.norm(p_last - pts[-1]) ** CENTRIPETAL_ALPHA
    padded_knots = np.concatenate([[t_first], knots, [t_last]])
    return padded, padded_knots


def catmull_rom_centripetal(control_points, t) -> np.ndarray:
    """Evaluate the centripetal Catmull-Rom curve through the control points.

    ``t`` (scalar or array) in [0, 1] is mapped linearly over the centripetal
    knot range of the real control points, so t=0 and t=1 are the first and
    last point. Interior segments use the standard non-uniform tangents in
    cubic Hermite form; endpoint segments get reflected phantom points.

    Returns (3,) for scalar t, else (len(t), 3).
    """
    pts = as_points(control_points)
    if len(pts) < 2:
        raise ValueError("need at least 2 control points")
    knots = centripetal_knots(pts)
    padded, pk = _with_phantom_endpoints(pts, knots)

    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    s = knots[0] + t_arr * (knots[-1] - knots[0])
    # segment index into the real knots: knots[i] <= s < knots[i+1]
    seg = np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(knots) - 2)

    # padded index of the segment start is seg + 1
    p0 = padded[seg]
    p1 = padded[seg + 1]
    p2 = padded[seg + 2]
    p3 = padded[seg + 3]
    t0 = pk[seg]
    t1 = pk[seg + 1]
    t2 = pk[seg + 2]
    t3 = pk[seg + 3]

    dt = t2 - t1
    m1 = dt[:, None] * (
        (p1 - p0) / (t1 - t0)[:, None]
        - (p2 - p0) / (t2 - t0)[:, None]
        + (p2 - p1) / dt[:, None]
    )
    m2 = dt[:, None] * (
        (p2 - p1) / dt[:, None]
        - (p3 - p1) / (t3 - t1)[:, None]
        + (p3 - p2) / (t3 - t2)[:, None]
    )
    u = ((s - t1) / dt)[:, None]
    u2 = u * u
    u3 = u2 * u
    out = (
        (2.0 * u3 - 3.0 * u2 + 1.0) * p1
        + (u3 - 2.0 * u2 + u) * m1
        + (-2.0 * u3 + 3.0 * u2) * p2
        + (u3 - u2) * m2
    )
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def _adaptive_segment_length(evaluate, ta: float, tb: float, pa, pb, tol: float, depth: int) -> float:
    tm = 0.5 * (ta + tb)
    pm = evaluate(tm)
    chord = np.linalg.norm(pb - pa)
    refined = np.linalg.norm(pm - pa) + np.linalg.norm(pb - pm)
    if refined - chord < tol or depth >= 40:
        return float(refined)
    half = 0.5 * tol
    return _adaptive_segment_length(evaluate, ta, tm, pa, pm, half, depth + 1) + _adaptive_segment_length(
        evaluate, tm, tb, pm, pb, half, depth + 1
    )


def _spline_arc_length(pts: np.ndarray, knots: np.ndarray, tolerance: float) -> float:
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if len(pts) == 2:
        return float(np.linalg.norm(pts[1] - pts[0]))

    def evaluate(t: float) -> np.ndarray:
        return catmull_rom_centripetal(pts, t)

    span = knots[-1] - knots[0]
    total = 0.0
    tol_per_segment = tolerance / (len(pts) - 1) * 0.25
    for i in range(len(pts) - 1):
        ta = (knots[i] - knots[0]) / span
        tb = (knots[i + 1] - knots[0]) / span
        total += _adaptive_segment_length(
            evaluate, ta, tb, pts[i], pts[i + 1], tol_per_segment, 0
        )
    return float(total)


def rod_length(template: RodTemplate, tolerance: float = DEFAULT_ARC_TOLERANCE) -> float:
    """Arc length of the template spline by adaptive chord subdivision.

    Each knot span is split recursively until replacing a chord by its two
    midpoint chords changes the length by less than the (halving) tolerance.
    The result is never below the straight-line endpoint distance.
    """
    return _spline_arc_length(template.control_points, template.knots, tolerance)


def build_rod_template(control_points, tolerance: float = DEFAULT_ARC_TOLERANCE) -> RodTemplate:
    """Assemble a RodTemplate: centripetal knots plus the length estimate."""
    pts = as_points(control_points)
    if len(pts) < 2:
        raise ValueError("a rod template needs at least 2 control points")
    knots = centripetal_knots(pts)
    return RodTemplate(pts, knots, _spline_arc_length(pts, knots, tolerance))


def screw_head_capture(tip_positions, min_separation: float) -> np.ndarray:
    """Validate an ordered screw-head capture sequence.

    Raises:
        PointsTooClose: consecutive captures closer than ``min_separation``;
            the exception's ``index`` names the offending (second) point.
    """
    arr = np.asarray(tip_positions, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3))
    pts = as_points(arr)
    if len(pts) < 2:
        return pts
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    too_close = seg < min_separation
    if too_close.any():
        bad = int(np.argmax(too_close)) + 1
        raise PointsTooClose(
            f"capture {bad} is {seg[bad - 1]:.3g} mm from its predecessor "
            f"(minimum {min_separation} mm)",
            index=bad,
        )
    return pts
