"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written with a different formulation than the
code under test: plane-based ray casting instead of Moller-Trumbore, pyramid
interpolation instead of Hermite tangents, grid search instead of closed-form
triangulation, a per-axis scalar Kalman filter instead of the 4-state one.
"""

from __future__ import annotations

import numpy as np


def ray_mesh_brute_force(origin, direction, vertices, faces, tol=1e-9):
    """First hit by plane intersection + barycentric containment per face."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    best_t, best_point = np.inf, None
    for face in faces:
        a, b, c = vertices[face]
        normal = np.cross(b - a, c - a)
        denom = normal @ direction
        if abs(denom) < 1e-12:
            continue
        t = (normal @ (a - origin)) / denom
        if t < -tol or t >= best_t:
            continue
        p = origin + t * direction
        # barycentric coordinates via the dot-product formulation
        v0, v1, v2 = b - a, c - a, p - a
        d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
        d20, d21 = v2 @ v0, v2 @ v1
        det = d00 * d11 - d01 * d01
        v = (d11 * d20 - d01 * d21) / det
        w = (d00 * d21 - d01 * d20) / det
        if v >= -tol and w >= -tol and v + w <= 1.0 + tol:
            if t < best_t - tol:
                best_t, best_point = t, origin + max(t, 0.0) * direction
    return best_point


def point_to_triangle_distance(p, a, b, c):
    """Exact unsigned distance from a point to a 3D triangle."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return np.linalg.norm(ap)
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return np.linalg.norm(bp)
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return np.linalg.norm(ap - v * ab)
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return np.linalg.norm(cp)
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return np.linalg.norm(ap - w * ac)
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.linalg.norm(p - (b + w * (c - b)))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return np.linalg.norm(p - (a + v * ab + w * ac))


def point_to_mesh_distance(p, vertices, faces):
    return min(point_to_triangle_distance(p, *vertices[f]) for f in faces)


def grid_triangulate(o1, d1, o2, d2, levels=9, grid=60):
    """Closest-point midpoint by iterative grid refinement over (s, t)."""
    s_lo, s_hi = -2000.0, 2000.0
    t_lo, t_hi = -2000.0, 2000.0
    best = (0.0, 0.0)
    for _ in range(levels):
        s_vals = np.linspace(s_lo, s_hi, grid)
        t_vals = np.linspace(t_lo, t_hi, grid)
        p1 = o1[None, :] + s_vals[:, None] * d1[None, :]
        p2 = o2[None, :] + t_vals[:, None] * d2[None, :]
        d2mat = ((p1[:, None, :] - p2[None, :, :]) ** 2).sum(axis=2)
        i, j = np.unravel_index(np.argmin(d2mat), d2mat.shape)
        best = (s_vals[i], t_vals[j])
        ds = (s_hi - s_lo) / (grid - 1)
        dt = (t_hi - t_lo) / (grid - 1)
        s_lo, s_hi = best[0] - 2 * ds, best[0] + 2 * ds
        t_lo, t_hi = best[1] - 2 * dt, best[1] + 2 * dt
    pa = o1 + best[0] * d1
    pb = o2 + best[1] * d2
    return 0.5 * (pa + pb), float(np.linalg.norm(pa - pb))


class ScalarKalman:
    """Per-axis position/velocity filter, the textbook two-state recursion."""

    def __init__(self, position, accel_noise=100.0, measurement_variance=1.0, init_var=1e4):
        self.x = np.array([position, 0.0])
        self.p = np.diag([init_var, init_var])
        self.q = accel_noise**2
        self.r = measurement_variance

    def update(self, z, dt):
        f = np.array([[1.0, dt], [0.0, 1.0]])
        q = self.q * np.array([[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]])
        x = f @ self.x
        p = f @ self.p @ f.T + q
        s = p[0, 0] + self.r
        k = p[:, 0] / s
        self.x = x + k * (z - x[0])
        ikh = np.eye(2) - np.outer(k, [1.0, 0.0])
        self.p = ikh @ p @ ikh.T + np.outer(k, k) * self.r
        return self.x[0]


def pinhole_project(fx, fy, cx, cy, point_cvs):
    """Forward pinhole model, the inverse of unprojection."""
    x, y, z = point_cvs
    return np.array([fx * x / z + cx, fy * y / z + cy])


def barry_goldman_point(points, knots, s):
    """Centripetal Catmull-Rom via the pyramid of linear interpolations."""
    points = np.asarray(points, dtype=np.float64)
    pfirst = 2.0 * points[0] - points[1]
    plast = 2.0 * points[-1] - points[-2]
    padded = np.vstack([pfirst, points, plast])
    pk = np.concatenate(
        [
            [knots[0] - np.linalg.norm(points[0] - pfirst) ** 0.5],
            knots,
            [knots[-1] + np.linalg.norm(plast - points[-1]) ** 0.5],
        ]
    )
    seg = int(np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(knots) - 2))
    p = padded[seg : seg + 4]
    t = pk[seg : seg + 4]

    def lerp(ta, tb, pa, pb):
        return ((tb - s) * pa + (s - ta) * pb) / (tb - ta)

    a1 = lerp(t[0], t[1], p[0], p[1])
    a2 = lerp(t[1], t[2], p[1], p[2])
    a3 = lerp(t[2], t[3], p[2], p[3])
    b1 = lerp(t[0], t[2], a1, a2)
    b2 = lerp(t[1], t[3], a2, a3)
    return lerp(t[1], t[2], b1, b2)
