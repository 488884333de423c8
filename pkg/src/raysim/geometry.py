"""Low-level vector and polygon geometry used by the tracer.

All points and directions are numpy float64 arrays of shape (3,).
Lengths are meters throughout.
"""

from __future__ import annotations

import numpy as np

EPS_UNIT = 1e-12


def vec(x, y, z) -> np.ndarray:
    return np.array([float(x), float(y), float(z)])


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (avoids np.cross dispatch overhead)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def norm(v) -> float:
    return float(np.linalg.norm(v))


def unit(v) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return np.asarray(v, dtype=float) / n


def is_unit(v, tol=EPS_UNIT) -> bool:
    return abs(np.linalg.norm(v) - 1.0) <= tol


def mirror_point(p, plane_point, normal) -> np.ndarray:
    """Reflect point p across the plane through plane_point with unit normal."""
    d = np.dot(p - plane_point, normal)
    return p - 2.0 * d * normal


def orthonormal_transverse(d) -> np.ndarray:
    """Some unit vector orthogonal to unit direction d (vertical-ish preferred)."""
    z = np.array([0.0, 0.0, 1.0])
    t = z - np.dot(z, d) * d
    n = np.linalg.norm(t)
    if n < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
        t = x - np.dot(x, d) * d
        n = np.linalg.norm(t)
    return t / n


class Polygon:
    """Planar polygon with a cached local 2D frame.

    vertices: (N, 3) array, coplanar within ``coplanar_tol``.
    normal: unit normal fixing the polygon's oriented side.
    """

    __slots__ = ("vertices", "normal", "origin", "u", "v", "verts2d", "_convex",
                 "aabb_min", "aabb_max", "edge_normals2d", "edge_offsets")

    def __init__(self, vertices, normal=None, coplanar_tol=1e-9):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 3:
            raise ValueError("polygon needs at least 3 3D vertices")
        if normal is None:
            normal = newell_normal(verts)
        self.normal = unit(normal)
        self.origin = verts[0].copy()
        heights = (verts - self.origin) @ self.normal
        if np.max(np.abs(heights)) > coplanar_tol:
            raise NonPlanarError(float(np.max(np.abs(heights))))
        self.vertices = verts
        self.u = unit(pick_tangent(self.normal, verts))
        self.v = np.cross(self.normal, self.u)
        rel = verts - self.origin
        self.verts2d = np.column_stack([rel @ self.u, rel @ self.v])
        self.aabb_min = verts.min(axis=0)
        self.aabb_max = verts.max(axis=0)
        self._convex = _is_convex(self.verts2d)
        if self._convex:
            nxt = np.roll(self.verts2d, -1, axis=0)
            edges = nxt - self.verts2d
            # inward normals for CCW ordering; flip set handled by sign test below
            nrm = np.column_stack([-edges[:, 1], edges[:, 0]])
            area2 = np.sum(self.verts2d[:, 0] * nxt[:, 1] - nxt[:, 0] * self.verts2d[:, 1])
            if area2 < 0:
                nrm = -nrm
            self.edge_normals2d = nrm
            self.edge_offsets = np.einsum("ij,ij->i", nrm, self.verts2d)
        else:
            self.edge_normals2d = None
            self.edge_offsets = None

    def to_local2d(self, p):
        rel = np.asarray(p) - self.origin
        return np.array([rel @ self.u, rel @ self.v])

    def contains(self, p, tol=1e-9) -> bool:
        """Point-in-polygon for a point assumed on (or near) the plane."""
        q = self.to_local2d(p)
        return self.contains2d(q, tol)

    def contains2d(self, q, tol=1e-9) -> bool:
        if self._convex:
            slack = self.edge_normals2d @ q - self.edge_offsets
            scale = np.linalg.norm(self.edge_normals2d, axis=1)
            return bool(np.all(slack >= -tol * scale))
        return _winding_contains(self.verts2d, q, tol)

    def contains2d_many(self, q, tol=1e-9) -> np.ndarray:
        """Vectorized membership for an (N, 2) array of local points."""
        q = np.asarray(q, dtype=float)
        if self._convex:
            scale = np.linalg.norm(self.edge_normals2d, axis=1)
            slack = q @ self.edge_normals2d.T - self.edge_offsets
            return np.all(slack >= -tol * scale, axis=1)
        return np.array([_winding_contains(self.verts2d, qi, tol) for qi in q])

    def plane_height(self, p) -> float:
        return float(np.dot(np.asarray(p) - self.origin, self.normal))

    def area(self) -> float:
        q = self.verts2d
        nxt = np.roll(q, -1, axis=0)
        return 0.5 * abs(float(np.sum(q[:, 0] * nxt[:, 1] - nxt[:, 0] * q[:, 1])))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


class NonPlanarError(ValueError):
    def __init__(self, deviation):
        self.deviation = deviation
        super().__init__(f"polygon vertices deviate from a plane by {deviation:.3e} m")


def newell_normal(verts) -> np.ndarray:
    v = np.asarray(verts, dtype=float)
    nxt = np.roll(v, -1, axis=0)
    n = np.array([
        np.sum((v[:, 1] - nxt[:, 1]) * (v[:, 2] + nxt[:, 2])),
        np.sum((v[:, 2] - nxt[:, 2]) * (v[:, 0] + nxt[:, 0])),
        np.sum((v[:, 0] - nxt[:, 0]) * (v[:, 1] + nxt[:, 1])),
    ])
    if np.linalg.norm(n) == 0:
        raise ValueError("degenerate polygon")
    return unit(n)


def pick_tangent(normal, verts):
    t = np.asarray(verts[1], dtype=float) - np.asarray(verts[0], dtype=float)
    t = t - np.dot(t, normal) * normal
    if np.linalg.norm(t) < 1e-12:
        t = np.array([1.0, 0.0, 0.0]) - normal[0] * normal
    return t


def _is_convex(q2d) -> bool:
    n = len(q2d)
    sign = 0
    for i in range(n):
        a, b, c = q2d[i], q2d[(i + 1) % n], q2d[(i + 2) % n]
        cr = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cr) < 1e-15:
            continue
        s = 1 if cr > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def _winding_contains(verts2d, q, tol) -> bool:
    # crossing-number test with a boundary-distance fallback for the tolerance band
    x, y = q
    n = len(verts2d)
    inside = False
    for i in range(n):
        x1, y1 = verts2d[i]
        x2, y2 = verts2d[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xt = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xt:
                inside = not inside
    if inside:
        return True
    for i in range(n):
        if _point_segment_dist2d(q, verts2d[i], verts2d[(i + 1) % n]) <= tol:
            return True
    return False


def _point_segment_dist2d(q, a, b) -> float:
    ab = b - a
    t = np.dot(q - a, ab) / max(np.dot(ab, ab), 1e-300)
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(a + t * ab - q))


def ray_plane_param(a, b, plane_point, normal):
    """Parameter t of the intersection of segment a->b with the plane, or None."""
    d = np.asarray(b) - np.asarray(a)
    denom = np.dot(d, normal)
    if abs(denom) < 1e-300:
        return None
    return float(np.dot(np.asarray(plane_point) - np.asarray(a), normal) / denom)


def segment_segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between 3D segments [p1,p2] and [q1,q2]."""
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = np.dot(d1, d1)
    e = np.dot(d2, d2)
    f = np.dot(d2, r)
    if a <= 1e-300 and e <= 1e-300:
        return norm(r)
    if a <= 1e-300:
        t = min(1.0, max(0.0, f / e))
        return norm(p1 - (q1 + t * d2))
    c = np.dot(d1, r)
    if e <= 1e-300:
        s = min(1.0, max(0.0, -c / a))
        return norm(p1 + s * d1 - q1)
    b = np.dot(d1, d2)
    denom = a * e - b * b
    s = min(1.0, max(0.0, (b * f - c * e) / denom)) if denom > 1e-300 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(1.0, max(0.0, -c / a))
    elif t > 1.0:
        t = 1.0
        s = min(1.0, max(0.0, (b - c) / a))
    return norm(p1 + s * d1 - (q1 + t * d2))


def point_polygon_distance(p, poly: Polygon) -> float:
    h = poly.plane_height(p)
    foot = np.asarray(p, dtype=float) - h * poly.normal
    if poly.contains(foot, tol=0.0):
        return abs(h)
    q = poly.to_local2d(foot)
    best = np.inf
    n = len(poly.verts2d)
    for i in range(n):
        d2d = _point_segment_dist2d(q, poly.verts2d[i], poly.verts2d[(i + 1) % n])
        best = min(best, np.hypot(d2d, h))
    return float(best)


def segment_polygon_distance(a, b, poly: Polygon, shrink: float = 0.0) -> float:
    """Minimum distance between segment [a,b] and a polygon.

    ``shrink`` trims both segment ends by that arclength so that contacts at
    the endpoints themselves (e.g. a reflection point on its own surface) do
    not register.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if shrink > 0.0:
        d = b - a
        length = np.linalg.norm(d)
        if length <= 2.0 * shrink:
            return np.inf
        a = a + d * (shrink / length)
        b = b - d * (shrink / length)
    ha = poly.plane_height(a)
    hb = poly.plane_height(b)
    if ha * hb < 0.0:
        t = ha / (ha - hb)
        hit = a + t * (b - a)
        if poly.contains(hit, tol=0.0):
            return 0.0
    best = min(point_polygon_distance(a, poly), point_polygon_distance(b, poly))
    n = len(poly.vertices)
    for i in range(n):
        best = min(best, segment_segment_distance(a, b, poly.vertices[i],
                                                  poly.vertices[(i + 1) % n]))
        if best == 0.0:
            break
    return float(best)


def aabb_segment_overlap(amin, amax, p, q, pad) -> bool:
    lo = np.minimum(p, q) - pad
    hi = np.maximum(p, q) + pad
    return bool(np.all(lo <= amax + pad) and np.all(hi >= amin - pad))


def polyline_position(points, speed, t):
    """Position and velocity on a polyline traversed at constant speed.

    Beyond the end the position clamps to the last point with zero velocity.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) == 1 or speed == 0.0:
        return pts[0].copy(), np.zeros(3)
    s = speed * t
    acc = 0.0
    for i in range(len(pts) - 1):
        leg = pts[i + 1] - pts[i]
        length = np.linalg.norm(leg)
        if length == 0.0:
            continue
        if s <= acc + length:
            u = leg / length
            return pts[i] + (s - acc) * u, speed * u
        acc += length
    return pts[-1].copy(), np.zeros(3)


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
