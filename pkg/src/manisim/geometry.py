"""Geometric primitives and the continuous criteria driven by them.

Everything here is a pure function of immutable values: planar poses,
footprint polygons, 3D boxes, sight segments and the adaptive vision cone.
The two workhorse criteria are

* ``polygon_overlap_length`` -- perimeter of the mutual-intersection region
  of two footprints, the planar collision criterion (zero exactly when the
  interiors are disjoint, continuous as a body slides around), and
* ``segment_occlusion_length`` / ``cone_occlusion_length`` -- how much of a
  sight line (or of a bundle of cone surface rays) runs inside obstacles.

Agents differentiate these criteria numerically with
``finite_diff_gradient``; keeping the criteria continuous is what makes
those gradients usable as repulsion/visibility contributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from shapely.geometry import Polygon as _ShapelyPolygon
from shapely.geometry.base import BaseGeometry

TWO_PI = 2.0 * math.pi

# Default central-difference steps: (x meters, y meters, theta radians).
DEFAULT_FD_STEPS = (1e-4, 1e-4, 1e-4)

# Default number of surface rays used to sample cone occlusion.
DEFAULT_CONE_RAYS = 16


class CriterionEvaluationError(RuntimeError):
    """A criterion returned a non-finite value during differentiation."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]; the result differs from ``a`` by 2*pi*k."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    wrapped = math.remainder(a, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class PlanarPose:
    """Position and heading of a body moving in the floor plane."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def transform_points(self, local_xy: np.ndarray) -> np.ndarray:
        """Map (n, 2) local-frame points into the world frame."""
        pts = np.asarray(local_xy, dtype=float)
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def moved(self, dx: float, dy: float, dtheta: float) -> "PlanarPose":
        return PlanarPose(self.x + dx, self.y + dy, wrap_angle(self.theta + dtheta))


class Polygon2:
    """Simple planar polygon, vertices in counter-clockwise order (meters)."""

    __slots__ = ("vertices", "_shapely")

    def __init__(self, vertices: Sequence[Sequence[float]] | np.ndarray):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("polygon needs at least 3 two-dimensional vertices")
        if not np.all(np.isfinite(verts)):
            raise ValueError("polygon vertices must be finite")
        poly = _ShapelyPolygon(verts)
        if not poly.is_valid:
            raise ValueError("polygon is invalid (self-intersecting or degenerate)")
        if poly.area <= 0.0:
            raise ValueError("polygon must enclose a nonzero area")
        # Normalize winding to counter-clockwise (shapely signed area test).
        if poly.exterior.is_ccw:
            self.vertices = verts
        else:
            self.vertices = verts[::-1].copy()
        self._shapely = _ShapelyPolygon(self.vertices)

    @property
    def area(self) -> float:
        return float(self._shapely.area)

    @property
    def perimeter(self) -> float:
        return float(self._shapely.length)

    def transformed(self, pose: PlanarPose) -> "Polygon2":
        """This polygon carried by a body at ``pose`` (vertices are local)."""
        return Polygon2(pose.transform_points(self.vertices))

    @staticmethod
    def rectangle(width: float, height: float, center: Sequence[float] = (0.0, 0.0)) -> "Polygon2":
        """Axis-aligned rectangle helper (width along x, height along y)."""
        cx, cy = center
        hw, hh = width / 2.0, height / 2.0
        return Polygon2(
            [
                (cx - hw, cy - hh),
                (cx + hw, cy - hh),
                (cx + hw, cy + hh),
                (cx - hw, cy + hh),
            ]
        )


def _polygonal_perimeter(geom: BaseGeometry) -> float:
    """Sum of boundary lengths over the polygonal parts of a geometry.

    Intersection results may contain lower-dimensional pieces (touching
    edges, isolated points); those carry no interior overlap and count 0.
    """
    if geom.is_empty:
        return 0.0
    if geom.geom_type == "Polygon":
        return float(geom.length) if geom.area > 0.0 else 0.0
    if geom.geom_type in ("MultiPolygon", "GeometryCollection"):
        return sum(_polygonal_perimeter(part) for part in geom.geoms)
    return 0.0


def polygon_overlap_length(a: Polygon2, b: Polygon2) -> float:
    """Perimeter of the intersection region of two footprints.

    Zero exactly when the interiors are disjoint, symmetric in its
    arguments and continuous as either polygon moves, which is what the
    repulsion gradient needs.
    """
    return _polygonal_perimeter(a._shapely.intersection(b._shapely))


@dataclass(frozen=True)
class Segment3:
    """Straight segment in space; ``a == b`` (length zero) is allowed."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))


@dataclass(frozen=True)
class Box3:
    """Oriented box obstacle: center, positive half extents, yaw about z."""

    center: np.ndarray
    half_extents: np.ndarray
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        he = np.asarray(self.half_extents, dtype=float).reshape(3)
        if not np.all(he > 0.0):
            raise ValueError("box half extents must be positive")
        object.__setattr__(self, "half_extents", he)

    def _to_local(self, points: np.ndarray) -> np.ndarray:
        c, s = math.cos(-self.yaw), math.sin(-self.yaw)
        p = np.asarray(points, dtype=float) - self.center
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return p @ rot.T

    def segment_interval(self, seg: Segment3) -> tuple[float, float] | None:
        """Parameter interval [t0, t1] of ``seg`` inside the box, or None.

        Classic slab clipping in the box-local frame; degenerate segments
        report the full interval when their point lies inside.
        """
        a = self._to_local(seg.a)
        d = self._to_local(seg.b) - a
        t0, t1 = 0.0, 1.0
        for k in range(3):
            lo, hi = -self.half_extents[k], self.half_extents[k]
            if abs(d[k]) < 1e-15:
                if a[k] < lo or a[k] > hi:
                    return None
                continue
            ta = (lo - a[k]) / d[k]
            tb = (hi - a[k]) / d[k]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 > t1:
                return None
        return (t0, t1)


def _union_measure(intervals: list[tuple[float, float]]) -> float:
    """Total measure of a union of [t0, t1] intervals (no double counting)."""
    if not intervals:
        return 0.0
    intervals.sort()
    total = 0.0
    cur_lo, cur_hi = intervals[0]
    for lo, hi in intervals[1:]:
        if lo > cur_hi:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    total += cur_hi - cur_lo
    return total


def segment_occlusion_length(seg: Segment3, scene: Sequence[Box3]) -> float:
    """Length of the part of ``seg`` lying inside the union of the boxes."""
    length = seg.length
    if length == 0.0:
        return 0.0
    intervals = []
    for box in scene:
        iv = box.segment_interval(seg)
        if iv is not None and iv[1] > iv[0]:
            intervals.append(iv)
    return _union_measure(intervals) * length


@dataclass(frozen=True)
class Cone:
    """Vision cone: vertex at the eye, axis toward the looked-at point.

    ``aperture`` is the half angle between axis and surface; it is the
    blackboard-adjustable part and must stay inside [eps_min, eps_max].
    """

    vertex: np.ndarray
    axis: np.ndarray
    aperture: float
    length: float
    eps_min: float = math.radians(2.0)
    eps_max: float = math.radians(30.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertex", np.asarray(self.vertex, dtype=float).reshape(3))
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"cone axis must be unit length (norm {norm})")
        object.__setattr__(self, "axis", axis)
        if not (self.eps_min <= self.aperture <= self.eps_max):
            raise ValueError(
                f"cone aperture {self.aperture} outside [{self.eps_min}, {self.eps_max}]"
            )

    def surface_rays(self, n_rays: int) -> list[Segment3]:
        """Vertex-to-base-rim segments, evenly spaced in azimuth."""
        if n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        u, v = _orthonormal_basis(self.axis)
        base_center = self.vertex + self.axis * self.length
        radius = self.length * math.tan(self.aperture)
        rays = []
        for i in range(n_rays):
            phi = TWO_PI * i / n_rays
            rim = base_center + radius * (math.cos(phi) * u + math.sin(phi) * v)
            rays.append(Segment3(self.vertex, rim))
        return rays


def _orthonormal_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane orthogonal to ``axis``.

    Anchored on the world vertical so the basis varies smoothly while the
    axis stays away from straight up/down.
    """
    up = np.array([0.0, 0.0, 1.0])
    if abs(axis @ up) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, up)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def cone_occlusion_length(cone: Cone, scene: Sequence[Box3], n_rays: int = DEFAULT_CONE_RAYS) -> float:
    """Mean occluded length over ``n_rays`` cone surface rays.

    Sampling keeps the criterion cheap and continuous; it is deterministic
    for a fixed ray count.
    """
    rays = cone.surface_rays(n_rays)
    return sum(segment_occlusion_length(ray, scene) for ray in rays) / n_rays


def finite_diff_gradient(
    criterion: Callable[[PlanarPose], float],
    pose: PlanarPose,
    steps: Sequence[float] = DEFAULT_FD_STEPS,
) -> np.ndarray:
    """Central-difference gradient of a pose criterion: (d/dx, d/dy, d/dtheta)."""
    hx, hy, ht = steps
    if hx <= 0 or hy <= 0 or ht <= 0:
        raise ValueError("finite-difference steps must be positive")
    grad = np.empty(3)
    probes = (
        (PlanarPose(pose.x + hx, pose.y, pose.theta), PlanarPose(pose.x - hx, pose.y, pose.theta), hx),
        (PlanarPose(pose.x, pose.y + hy, pose.theta), PlanarPose(pose.x, pose.y - hy, pose.theta), hy),
        (PlanarPose(pose.x, pose.y, pose.theta + ht), PlanarPose(pose.x, pose.y, pose.theta - ht), ht),
    )
    for k, (hi, lo, h) in enumerate(probes):
        f_hi = criterion(hi)
        f_lo = criterion(lo)
        if not (math.isfinite(f_hi) and math.isfinite(f_lo)):
            raise CriterionEvaluationError(
                f"criterion returned non-finite value near {pose} (component {k})"
            )
        grad[k] = (f_hi - f_lo) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class Scene:
    """Static environment: planar footprint obstacles and 3D occluder boxes.

    Polygons feed the collision criterion; boxes feed the occlusion
    criteria.  A box can appear in both roles by also listing its floor
    silhouette as a polygon.
    """

    polygons: tuple[Polygon2, ...] = ()
    boxes: tuple[Box3, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "polygons", tuple(self.polygons))
        object.__setattr__(self, "boxes", tuple(self.boxes))
