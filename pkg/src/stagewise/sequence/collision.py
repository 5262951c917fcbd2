"""Point-cloud collision queries against the arm capsules and a carried object's hull."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from stagewise import instrument
from stagewise.sequence.cloud import PointCloud, distance_to_capsules
from stagewise.world.robot import EEPose, JointConfig, forward_kinematics, robot_capsules

CLEARANCE = 0.005


def point_triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Distance from each point in ``p`` (N, 3) to triangle abc (closest-feature method)."""
    ab, ac = b - a, c - a
    ap = p - a
    d1, d2 = ap @ ab, ap @ ac
    bp = p - b
    d3, d4 = bp @ ab, bp @ ac
    cp = p - c
    d5, d6 = cp @ ab, cp @ ac
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_face = vb / denom
        w_face = vc / denom
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))

    closest = a + v_face[:, None] * ab + w_face[:, None] * ac
    regions = [
        ((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, p.shape)),
        ((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, p.shape)),
        ((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, p.shape)),
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab),
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac),
        ((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + t_bc[:, None] * (c - b)),
    ]
    # Voronoi regions only meet on boundaries, so first match wins
    done = np.zeros(len(p), dtype=bool)
    out = closest.copy()
    for cond, pt in regions:
        sel = cond & ~done
        out[sel] = pt[sel]
        done |= sel
    return np.linalg.norm(p - out, axis=1)


@dataclass(frozen=True)
class AttachedHull:
    """Convex hull of a carried object, stored relative to the end effector."""

    vertices: np.ndarray  # (M, 3) in the end-effector frame
    triangles: np.ndarray  # (T, 3) vertex indices
    equations: np.ndarray  # (F, 4) outward facet planes n.x + d <= 0 inside

    @classmethod
    def from_points(cls, points: np.ndarray, ee: EEPose) -> Optional["AttachedHull"]:
        rel = np.asarray(points, dtype=float) - ee.as_array()
        if len(rel) < 4:
            return None
        try:
            hull = ConvexHull(rel)
        except QhullError:
            # flat or linear object clouds: thicken along every axis so the hull is well defined
            pad = 0.001 * np.concatenate([np.eye(3), -np.eye(3)])
            rel = np.concatenate([rel + j for j in pad])
            hull = ConvexHull(rel)
        return cls(rel[hull.vertices], _reindex(hull.simplices, hull.vertices), hull.equations)

    def posed(self, ee: EEPose) -> tuple[np.ndarray, np.ndarray]:
        """Vertices and facet planes at ``ee`` (the gripper never rotates)."""
        t = ee.as_array()
        eq = self.equations.copy()
        eq[:, 3] -= eq[:, :3] @ t
        return self.vertices + t, eq

    def distance(self, points: np.ndarray, ee: EEPose) -> np.ndarray:
        verts, eq = self.posed(ee)
        pts = np.asarray(points, dtype=float)
        d = np.full(len(pts), np.inf)
        inside = np.all(pts @ eq[:, :3].T + eq[:, 3] <= 1e-12, axis=1)
        for tri in self.triangles:
            d = np.minimum(d, point_triangle_distance(pts, verts[tri[0]], verts[tri[1]], verts[tri[2]]))
        return np.where(inside, 0.0, d)


def _reindex(simplices: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    lookup = {int(v): i for i, v in enumerate(vertices)}
    return np.vectorize(lambda v: lookup[int(v)])(simplices)


def _aabb_filter(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.all((points >= lo) & (points <= hi), axis=1)


def collision_check(q: JointConfig, scene: PointCloud, attached: Optional[AttachedHull] = None,
                    clearance: float = CLEARANCE) -> bool:
    """True when ``q`` is collision-free: every scene point is farther than ``clearance``
    from the arm capsules and from the carried object's hull."""
    instrument.hit("sequence.collision_check")
    return config_free(q, scene.points, attached, clearance)


def config_free(q: JointConfig, points: np.ndarray, attached: Optional[AttachedHull] = None,
                clearance: float = CLEARANCE, index: Optional[cKDTree] = None) -> bool:
    """Like collision_check on raw points; ``index`` is an optional k-d tree over ``points``."""
    if len(points) == 0:
        return True
    ee = forward_kinematics(q)
    caps = robot_capsules(q, ee)
    for cap in caps:
        ends = np.array([cap.p0, cap.p1])
        pad = cap.r + clearance
        if index is not None:
            mid = ends.mean(axis=0)
            idx = index.query_ball_point(mid, 0.5 * float(np.linalg.norm(ends[1] - ends[0])) + pad)
            if not idx:
                continue
            near_pts = points[idx]
        else:
            near = _aabb_filter(points, ends.min(axis=0) - pad, ends.max(axis=0) + pad)
            if not near.any():
                continue
            near_pts = points[near]
        if np.any(distance_to_capsules(near_pts, [cap]) <= clearance):
            return False
    if attached is not None:
        verts, _ = attached.posed(ee)
        if index is not None:
            c = verts.mean(axis=0)
            idx = index.query_ball_point(c, float(np.linalg.norm(verts - c, axis=1).max()) + clearance)
            near_pts = points[idx] if idx else points[:0]
        else:
            near_pts = points[_aabb_filter(points, verts.min(axis=0) - clearance, verts.max(axis=0) + clearance)]
        if len(near_pts) and np.any(attached.distance(near_pts, ee) <= clearance):
            return False
    return True
