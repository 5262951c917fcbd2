"""Analytic primitives: vertical prisms and capsules.

Every object in the tabletop world is a union of vertical prisms whose
footprint is a rectangle (optionally yawed), a disk, or an annulus.  The
robot is a union of capsules.  All functions are vectorised over points or
rays with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

INF = np.inf


@dataclass(frozen=True)
class Prism:
    """Vertical extrusion of a 2-D footprint between ``z0`` and ``z1``.

    ``kind`` is ``"box"`` (half sizes ``a`` x ``b`` in the yawed frame),
    ``"cyl"`` (radius ``a``) or ``"ring"`` (outer radius ``a``, inner ``b``).
    """

    kind: str
    x: float
    y: float
    z0: float
    z1: float
    a: float
    b: float = 0.0
    yaw: float = 0.0
    label: Optional[str] = None

    def moved(self, dx: float, dy: float, dz: float = 0.0) -> "Prism":
        return Prism(self.kind, self.x + dx, self.y + dy, self.z0 + dz, self.z1 + dz,
                     self.a, self.b, self.yaw, self.label)

    @property
    def half_width_x(self) -> float:
        """Half extent of the footprint along the world x axis."""
        if self.kind == "box":
            c, s = abs(np.cos(self.yaw)), abs(np.sin(self.yaw))
            return float(self.a * c + self.b * s)
        return float(self.a)

    @property
    def half_width_y(self) -> float:
        if self.kind == "box":
            c, s = abs(np.cos(self.yaw)), abs(np.sin(self.yaw))
            return float(self.a * s + self.b * c)
        return float(self.a)


@dataclass(frozen=True)
class Capsule:
    p0: tuple[float, float, float]
    p1: tuple[float, float, float]
    r: float
    label: str = "robot"


def _local_xy(prism: Prism, px, py):
    dx = np.asarray(px, dtype=float) - prism.x
    dy = np.asarray(py, dtype=float) - prism.y
    if prism.kind == "box" and prism.yaw != 0.0:
        c, s = np.cos(prism.yaw), np.sin(prism.yaw)
        return c * dx + s * dy, -s * dx + c * dy
    return dx, dy


def sdf2(prism: Prism, px, py) -> np.ndarray:
    """Exact signed distance from ``(px, py)`` to the prism footprint."""
    lx, ly = _local_xy(prism, px, py)
    if prism.kind == "box":
        qx = np.abs(lx) - prism.a
        qy = np.abs(ly) - prism.b
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        return outside + np.minimum(np.maximum(qx, qy), 0.0)
    rho = np.hypot(lx, ly)
    if prism.kind == "cyl":
        return rho - prism.a
    mid = 0.5 * (prism.a + prism.b)
    half = 0.5 * (prism.a - prism.b)
    return np.abs(rho - mid) - half


def sdf3(prism: Prism, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    d2 = sdf2(prism, pts[:, 0], pts[:, 1])
    zc = 0.5 * (prism.z0 + prism.z1)
    hz = 0.5 * (prism.z1 - prism.z0)
    dz = np.abs(pts[:, 2] - zc) - hz
    outside = np.hypot(np.maximum(d2, 0.0), np.maximum(dz, 0.0))
    return outside + np.minimum(np.maximum(d2, dz), 0.0)


def _circle_interval(ox, oy, dx, dy, r):
    """Ray parameter interval inside a circle of radius r at the origin (2-D)."""
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - r * r
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / a
        t1 = (-b + sq) / a
    vertical = a < 1e-18
    inside_v = c <= 0.0
    t0 = np.where(vertical, np.where(inside_v, -INF, INF), np.where(disc >= 0, t0, INF))
    t1 = np.where(vertical, np.where(inside_v, INF, -INF), np.where(disc >= 0, t1, -INF))
    return t0, t1


def _slab(o, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (lo - o) / d
        tb = (hi - o) / d
    t0 = np.minimum(ta, tb)
    t1 = np.maximum(ta, tb)
    parallel = np.abs(d) < 1e-15
    inside = (o >= lo) & (o <= hi)
    t0 = np.where(parallel, np.where(inside, -INF, INF), t0)
    t1 = np.where(parallel, np.where(inside, INF, -INF), t1)
    return t0, t1


def ray_hit(prism: Prism, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """First positive ray parameter at which each ray enters the prism (inf if none)."""
    ox, oy, oz = origins[:, 0], origins[:, 1], origins[:, 2]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    z0, z1 = _slab(oz, dz, prism.z0, prism.z1)
    lx, ly = _local_xy(prism, ox, oy)
    if prism.kind == "box":
        c, s = np.cos(prism.yaw), np.sin(prism.yaw)
        ldx, ldy = c * dx + s * dy, -s * dx + c * dy
        ax0, ax1 = _slab(lx, ldx, -prism.a, prism.a)
        ay0, ay1 = _slab(ly, ldy, -prism.b, prism.b)
        intervals = [(np.maximum(ax0, ay0), np.minimum(ax1, ay1))]
    elif prism.kind == "cyl":
        intervals = [_circle_interval(lx, ly, dx, dy, prism.a)]
    else:
        o0, o1 = _circle_interval(lx, ly, dx, dy, prism.a)
        i0, i1 = _circle_interval(lx, ly, dx, dy, prism.b)
        hits_inner = i0 <= i1
        intervals = [
            (o0, np.where(hits_inner, np.minimum(i0, o1), o1)),
            (np.where(hits_inner, np.maximum(i1, o0), INF), np.where(hits_inner, o1, -INF)),
        ]
    best = np.full(ox.shape, INF)
    for f0, f1 in intervals:
        t0 = np.maximum(f0, z0)
        t1 = np.minimum(f1, z1)
        ok = (t0 <= t1) & (t1 > 0.0)
        t = np.where(ok, np.maximum(t0, 0.0), INF)
        best = np.minimum(best, t)
    return best


def ray_hit_capsule(cap: Capsule, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Ray/capsule intersection for unit-length ray directions."""
    pa = np.asarray(cap.p0, dtype=float)
    pb = np.asarray(cap.p1, dtype=float)
    r = cap.r
    ba = pb - pa
    oa = origins - pa
    baba = ba @ ba
    bard = dirs @ ba
    baoa = oa @ ba
    rdoa = np.einsum("ij,ij->i", dirs, oa)
    oaoa = np.einsum("ij,ij->i", oa, oa)
    a = baba - bard * bard
    b = baba * rdoa - baoa * bard
    c = baba * oaoa - baoa * baoa - r * r * baba
    h = b * b - a * c
    best = np.full(len(origins), INF)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_body = (-b - np.sqrt(np.maximum(h, 0.0))) / a
    y = baoa + t_body * bard
    body_ok = (h >= 0) & (a > 1e-15) & (y > 0) & (y < baba) & (t_body > 0)
    best = np.where(body_ok, t_body, best)
    # spherical caps
    for center in (pa, pb):
        oc = origins - center
        bb = np.einsum("ij,ij->i", dirs, oc)
        cc = np.einsum("ij,ij->i", oc, oc) - r * r
        hh = bb * bb - cc
        tc = -bb - np.sqrt(np.maximum(hh, 0.0))
        ok = (hh >= 0) & (tc > 0)
        best = np.where(ok & (tc < best), tc, best)
    return best


def segment_distance(pts: np.ndarray, p0, p1) -> np.ndarray:
    """Euclidean distance from each point to the segment p0-p1."""
    pts = np.asarray(pts, dtype=float)
    a = np.asarray(p0, dtype=float)
    ab = np.asarray(p1, dtype=float) - a
    denom = float(ab @ ab)
    ap = pts - a
    if denom <= 0.0:
        return np.linalg.norm(ap, axis=-1)
    t = np.clip(ap @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(ap - t[..., None] * ab, axis=-1)


def capsule_sdf(cap: Capsule, pts: np.ndarray) -> np.ndarray:
    return segment_distance(pts, cap.p0, cap.p1) - cap.r


def _rect_corners(p: Prism) -> np.ndarray:
    c, s = np.cos(p.yaw), np.sin(p.yaw)
    ux, uy = np.array([c, s]), np.array([-s, c])
    ctr = np.array([p.x, p.y])
    return np.array([ctr + sx * p.a * ux + sy * p.b * uy
                     for sx, sy in ((1, 1), (1, -1), (-1, -1), (-1, 1))])


def _rects_overlap(p: Prism, q: Prism, eps: float) -> bool:
    cp, cq = _rect_corners(p), _rect_corners(q)
    axes = []
    for poly in (cp, cq):
        for i in range(2):
            e = poly[i + 1] - poly[i]
            axes.append(np.array([-e[1], e[0]]) / np.hypot(e[0], e[1]))
    for ax in axes:
        a, b = cp @ ax, cq @ ax
        if a.max() <= b.min() + eps or b.max() <= a.min() + eps:
            return False
    return True


def footprints_overlap(p: Prism, q: Prism, eps: float = 1e-9) -> bool:
    """True when the footprints of two prisms share interior area."""
    if p.kind in ("cyl", "ring") and q.kind in ("cyl", "ring"):
        dist = float(np.hypot(p.x - q.x, p.y - q.y))
        if dist >= p.a + q.a - eps:
            return False
        # a disk sitting entirely inside the other's hole does not overlap it
        if p.kind == "ring" and dist + q.a <= p.b + eps:
            return False
        if q.kind == "ring" and dist + p.a <= q.b + eps:
            return False
        return True
    if p.kind == "cyl":
        return float(sdf2(q, p.x, p.y)) < p.a - eps
    if q.kind == "cyl":
        return float(sdf2(p, q.x, q.y)) < q.a - eps
    if p.kind == "box" and q.kind == "box":
        return _rects_overlap(p, q, eps)
    box, ring = (p, q) if p.kind == "box" else (q, p)
    if float(sdf2(box, ring.x, ring.y)) >= ring.a - eps:
        return False
    corners = _rect_corners(box)
    far = float(np.max(np.hypot(corners[:, 0] - ring.x, corners[:, 1] - ring.y)))
    return far > ring.b + eps


def z_overlap(p: Prism, z0: float, z1: float, eps: float = 1e-9) -> bool:
    return p.z0 < z1 - eps and z0 < p.z1 - eps
