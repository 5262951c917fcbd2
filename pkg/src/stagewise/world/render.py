"""Analytic depth and instance-mask rendering from two fixed cameras."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from stagewise.world.geometry import INF, ray_hit, ray_hit_capsule
from stagewise.world.robot import robot_capsules

RES = 64
ROBOT = "robot"
TABLE = "table"


@dataclass(frozen=True)
class Camera:
    name: str
    kind: str  # "ortho" | "persp"
    K: np.ndarray  # 3x3 intrinsics; for ortho fx, fy are pixels per meter
    world_from_cam: np.ndarray  # 4x4, camera looks along its +z axis
    width: int = RES
    height: int = RES

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_cam[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.world_from_cam[:3, 3]

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel ray origins and unit directions in row-major (v, u) order."""
        v, u = np.mgrid[0:self.height, 0:self.width]
        u = u.ravel().astype(float)
        v = v.ravel().astype(float)
        fx, fy, cx, cy = self.K[0, 0], self.K[1, 1], self.K[0, 2], self.K[1, 2]
        R, c = self.rotation, self.position
        if self.kind == "ortho":
            local = np.stack([(u - cx) / fx, (v - cy) / fy, np.zeros_like(u)], axis=1)
            origins = c + local @ R.T
            dirs = np.tile(R[:, 2], (len(u), 1))
        else:
            local = np.stack([(u - cx) / fx, (v - cy) / fy, np.ones_like(u)], axis=1)
            dirs = local @ R.T
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            origins = np.tile(c, (len(u), 1))
        return origins, dirs

    def depth_scale(self) -> np.ndarray:
        """Factor converting ray length to camera-z depth, per pixel."""
        if self.kind == "ortho":
            return np.ones(self.width * self.height)
        _, dirs = self.rays()
        return dirs @ self.rotation[:, 2]

    def back_project(self, u: np.ndarray, v: np.ndarray, depth: np.ndarray) -> np.ndarray:
        fx, fy, cx, cy = self.K[0, 0], self.K[1, 1], self.K[0, 2], self.K[1, 2]
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        d = np.asarray(depth, dtype=float)
        if self.kind == "ortho":
            local = np.stack([(u - cx) / fx, (v - cy) / fy, d], axis=-1)
        else:
            local = np.stack([(u - cx) / fx * d, (v - cy) / fy * d, d], axis=-1)
        return local @ self.rotation.T + self.position

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World points to (u, v, depth)."""
        local = (np.asarray(pts, dtype=float) - self.position) @ self.rotation
        fx, fy, cx, cy = self.K[0, 0], self.K[1, 1], self.K[0, 2], self.K[1, 2]
        if self.kind == "ortho":
            return local[:, 0] * fx + cx, local[:, 1] * fy + cy, local[:, 2]
        return local[:, 0] / local[:, 2] * fx + cx, local[:, 1] / local[:, 2] * fy + cy, local[:, 2]

    def pixel_footprint(self, depth: float) -> float:
        """Edge length of one pixel on a surface facing the camera at ``depth``."""
        if self.kind == "ortho":
            return 1.0 / self.K[0, 0]
        return depth / self.K[0, 0]


def _look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    M = np.eye(4)
    M[:3, 0], M[:3, 1], M[:3, 2], M[:3, 3] = x, y, z, eye
    return M


def _intrinsics(fx: float, fy: float) -> np.ndarray:
    c = (RES - 1) / 2.0
    return np.array([[fx, 0.0, c], [0.0, fy, c], [0.0, 0.0, 1.0]])


TOP_HEIGHT = 0.45  # below the link plane, so only the wrist and fingers are visible
TOP_SPAN = 0.45  # 7 mm pixels; the home gripper sits on the far edge
TOP_CENTER = (0.5, 0.375)

# top-down: image u along +x, v along -y, looking straight down
_top = np.eye(4)
_top[:3, :3] = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
_top[:3, 3] = (TOP_CENTER[0], TOP_CENTER[1], TOP_HEIGHT)

CAMERAS = (
    Camera("top", "ortho", _intrinsics(RES / TOP_SPAN, RES / TOP_SPAN), _top),
    Camera("oblique", "persp", _intrinsics(55.0, 55.0), _look_at((1.35, 0.35, 0.9), (0.5, 0.35, 0.05))),
)


@dataclass(frozen=True)
class DepthFrame:
    """One camera view: depth in camera z (0 = invalid) and instance ids.

    ``ids`` index into ``labels``; -1 marks pixels with no label.
    """

    camera: Camera
    depth: np.ndarray
    ids: np.ndarray
    labels: tuple[str, ...]

    @property
    def K(self) -> np.ndarray:
        return self.camera.K

    def mask(self, label: str) -> np.ndarray:
        if label not in self.labels:
            return np.zeros(self.ids.shape, dtype=bool)
        return self.ids == self.labels.index(label)

    def label_at(self, v: int, u: int) -> Optional[str]:
        i = int(self.ids[v, u])
        return None if i < 0 else self.labels[i]


@dataclass(frozen=True)
class Corruption:
    p_flip: float = 0.0
    r_erode: int = 0

    @property
    def active(self) -> bool:
        return self.p_flip > 0.0 or self.r_erode > 0


def frame_labels(task) -> tuple[str, ...]:
    return tuple(task.scene_vocabulary) + (ROBOT, TABLE)


def render_frame(state, camera: Camera) -> DepthFrame:
    labels = frame_labels(state.task)
    index = {lab: i for i, lab in enumerate(labels)}
    origins, dirs = camera.rays()
    n = len(origins)
    best = np.full(n, INF)
    ids = np.full(n, -1, dtype=np.int64)

    # table plane z = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_table = np.where(dirs[:, 2] < -1e-12, -origins[:, 2] / dirs[:, 2], INF)
    hit = t_table > 0
    best = np.where(hit, t_table, best)
    ids = np.where(hit, index[TABLE], ids)

    for p in state.parts():
        t = ray_hit(p, origins, dirs)
        closer = t < best
        best = np.where(closer, t, best)
        ids = np.where(closer, index[p.label], ids)
    for cap in robot_capsules(state.robot, state.ee):
        t = ray_hit_capsule(cap, origins, dirs)
        closer = t < best
        best = np.where(closer, t, best)
        ids = np.where(closer, index[ROBOT], ids)

    depth = np.where(np.isfinite(best), best * camera.depth_scale(), 0.0)
    shape = (camera.height, camera.width)
    return DepthFrame(camera, depth.reshape(shape), ids.reshape(shape), labels)


def corrupt(frame: DepthFrame, corruption: Corruption, rng: np.random.Generator) -> DepthFrame:
    """Erode every instance mask, then flip surviving ids with probability p_flip."""
    ids = frame.ids.copy()
    if corruption.r_erode > 0:
        st = ndimage.generate_binary_structure(2, 1)
        keep = np.zeros(ids.shape, dtype=bool)
        for i in range(len(frame.labels)):
            m = frame.ids == i
            if m.any():
                keep |= ndimage.binary_erosion(m, structure=st, iterations=corruption.r_erode)
        ids = np.where(keep | (frame.ids < 0), ids, -1)
    if corruption.p_flip > 0.0:
        n = len(frame.labels)
        flip = (rng.random(ids.shape) < corruption.p_flip) & (ids >= 0)
        # uniform over the other labels
        shift = rng.integers(1, n, size=ids.shape)
        ids = np.where(flip, (ids + shift) % n, ids)
    return DepthFrame(frame.camera, frame.depth, ids, frame.labels)


def render_depth_and_masks(state, corruption: Optional[Corruption] = None) -> tuple[DepthFrame, DepthFrame]:
    frames = tuple(render_frame(state, cam) for cam in CAMERAS)
    if corruption is not None and corruption.active:
        rng = np.random.default_rng([state.seed, state.step_index, 0xC0DE])
        frames = tuple(corrupt(f, corruption, rng) for f in frames)
    return frames


def mask_pixel_area(camera: Camera) -> float:
    """World area covered by one pixel of an orthographic camera."""
    if camera.kind != "ortho":
        raise ValueError("pixel area is only constant for orthographic cameras")
    return 1.0 / (camera.K[0, 0] * camera.K[1, 1])


def oblique_angle(camera: Camera) -> float:
    """Elevation of the viewing axis below the horizon, in radians."""
    z = camera.rotation[:, 2]
    return math.asin(-z[2])
