"""Point clouds: back-projection, cleaning and robot removal."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence
from urllib.parse import quote, unquote

import numpy as np
from scipy.spatial import cKDTree

from stagewise import instrument
from stagewise.errors import EmptyCloudError, ValidationError
from stagewise.world.geometry import Capsule, segment_distance
from stagewise.world.render import ROBOT, TABLE, DepthFrame

VOXEL = 0.005
OUTLIER_K = 20
OUTLIER_STD = 2.0
# the table plane is known, so the crop starts just above it
WORKSPACE = ((0.0, 1.0), (0.0, 1.0), (0.002, 0.4))
ROBOT_GUARD = 0.01


@dataclass(frozen=True)
class PointCloud:
    """Points with optional per-point labels and (view, row, col) provenance."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    source: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point cloud contains non-finite coordinates")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=object)
            if labels.shape != (len(pts),):
                raise ValidationError("labels length must equal the number of points")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, keep: np.ndarray) -> "PointCloud":
        return PointCloud(self.points[keep],
                          None if self.labels is None else self.labels[keep],
                          None if self.source is None else self.source[keep])

    def with_label(self, label: str) -> "PointCloud":
        if self.labels is None:
            return PointCloud(np.zeros((0, 3)))
        return self.subset(self.labels == label)

    @staticmethod
    def concat(clouds: Sequence["PointCloud"]) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return PointCloud(np.zeros((0, 3)))
        pts = np.concatenate([c.points for c in clouds])
        labels = None
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        source = None
        if all(c.source is not None for c in clouds):
            source = np.concatenate([c.source for c in clouds])
        return PointCloud(pts, labels, source)


def frame_points(frame: DepthFrame, view: int = 0, pixel_mask: Optional[np.ndarray] = None) -> PointCloud:
    """Back-project the valid pixels of one frame (optionally only those in ``pixel_mask``)."""
    valid = frame.depth > 0
    if pixel_mask is not None:
        valid &= pixel_mask
    v, u = np.nonzero(valid)
    pts = frame.camera.back_project(u, v, frame.depth[v, u])
    ids = frame.ids[v, u]
    names = np.array(list(frame.labels) + [None], dtype=object)
    labels = names[np.where(ids >= 0, ids, len(frame.labels))]
    source = np.stack([np.full(len(u), view), v, u], axis=1)
    return PointCloud(pts, labels, source)


def project_point_cloud(frames: Sequence[DepthFrame]) -> PointCloud:
    instrument.hit("sequence.project_point_cloud")
    return PointCloud.concat([frame_points(f, i) for i, f in enumerate(frames)])


def crop(pc: PointCloud, workspace=WORKSPACE) -> PointCloud:
    p = pc.points
    keep = np.ones(len(p), dtype=bool)
    for axis, (lo, hi) in enumerate(workspace):
        keep &= (p[:, axis] >= lo) & (p[:, axis] <= hi)
    return pc.subset(keep)


def voxel_downsample(pc: PointCloud, size: float = VOXEL) -> PointCloud:
    """One point per occupied cell: the cell centroid, labelled by majority vote."""
    if len(pc) == 0:
        return pc
    cells = np.floor(pc.points / size).astype(np.int64)
    uniq, inverse, counts = np.unique(cells, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, pc.points)
    centroids = sums / counts[:, None]
    labels = None
    if pc.labels is not None:
        labels = np.empty(len(uniq), dtype=object)
        order = np.argsort(inverse, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for c in range(len(uniq)):
            members = pc.labels[order[bounds[c]:bounds[c + 1]]]
            labels[c] = _majority(members)
    source = None
    if pc.source is not None:
        # provenance of the first point that landed in each cell
        first = np.full(len(uniq), len(pc))
        np.minimum.at(first, inverse, np.arange(len(pc)))
        source = pc.source[first]
    return PointCloud(centroids, labels, source)


def _majority(members: np.ndarray):
    best, best_n = None, -1
    counts: dict = {}
    for m in members:
        counts[m] = counts.get(m, 0) + 1
    # ties go to the lexicographically smallest label (None last)
    for lab in sorted(counts, key=lambda x: (x is None, "" if x is None else str(x))):
        if counts[lab] > best_n:
            best, best_n = lab, counts[lab]
    return best


def remove_outliers(pc: PointCloud, k: int = OUTLIER_K, n_std: float = OUTLIER_STD) -> PointCloud:
    """Drop points whose mean distance to their k nearest neighbours exceeds mean + n_std * std."""
    n = len(pc)
    if n < 3:
        return pc
    kk = min(k, n - 1)
    dist, _ = cKDTree(pc.points).query(pc.points, k=kk + 1)
    stat = dist[:, 1:].mean(axis=1)
    thresh = stat.mean() + n_std * stat.std()
    return pc.subset(stat <= thresh)


def preprocess_cloud(pc: PointCloud, workspace=WORKSPACE, voxel: float = VOXEL) -> PointCloud:
    if len(pc) == 0:
        raise EmptyCloudError("input point cloud is empty")
    out = crop(pc, workspace)
    if len(out) == 0:
        raise EmptyCloudError("no points left inside the workspace")
    return remove_outliers(voxel_downsample(out, voxel))


def distance_to_capsules(points: np.ndarray, capsules: Sequence[Capsule]) -> np.ndarray:
    d = np.full(len(points), np.inf)
    for c in capsules:
        d = np.minimum(d, segment_distance(points, c.p0, c.p1) - c.r)
    return d


def remove_robot_points(pc: PointCloud, robot_capsules: Sequence[Capsule] = (),
                        robot_labels: Sequence[str] = (ROBOT,), guard: float = ROBOT_GUARD) -> PointCloud:
    """Scene cloud without the robot.

    Points labelled as robot are dropped; any other point within ``guard`` of
    a robot capsule is dropped too, since corrupted masks can mislabel the arm.
    """
    instrument.hit("sequence.remove_robot_points")
    keep = np.ones(len(pc), dtype=bool)
    if pc.labels is not None:
        for lab in robot_labels:
            keep &= pc.labels != lab
    if robot_capsules and len(pc):
        keep &= distance_to_capsules(pc.points, robot_capsules) > guard
    return pc.subset(keep)


# --- plain-text XYZ format -----------------------------------------------------------

XYZ_HEADER = "# stagewise-xyz v1"


def _fmt(v: float) -> str:
    return repr(float(v))


def save_xyz(pc: PointCloud, path) -> None:
    """One point per line: x y z label (percent-encoded, '-' when unlabelled).

    Floats are written with ``repr`` so they round-trip exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(XYZ_HEADER + "\n")
        for i, p in enumerate(pc.points):
            lab = "-" if pc.labels is None or pc.labels[i] is None else quote(str(pc.labels[i]), safe="")
            fh.write(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])} {lab}\n")


def load_xyz(path) -> PointCloud:
    pts, labels = [], []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != XYZ_HEADER:
            raise ValidationError(f"{path}: not a stagewise xyz file")
        for n, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValidationError(f"{path}:{n}: expected 'x y z label'")
            pts.append([float(v) for v in parts[:3]])
            labels.append(None if parts[3] == "-" else unquote(parts[3]))
    return PointCloud(np.array(pts).reshape(-1, 3), np.array(labels, dtype=object))


__all__ = ["PointCloud", "project_point_cloud", "preprocess_cloud", "remove_robot_points", "crop",
           "voxel_downsample", "remove_outliers", "frame_points", "save_xyz", "load_xyz", "TABLE"]
