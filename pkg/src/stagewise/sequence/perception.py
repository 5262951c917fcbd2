"""Mask clean-up and target-region pose estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from stagewise import instrument
from stagewise.errors import EmptyCloudError, MaskNotFound, ValidationError
from stagewise.sequence.cloud import PointCloud, frame_points, preprocess_cloud
from stagewise.world.render import ROBOT, DepthFrame

STANDOFF = 0.05
TABLE_Z = 0.0
MIN_MASK_PIXELS = 4  # smaller refined masks are treated as label noise
SPECKLE_PIXELS = 3  # robot-mask components below this size are ignored
_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise ValidationError("noise sigma must be non-negative")


def refine_mask(frame: DepthFrame, label: str) -> np.ndarray:
    """Pixels of ``label`` with enclosed holes filled, largest 4-connected component only."""
    raw = frame.mask(label)
    if not raw.any():
        raise MaskNotFound(f"no pixels labelled {label!r} in the {frame.camera.name} view")
    return largest_component(ndimage.binary_fill_holes(raw, structure=_FOUR))


def largest_component(mask: np.ndarray) -> np.ndarray:
    lab, n = ndimage.label(mask, structure=_FOUR)
    if n <= 1:
        return mask.astype(bool)
    sizes = np.bincount(lab.ravel())[1:]
    # ties resolve to the component with the smallest index (raster order)
    return lab == (int(np.argmax(sizes)) + 1)


def drop_specks(mask: np.ndarray, min_size: int = SPECKLE_PIXELS) -> np.ndarray:
    lab, n = ndimage.label(mask, structure=_FOUR)
    if n == 0:
        return mask.astype(bool)
    sizes = np.bincount(lab.ravel())
    big = sizes >= min_size
    big[0] = False
    return big[lab]


def _clean_view(frame: DepthFrame, mask: np.ndarray) -> bool:
    """True when a mask is whole: off the image border and clear of the robot."""
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        return False
    robot = ndimage.binary_dilation(drop_specks(frame.mask(ROBOT)), structure=_FOUR, iterations=2)
    return not (robot & mask).any()


def masked_cloud(frames: Sequence[DepthFrame], label: str) -> PointCloud:
    """Points under the refined mask, from the first unoccluded view or else all views."""
    masks: list[Optional[np.ndarray]] = []
    for f in frames:
        try:
            m = refine_mask(f, label)
            masks.append(m if m.sum() >= MIN_MASK_PIXELS else None)
        except MaskNotFound:
            masks.append(None)
    if all(m is None for m in masks):
        raise MaskNotFound(f"no view contains {label!r}")
    for i, (f, m) in enumerate(zip(frames, masks)):
        if m is not None and _clean_view(f, m):
            return frame_points(f, i, m)
    return PointCloud.concat([frame_points(f, i, m) for i, (f, m) in enumerate(zip(frames, masks))
                              if m is not None])


def estimate_target_pose(frames: Sequence[DepthFrame], label: str, noise: NoiseModel = NoiseModel(),
                         seed: int = 0, standoff: float = STANDOFF) -> np.ndarray:
    """Centroid of the region's cleaned points, raised by ``standoff`` and perturbed by ``noise``.

    x and y are the mean of the points; z is halfway between the highest point
    and the table, since objects rest on the table and only their tops are seen.
    """
    instrument.hit("sequence.estimate_target_pose")
    pc = masked_cloud(frames, label)
    try:
        clean = preprocess_cloud(pc)
    except EmptyCloudError:
        raise MaskNotFound(f"mask for {label!r} holds no points above the table") from None
    # cameras see top surfaces only; the body is taken to extend down to the table
    top = float(clean.points[:, 2].max())
    xy = clean.points[:, :2].mean(axis=0)
    est = np.array([xy[0], xy[1], 0.5 * (top + TABLE_Z) + standoff])
    if noise.sigma > 0.0:
        est = est + np.random.default_rng([int(seed), 0x905E]).normal(0.0, noise.sigma, size=3)
    return est
