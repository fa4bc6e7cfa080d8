"""Evaluation metrics for lesion masks and temperature fields, plus lesion morphometry.

Set metrics (Dice, Jaccard, Hausdorff) operate on binary masks over one grid;
temperature metrics compare whole volumes. Morphometry measures the through-
centroid chord lengths and cross-section area of a lesion on the plane that
contains the center of mass and the electrode axis, mirroring how bisected
ablation samples are measured on photographs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .grid import GridSpec, LabelVolume, ScalarVolume


@dataclass(frozen=True)
class LesionMetrics:
    dice: float
    jaccard: float
    hausdorff_mm: float | None

    def to_dict(self) -> dict:
        return {"dice": self.dice, "jaccard": self.jaccard, "hausdorff_mm": self.hausdorff_mm}


@dataclass(frozen=True)
class TempMetrics:
    rmse: float
    mae: float
    dice_gt40: float
    dice_gt50: float

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "dice_gt40": self.dice_gt40,
            "dice_gt50": self.dice_gt50,
        }


@dataclass(frozen=True)
class Morphometry:
    com: tuple[float, float, float]   # fractional voxel coordinates
    horizontal_mm: float
    vertical_mm: float
    area_mm2: float

    def to_dict(self) -> dict:
        return {
            "com": list(self.com),
            "horizontal_mm": self.horizontal_mm,
            "vertical_mm": self.vertical_mm,
            "area_mm2": self.area_mm2,
        }


def _as_bool(mask) -> np.ndarray:
    if isinstance(mask, LabelVolume):
        return mask.labels != 0
    if isinstance(mask, ScalarVolume):
        return mask.data != 0
    return np.asarray(mask) != 0


def _check_specs(a, b) -> None:
    spec_a = a.spec if hasattr(a, "spec") else None
    spec_b = b.spec if hasattr(b, "spec") else None
    if spec_a is not None and spec_b is not None and spec_a != spec_b:
        raise ValueError("grid mismatch")


def dice(a, b) -> float:
    """2|A∩B| / (|A|+|B|); two empty masks agree perfectly (1.0)."""
    _check_specs(a, b)
    ma, mb = _as_bool(a), _as_bool(b)
    if ma.shape != mb.shape:
        raise ValueError("grid mismatch")
    na, nb = int(ma.sum()), int(mb.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((ma & mb).sum()) / (na + nb)


def jaccard(a, b) -> float:
    """|A∩B| / |A∪B|; two empty masks agree perfectly (1.0)."""
    _check_specs(a, b)
    ma, mb = _as_bool(a), _as_bool(b)
    if ma.shape != mb.shape:
        raise ValueError("grid mismatch")
    union = int((ma | mb).sum())
    if union == 0:
        return 1.0
    return int((ma & mb).sum()) / union


def hausdorff(a, b, spacing: tuple[float, float, float] | None = None) -> float:
    """Exact symmetric Hausdorff distance (mm) between voxel-center point sets."""
    _check_specs(a, b)
    ma, mb = _as_bool(a), _as_bool(b)
    if ma.shape != mb.shape:
        raise ValueError("grid mismatch")
    if spacing is None:
        spacing = a.spec.spacing if hasattr(a, "spec") else (1.0, 1.0, 1.0)
    if not ma.any() or not mb.any():
        raise ValueError("undefined for empty set")
    s = np.asarray(spacing, dtype=float)
    pa = np.argwhere(ma) * s
    pb = np.argwhere(mb) * s
    d_ab = cKDTree(pb).query(pa, k=1)[0].max()
    d_ba = cKDTree(pa).query(pb, k=1)[0].max()
    return float(max(d_ab, d_ba))


def temp_metrics(pred: ScalarVolume, truth: ScalarVolume) -> TempMetrics:
    """Whole-volume RMSE/MAE plus Dice of the strict >40 degC and >50 degC masks."""
    if pred.spec != truth.spec:
        raise ValueError("grid mismatch")
    diff = pred.data - truth.data
    rmse = float(np.sqrt(np.mean(diff * diff)))
    mae = float(np.mean(np.abs(diff)))
    return TempMetrics(
        rmse=rmse,
        mae=mae,
        dice_gt40=dice(pred.data > 40.0, truth.data > 40.0),
        dice_gt50=dice(pred.data > 50.0, truth.data > 50.0),
    )


def dominant_axis(direction) -> int:
    """Grid axis most aligned with a direction vector."""
    return int(np.argmax(np.abs(np.asarray(direction, dtype=float))))


def _chord_length(line: np.ndarray, through: int, pitch: float) -> float:
    """Length (mm) of the contiguous run of True containing index `through`."""
    if not line[through]:
        return 0.0
    lo = through
    while lo > 0 and line[lo - 1]:
        lo -= 1
    hi = through
    while hi < len(line) - 1 and line[hi + 1]:
        hi += 1
    return (hi - lo + 1) * pitch


def morphometry(
    mask,
    vertical_axis: int,
    horizontal_axis: int | None = None,
    spec: GridSpec | None = None,
) -> Morphometry:
    """Through-centroid lesion measurements on the electrode cross-section plane.

    vertical_axis is the grid axis of the electrode; the plane also contains
    horizontal_axis (default: the lowest-index other axis) and passes through
    the mask's center of mass. The reported lengths follow the orientation of
    bisected-sample photographs, where the needle track lies horizontally:
    horizontal is the contiguous mask run through the center of mass parallel
    to the electrode axis, vertical the perpendicular in-plane run. The area
    is the in-plane voxel count times the pixel area.
    """
    if spec is None and hasattr(mask, "spec"):
        spec = mask.spec
    m = _as_bool(mask)
    if not m.any():
        raise ValueError("empty mask")
    spacing = spec.spacing if spec is not None else (1.0, 1.0, 1.0)
    if horizontal_axis is None:
        horizontal_axis = next(ax for ax in range(3) if ax != vertical_axis)
    if horizontal_axis == vertical_axis:
        raise ValueError("horizontal axis must differ from the electrode axis")
    along_axis = vertical_axis       # electrode direction, reported as horizontal
    cross_axis = horizontal_axis     # in-plane perpendicular, reported as vertical
    fixed_axis = 3 - along_axis - cross_axis

    com = np.argwhere(m).mean(axis=0)
    com_idx = np.floor(com + 0.5).astype(int)

    plane = np.take(m, com_idx[fixed_axis], axis=fixed_axis)
    # axes of `plane`: the two remaining grid axes in ascending order
    remaining = [ax for ax in range(3) if ax != fixed_axis]
    p_along = remaining.index(along_axis)

    along_line = plane[com_idx[cross_axis], :] if p_along == 1 else plane[:, com_idx[cross_axis]]
    cross_line = plane[com_idx[along_axis], :] if p_along == 0 else plane[:, com_idx[along_axis]]
    horizontal = _chord_length(along_line, com_idx[along_axis], spacing[along_axis])
    vertical = _chord_length(cross_line, com_idx[cross_axis], spacing[cross_axis])
    pixel_area = spacing[along_axis] * spacing[cross_axis]
    area = float(plane.sum()) * pixel_area

    return Morphometry(
        com=tuple(float(c) for c in com),
        horizontal_mm=horizontal,
        vertical_mm=vertical,
        area_mm2=area,
    )
