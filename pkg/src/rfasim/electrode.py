"""Electrode pose representation, tip rasterization, and randomized placement sampling.

The active tip is a cylinder of given length and radius around the pose
center; a voxel belongs to the tip iff its center lies within the radius of
the tip segment. Placement sampling draws tip centers uniformly from tumor
voxel centers and directions uniformly from the unit sphere, using a seeded
counter-based PRNG (Philox) so batches are reproducible and parallelizable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import GridSpec, LabelVolume

DEFAULT_TIP_LENGTH_MM = 10.0
DEFAULT_TIP_RADIUS_MM = 0.5

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class ElectrodePose:
    """Monopolar electrode tip: center (mm), unit direction, size, applied potential (V)."""

    center: tuple[float, float, float]
    direction: tuple[float, float, float]
    tip_length: float = DEFAULT_TIP_LENGTH_MM
    tip_radius: float = DEFAULT_TIP_RADIUS_MM
    v_applied: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        direction = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(direction))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValueError(f"direction must be a unit vector (|d| = {norm:.12g})")
        object.__setattr__(self, "direction", tuple(direction))
        if self.tip_length <= 0 or self.tip_radius <= 0:
            raise ValueError("tip_length and tip_radius must be > 0")

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        d = np.asarray(self.direction)
        h = 0.5 * self.tip_length
        return c - h * d, c + h * d

    def with_v_applied(self, v_applied: float) -> "ElectrodePose":
        return replace(self, v_applied=float(v_applied))

    def to_json_dict(self) -> dict:
        return {
            "center": list(self.center),
            "direction": list(self.direction),
            "tip_length": self.tip_length,
            "tip_radius": self.tip_radius,
            "v_applied": self.v_applied,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ElectrodePose":
        return cls(
            center=tuple(d["center"]),
            direction=tuple(d["direction"]),
            tip_length=float(d.get("tip_length", DEFAULT_TIP_LENGTH_MM)),
            tip_radius=float(d.get("tip_radius", DEFAULT_TIP_RADIUS_MM)),
            v_applied=float(d.get("v_applied", 0.0)),
        )


def rasterize(pose: ElectrodePose, spec: GridSpec) -> LabelVolume:
    """Mark every voxel whose center lies within tip_radius of the tip segment.

    Returns a mask volume (labels 0/1). Raises if the tip segment leaves the
    voxel-center bounding box or if no voxel center falls inside the tip.
    """
    a, b = pose.endpoints
    if not (spec.contains_point(a) and spec.contains_point(b)):
        raise ValueError("electrode out of bounds")

    # Restrict the point test to the tip's bounding box, padded by the radius.
    lo_idx = np.zeros(3, dtype=int)
    hi_idx = np.asarray(spec.dims) - 1
    pad = pose.tip_radius
    lo = np.floor(spec.mm_to_index(np.minimum(a, b) - pad)).astype(int)
    hi = np.ceil(spec.mm_to_index(np.maximum(a, b) + pad)).astype(int)
    lo = np.clip(lo, lo_idx, hi_idx)
    hi = np.clip(hi, lo_idx, hi_idx)

    coords = [spec.axis_coords(ax)[lo[ax]:hi[ax] + 1] for ax in range(3)]
    gx, gy, gz = np.meshgrid(*coords, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)

    # Distance from each voxel center to the segment [a, b].
    ab = b - a
    denom = float(ab @ ab)
    t = ((pts - a) @ ab) / denom if denom > 0 else np.zeros(pts.shape[:-1])
    t = np.clip(t, 0.0, 1.0)
    nearest = a + t[..., None] * ab
    dist2 = np.sum((pts - nearest) ** 2, axis=-1)
    inside = dist2 <= pose.tip_radius**2

    if not inside.any():
        raise ValueError("degenerate rasterization")

    mask = np.zeros(spec.dims, dtype=np.uint8)
    mask[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] = inside
    return LabelVolume(spec, mask)


def _draw_direction(rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vector via normalized 3D Gaussian draws."""
    while True:
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm


def _try_draw(
    rng: np.random.Generator,
    tumor_idx: np.ndarray,
    spec: GridSpec,
    tip_length: float,
    tip_radius: float,
    v_applied: float,
) -> ElectrodePose | None:
    center = spec.index_to_mm(tumor_idx[rng.integers(len(tumor_idx))])
    direction = _draw_direction(rng)
    pose = ElectrodePose(
        center=tuple(center),
        direction=tuple(direction),
        tip_length=tip_length,
        tip_radius=tip_radius,
        v_applied=v_applied,
    )
    try:
        rasterize(pose, spec)
    except ValueError:
        return None
    return pose


def draw_pose(
    rng: np.random.Generator,
    labels: LabelVolume,
    tip_length: float = DEFAULT_TIP_LENGTH_MM,
    tip_radius: float = DEFAULT_TIP_RADIUS_MM,
    v_applied: float = 0.0,
    max_rejections: int = 1000,
) -> ElectrodePose:
    """Draw one valid pose from an existing PRNG stream (rejection sampling)."""
    tumor_idx = np.argwhere(labels.labels == 1)
    if tumor_idx.size == 0:
        raise ValueError("empty tumor")
    for _ in range(max_rejections + 1):
        pose = _try_draw(rng, tumor_idx, labels.spec, tip_length, tip_radius, v_applied)
        if pose is not None:
            return pose
    raise RuntimeError("cannot place electrode")


def placement_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded Philox generator; extra integers select independent substreams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


def sample_placements(
    labels: LabelVolume,
    n: int,
    seed: int,
    tip_length: float = DEFAULT_TIP_LENGTH_MM,
    tip_radius: float = DEFAULT_TIP_RADIUS_MM,
    v_applied: float = 0.0,
) -> list[ElectrodePose]:
    """Sample n electrode poses with tumor-voxel centers and uniform directions.

    Poses whose tip would leave the grid (or rasterize to nothing) are
    rejected and redrawn; more than 1000*n consecutive rejections abort.
    The result is deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("invalid count")
    tumor_idx = np.argwhere(labels.labels == 1)
    if tumor_idx.size == 0:
        raise ValueError("empty tumor")
    rng = placement_rng(seed)
    budget = 1000 * n
    rejections = 0
    poses: list[ElectrodePose] = []
    while len(poses) < n:
        pose = _try_draw(rng, tumor_idx, labels.spec, tip_length, tip_radius, v_applied)
        if pose is None:
            rejections += 1
            if rejections > budget:
                raise RuntimeError("cannot place electrode")
            continue
        rejections = 0
        poses.append(pose)
    return poses
