"""Dataset generation, the bit-exact volume container, splits, and synthetic tumor phantoms.

Container layout (little-endian), header exactly 43 bytes:

    magic "RFAV" (4B) | version u16 | dtype u8 | dims 3xu32 | spacing 3xf32 mm
    | origin 3xf32 mm | payload

dtype 0 is a u8 mask (LabelVolume), dtype 1 an f32 field (ScalarVolume); the
payload is row-major with x fastest. Reading bytes and writing them back is
bit-exact, which is what makes dataset regeneration reproducible. Note that
spacing and origin are stored in f32, so volumes meant to round-trip must use
f32-representable geometry.

Sample directories follow samples/<tumor>/<idx>/{tumor,elec,lesion,temp}.rfav
plus pose.json; every generated dataset carries a manifest with the full
resolved configuration so it can be regenerated byte-identically.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import RNG_ALGORITHM, __version__
from .bioheat import BioheatConfig
from .electrode import DEFAULT_TIP_LENGTH_MM, DEFAULT_TIP_RADIUS_MM, ElectrodePose, draw_pose, placement_rng
from .grid import GridSpec, LabelVolume, MaterialTable, ScalarVolume
from .necrosis import ArrheniusParams
from . import simulator

MAGIC = b"RFAV"
VERSION = 1
DTYPE_MASK_U8 = 0
DTYPE_F32 = 1

_HEADER = struct.Struct("<4sHB3I3f3f")
HEADER_SIZE = _HEADER.size  # 43 bytes


class ContainerFormatError(ValueError):
    pass


def volume_to_bytes(volume: ScalarVolume | LabelVolume) -> bytes:
    """Serialize a volume; masks as u8, scalar fields as f32."""
    spec = volume.spec
    if isinstance(volume, LabelVolume):
        dtype_code = DTYPE_MASK_U8
        payload = np.asarray(volume.labels, dtype=np.uint8)
    else:
        dtype_code = DTYPE_F32
        payload = np.asarray(volume.data, dtype="<f4")
    header = _HEADER.pack(MAGIC, VERSION, dtype_code, *spec.dims, *spec.spacing, *spec.origin)
    return header + payload.tobytes(order="F")


def volume_from_bytes(buf: bytes) -> ScalarVolume | LabelVolume:
    """Parse a container; format errors name the byte offset they occurred at."""
    if len(buf) < HEADER_SIZE:
        raise ContainerFormatError(
            f"container truncated: header needs {HEADER_SIZE} bytes, got {len(buf)} (offset 0)"
        )
    magic, version, dtype_code, nx, ny, nz, sx, sy, sz, ox, oy, oz = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported version {version} at offset 4")
    if dtype_code not in (DTYPE_MASK_U8, DTYPE_F32):
        raise ContainerFormatError(f"unknown dtype code {dtype_code} at offset 6")
    dims = (nx, ny, nz)
    n = nx * ny * nz
    item = 1 if dtype_code == DTYPE_MASK_U8 else 4
    expected = n * item
    payload = buf[HEADER_SIZE:]
    if len(payload) != expected:
        raise ContainerFormatError(
            f"container truncated: expected {expected}-byte payload at offset {HEADER_SIZE}, "
            f"got {len(payload)}"
        )
    spec = GridSpec(dims=dims, spacing=(sx, sy, sz), origin=(ox, oy, oz))
    if dtype_code == DTYPE_MASK_U8:
        data = np.frombuffer(payload, dtype=np.uint8).reshape(dims, order="F")
        return LabelVolume(spec, data)
    data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F")
    return ScalarVolume(spec, data.astype(np.float32))


def write_volume(path: str | Path, volume: ScalarVolume | LabelVolume) -> None:
    """Atomic write: serialize to a temp file in place, then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(volume_to_bytes(volume))
    os.replace(tmp, path)


def read_volume(path: str | Path) -> ScalarVolume | LabelVolume:
    return volume_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# synthetic tumor phantoms


def _rotation_matrix(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


TUMOR_VOLUME_MEAN_MM3 = 3021.0
TUMOR_VOLUME_SD_MM3 = 2789.0
_TUMOR_VOLUME_RANGE = (300.0, 14000.0)  # grid capacity clip for the 41^3 default


def _draw_volume_mm3(rng: np.random.Generator) -> float:
    v = rng.normal(TUMOR_VOLUME_MEAN_MM3, TUMOR_VOLUME_SD_MM3)
    return float(np.clip(v, *_TUMOR_VOLUME_RANGE))


def synth_tumor(
    kind: str,
    seed: int,
    spec: GridSpec | None = None,
    radius_mm: float | None = None,
    semi_axes_mm: tuple[float, float, float] | None = None,
    n_lobes: int | None = None,
) -> LabelVolume:
    """Connected synthetic tumor phantom centered on the grid.

    Kinds: "ball", "ellipsoid" (randomly rotated), "lobulated" (union of 3-7
    overlapping balls). When size parameters are omitted they are drawn so the
    phantom volume follows the clinical volume statistics, clipped to what
    fits the grid.
    """
    if spec is None:
        spec = GridSpec(dims=(41, 41, 41))
    rng = placement_rng(seed)
    center = np.asarray(spec.index_to_mm([(d - 1) / 2 for d in spec.dims]))

    coords = [spec.axis_coords(ax) for ax in range(3)]
    gx, gy, gz = np.meshgrid(*coords, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1) - center

    if kind == "ball":
        if radius_mm is None:
            radius_mm = (3.0 * _draw_volume_mm3(rng) / (4.0 * np.pi)) ** (1.0 / 3.0)
        mask = np.sum(pts**2, axis=-1) <= radius_mm**2
    elif kind == "ellipsoid":
        if semi_axes_mm is None:
            r = (3.0 * _draw_volume_mm3(rng) / (4.0 * np.pi)) ** (1.0 / 3.0)
            f1, f2 = rng.uniform(0.65, 1.35, size=2)
            semi_axes_mm = (r * f1, r * f2, r / (f1 * f2))
        rot = _rotation_matrix(rng)
        local = pts @ rot.T
        mask = np.sum((local / np.asarray(semi_axes_mm)) ** 2, axis=-1) <= 1.0
    elif kind == "lobulated":
        if n_lobes is None:
            n_lobes = int(rng.integers(3, 8))
        if radius_mm is None:
            # base lobe sized so the union lands near the drawn volume
            radius_mm = (3.0 * 0.6 * _draw_volume_mm3(rng) / (4.0 * np.pi)) ** (1.0 / 3.0)
        mask = np.sum(pts**2, axis=-1) <= radius_mm**2
        for _ in range(n_lobes - 1):
            offset = rng.uniform(-0.9, 0.9, size=3) * radius_mm
            r_lobe = rng.uniform(0.4, 0.8) * radius_mm
            mask |= np.sum((pts - offset) ** 2, axis=-1) <= r_lobe**2
    else:
        raise ValueError(f"unknown phantom kind {kind!r}")

    if not mask.any():
        raise ValueError("empty phantom")
    return LabelVolume(spec, mask.astype(np.uint8))


# ---------------------------------------------------------------------------
# sample generation


@dataclass(frozen=True)
class Provenance:
    tumor_id: str
    sample_index: int
    seed: int
    engine_version: str
    rng_algorithm: str
    v_applied: float

    def to_dict(self) -> dict:
        return {
            "tumor_id": self.tumor_id,
            "sample_index": self.sample_index,
            "seed": self.seed,
            "engine_version": self.engine_version,
            "rng_algorithm": self.rng_algorithm,
            "v_applied": self.v_applied,
        }


@dataclass(frozen=True)
class Sample:
    tumor_mask: LabelVolume
    electrode_mask: LabelVolume
    lesion_mask: LabelVolume
    temperature: ScalarVolume
    pose: ElectrodePose
    provenance: Provenance

    @property
    def sample_id(self) -> str:
        return f"{self.provenance.tumor_id}/{self.provenance.sample_index}"


@dataclass(frozen=True)
class SkippedSample:
    tumor_id: str
    sample_index: int
    reason: str


@dataclass(frozen=True)
class GenerationConfig:
    """Full engine configuration applied to every generated sample."""

    table: MaterialTable = field(default_factory=MaterialTable.breast)
    bioheat: BioheatConfig = field(default_factory=BioheatConfig)
    arrhenius: ArrheniusParams = field(default_factory=ArrheniusParams)
    v_applied: float = simulator.DEFAULT_V_APPLIED
    tip_length: float = DEFAULT_TIP_LENGTH_MM
    tip_radius: float = DEFAULT_TIP_RADIUS_MM
    max_attempts_per_sample: int = 20

    def to_dict(self) -> dict:
        return {
            "table": self.table.to_dict(),
            "bioheat": self.bioheat.to_dict(),
            "arrhenius": self.arrhenius.to_dict(),
            "v_applied": self.v_applied,
            "tip_length": self.tip_length,
            "tip_radius": self.tip_radius,
            "max_attempts_per_sample": self.max_attempts_per_sample,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        return cls(
            table=MaterialTable.from_dict(d["table"]),
            bioheat=BioheatConfig.from_dict(d["bioheat"]),
            arrhenius=ArrheniusParams.from_dict(d["arrhenius"]),
            v_applied=d["v_applied"],
            tip_length=d["tip_length"],
            tip_radius=d["tip_radius"],
            max_attempts_per_sample=d.get("max_attempts_per_sample", 20),
        )

    @classmethod
    def liver(cls, v_applied: float = simulator.DEFAULT_V_APPLIED) -> "GenerationConfig":
        return cls(
            table=MaterialTable.liver(),
            bioheat=BioheatConfig(t_init=20.0, t_boundary=20.0),
            v_applied=v_applied,
        )


def simulate_sample(
    labels: LabelVolume,
    pose: ElectrodePose,
    config: GenerationConfig,
    provenance: Provenance,
) -> Sample:
    req = simulator.SimulationRequest(
        labels=labels,
        pose=pose,
        table=config.table,
        bioheat=config.bioheat,
        arrhenius=config.arrhenius,
    )
    result = simulator.run(req)
    return Sample(
        tumor_mask=LabelVolume(labels.spec, (labels.labels == 1).astype(np.uint8)),
        electrode_mask=result.electrode_mask,
        lesion_mask=result.lesion,
        temperature=result.t_final,
        pose=pose,
        provenance=provenance,
    )


def generate_slot(
    labels: LabelVolume,
    tumor_id: str,
    tumor_index: int,
    sample_index: int,
    seed: int,
    config: GenerationConfig,
) -> Sample | SkippedSample:
    """Simulate one (tumor, index) dataset slot.

    The slot owns a counter-based PRNG substream keyed by (seed, tumor index,
    sample index), so slots are deterministic and order-independent, which
    makes generation embarrassingly parallel. Placements whose simulation
    fails or produces an empty lesion are redrawn within the slot's stream; a
    slot that exhausts its attempts becomes a SkippedSample with the recorded
    reason.
    """
    rng = placement_rng(seed, tumor_index, sample_index)
    provenance = Provenance(
        tumor_id=tumor_id,
        sample_index=sample_index,
        seed=seed,
        engine_version=__version__,
        rng_algorithm=RNG_ALGORITHM,
        v_applied=config.v_applied,
    )
    reason = "no attempt"
    for _ in range(config.max_attempts_per_sample):
        try:
            pose = draw_pose(
                rng,
                labels,
                tip_length=config.tip_length,
                tip_radius=config.tip_radius,
                v_applied=config.v_applied,
            )
            sample = simulate_sample(labels, pose, config, provenance)
        except (ValueError, RuntimeError, FloatingPointError) as exc:
            reason = str(exc)
            continue
        if not sample.lesion_mask.labels.any():
            reason = "empty lesion"
            continue
        return sample
    return SkippedSample(tumor_id, sample_index, reason)


def generate(
    tumors: Sequence[LabelVolume],
    per_tumor: int,
    seed: int,
    config: GenerationConfig | None = None,
    tumor_ids: Sequence[str] | None = None,
) -> Iterator[Sample | SkippedSample]:
    """Stream simulated samples for every (tumor, index) slot in order."""
    if per_tumor < 1:
        raise ValueError("invalid count")
    if len(tumors) < 1:
        raise ValueError("at least one tumor volume is required")
    if config is None:
        config = GenerationConfig()
    if tumor_ids is None:
        tumor_ids = [f"tumor{idx:02d}" for idx in range(len(tumors))]
    if len(tumor_ids) != len(tumors):
        raise ValueError("tumor_ids must match tumors")

    for t_idx, (tumor_id, labels) in enumerate(zip(tumor_ids, tumors)):
        if labels.tumor_voxel_count == 0:
            raise ValueError("empty tumor")
        for s_idx in range(per_tumor):
            yield generate_slot(labels, tumor_id, t_idx, s_idx, seed, config)


SAMPLE_FILES = ("tumor.rfav", "elec.rfav", "lesion.rfav", "temp.rfav", "pose.json")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_sample(root: str | Path, sample: Sample) -> Path:
    """Write one sample under samples/<tumor>/<idx>/ and return that directory."""
    out = Path(root) / "samples" / sample.provenance.tumor_id / str(sample.provenance.sample_index)
    out.mkdir(parents=True, exist_ok=True)
    write_volume(out / "tumor.rfav", sample.tumor_mask)
    write_volume(out / "elec.rfav", sample.electrode_mask)
    write_volume(out / "lesion.rfav", sample.lesion_mask)
    write_volume(out / "temp.rfav", sample.temperature)
    pose_doc = dict(sample.pose.to_json_dict(), provenance=sample.provenance.to_dict())
    tmp = out / "pose.json.tmp"
    tmp.write_text(canonical_json(pose_doc))
    os.replace(tmp, out / "pose.json")
    return out


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitConfig:
    train: int = 5000
    val: int = 200              # drawn from the training ids
    test_foreseen: int = 500
    test_unforeseen: int = 500
    unforeseen_tumors: int = 2

    def to_dict(self) -> dict:
        return {
            "train": self.train,
            "val": self.val,
            "test_foreseen": self.test_foreseen,
            "test_unforeseen": self.test_unforeseen,
            "unforeseen_tumors": self.unforeseen_tumors,
        }


@dataclass(frozen=True)
class SplitManifest:
    train: list[str]
    val: list[str]
    test_foreseen: list[str]
    test_unforeseen: list[str]
    foreseen_tumor_ids: list[str]
    unforeseen_tumor_ids: list[str]
    seed: int

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "val": list(self.val),
            "test_foreseen": list(self.test_foreseen),
            "test_unforeseen": list(self.test_unforeseen),
            "foreseen_tumor_ids": list(self.foreseen_tumor_ids),
            "unforeseen_tumor_ids": list(self.unforeseen_tumor_ids),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(**{k: d[k] for k in (
            "train", "val", "test_foreseen", "test_unforeseen",
            "foreseen_tumor_ids", "unforeseen_tumor_ids", "seed",
        )})


def make_splits(
    records: Sequence[tuple[str, str]],
    cfg: SplitConfig,
    seed: int,
) -> SplitManifest:
    """Split (sample_id, tumor_id) records into train/val/foreseen/unforeseen.

    Unforeseen tumors are chosen at random and excluded from training
    entirely; foreseen samples are shuffled into train and foreseen-test,
    with the validation ids drawn from the training set. Deterministic for a
    fixed seed.
    """
    rng = placement_rng(seed, 0xD5)
    tumor_ids = sorted({tumor_id for _, tumor_id in records})
    if cfg.unforeseen_tumors >= len(tumor_ids):
        raise ValueError(
            f"insufficient tumors: need more than {cfg.unforeseen_tumors}, got {len(tumor_ids)}"
        )
    unforeseen_ids = sorted(
        rng.choice(tumor_ids, size=cfg.unforeseen_tumors, replace=False).tolist()
    ) if cfg.unforeseen_tumors else []
    unforeseen_set = set(unforeseen_ids)

    foreseen_samples = sorted(sid for sid, tid in records if tid not in unforeseen_set)
    unforeseen_samples = sorted(sid for sid, tid in records if tid in unforeseen_set)

    if len(foreseen_samples) < cfg.train + cfg.test_foreseen:
        raise ValueError(
            f"insufficient samples: foreseen pool {len(foreseen_samples)} < "
            f"{cfg.train + cfg.test_foreseen}"
        )
    if len(unforeseen_samples) < cfg.test_unforeseen:
        raise ValueError(
            f"insufficient samples: unforeseen pool {len(unforeseen_samples)} < "
            f"{cfg.test_unforeseen}"
        )
    if cfg.val > cfg.train:
        raise ValueError("val size cannot exceed train size")

    order = rng.permutation(len(foreseen_samples))
    shuffled = [foreseen_samples[i] for i in order]
    train = shuffled[: cfg.train]
    test_foreseen = shuffled[cfg.train: cfg.train + cfg.test_foreseen]
    val = [train[i] for i in sorted(rng.choice(len(train), size=cfg.val, replace=False))] if cfg.val else []

    if cfg.test_unforeseen and unforeseen_samples:
        pick = sorted(rng.choice(len(unforeseen_samples), size=cfg.test_unforeseen, replace=False))
        test_unforeseen = [unforeseen_samples[i] for i in pick]
    else:
        test_unforeseen = []

    return SplitManifest(
        train=train,
        val=val,
        test_foreseen=test_foreseen,
        test_unforeseen=test_unforeseen,
        foreseen_tumor_ids=[t for t in tumor_ids if t not in unforeseen_set],
        unforeseen_tumor_ids=unforeseen_ids,
        seed=seed,
    )
