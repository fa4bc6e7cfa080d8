"""Voxel-grid containers, tissue labeling, field-of-view cropping, and material assignment.

Conventions shared by every solver and the file container:
  - arrays are indexed ``[i, j, k]`` along (x, y, z),
  - the flat serialization order is x-fastest (Fortran order over that shape),
  - geometry is in millimetres, temperatures in degrees Celsius.

All container types are immutable after construction (their numpy buffers are
marked read-only) and safe to share between concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

LABEL_NORMAL = 0
LABEL_TUMOR = 1
LABEL_ELECTRODE = 2


@dataclass(frozen=True)
class GridSpec:
    """Regular voxel grid: voxel counts, spacing (mm), and origin (mm) per axis."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.dims) != 3 or len(self.spacing) != 3 or len(self.origin) != 3:
            raise ValueError("dims, spacing and origin must each have three components")
        if any(d < 3 for d in self.dims):
            raise ValueError(f"all dims must be >= 3, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"all spacing components must be > 0, got {self.spacing}")

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def voxel_volume_mm3(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    def axis_coords(self, axis: int) -> np.ndarray:
        """Voxel-center coordinates (mm) along one axis."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def index_to_mm(self, index) -> np.ndarray:
        """Map a (possibly fractional) voxel index triple to mm coordinates."""
        return np.asarray(self.origin) + np.asarray(index, dtype=float) * np.asarray(self.spacing)

    def mm_to_index(self, point_mm) -> np.ndarray:
        """Map mm coordinates to fractional voxel indices."""
        return (np.asarray(point_mm, dtype=float) - np.asarray(self.origin)) / np.asarray(self.spacing)

    def contains_point(self, point_mm) -> bool:
        """True if the point lies inside the voxel-center bounding box."""
        idx = self.mm_to_index(point_mm)
        return bool(np.all(idx >= 0.0) and np.all(idx <= np.asarray(self.dims) - 1))


def _freeze(a: np.ndarray) -> np.ndarray:
    if a.base is not None or a.flags.writeable is False:
        a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScalarVolume:
    """3D field of real values (temperature, potential, damage, heat source)."""

    spec: GridSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.spec.dims:
            raise ValueError(f"data shape {data.shape} does not match dims {self.spec.dims}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        object.__setattr__(self, "data", _freeze(data))

    def require_finite(self, context: str = "field") -> "ScalarVolume":
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in {context}")
        return self

    @classmethod
    def full(cls, spec: GridSpec, value: float, dtype=np.float64) -> "ScalarVolume":
        return cls(spec, np.full(spec.dims, value, dtype=dtype))


@dataclass(frozen=True)
class LabelVolume:
    """3D field of tissue labels: 0=normal tissue, 1=tumor, 2=electrode."""

    spec: GridSpec
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != self.spec.dims:
            raise ValueError(f"labels shape {labels.shape} does not match dims {self.spec.dims}")
        labels = labels.astype(np.uint8, copy=not labels.flags.owndata)
        if labels.size and labels.max() > LABEL_ELECTRODE:
            bad = sorted(int(v) for v in np.unique(labels) if v > LABEL_ELECTRODE)
            raise ValueError(f"labels must be in {{0,1,2}}, found {bad}")
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def tumor_mask(self) -> np.ndarray:
        return self.labels == LABEL_TUMOR

    @property
    def tumor_voxel_count(self) -> int:
        return int(np.count_nonzero(self.labels == LABEL_TUMOR))

    def tumor_centroid_index(self) -> np.ndarray:
        """Unweighted mean of tumor voxel indices (fractional)."""
        idx = np.argwhere(self.labels == LABEL_TUMOR)
        if idx.size == 0:
            raise ValueError("empty tumor")
        return idx.mean(axis=0)

    def with_electrode(self, electrode_mask: np.ndarray) -> "LabelVolume":
        """Overlay electrode voxels (label 2) onto this volume."""
        labels = np.array(self.labels)
        labels[np.asarray(electrode_mask, dtype=bool)] = LABEL_ELECTRODE
        return LabelVolume(self.spec, labels)


@dataclass(frozen=True)
class TissueProperties:
    """Physical constants of one tissue class."""

    sigma: float    # electrical conductivity, S/m
    rho: float      # density, kg/m^3
    c: float        # specific heat capacity, J/kg/K
    k: float        # thermal conductivity, W/m/K
    omega_b: float  # blood perfusion rate, 1/s
    q_m: float      # metabolic heat generation, W/m^3

    def __post_init__(self):
        for name in ("sigma", "rho", "c", "k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.omega_b < 0 or self.q_m < 0:
            raise ValueError("omega_b and q_m must be >= 0")


@dataclass(frozen=True)
class MaterialTable:
    """Per-label tissue constants plus blood properties.

    The electrode label carries normal-tissue thermal constants: the metal tip
    is modelled electrically as a Dirichlet region, so only its surroundings
    matter thermally.
    """

    materials: Mapping[int, TissueProperties]
    rho_b: float = 1050.0   # blood density, kg/m^3
    c_b: float = 3617.0     # blood specific heat, J/kg/K
    t_b: float = 37.0       # blood temperature, degC

    def __post_init__(self):
        object.__setattr__(self, "materials", dict(self.materials))
        if self.rho_b <= 0 or self.c_b <= 0:
            raise ValueError("blood density and specific heat must be strictly positive")

    def __getitem__(self, label: int) -> TissueProperties:
        return self.materials[label]

    @classmethod
    def breast(cls) -> "MaterialTable":
        """Breast tissue constants used for patient-geometry simulations."""
        normal = TissueProperties(sigma=0.4, rho=911.0, c=2348.0, k=0.21, omega_b=0.2, q_m=400.0)
        tumor = TissueProperties(sigma=4.0, rho=1050.0, c=3770.0, k=0.48, omega_b=5.3, q_m=13600.0)
        return cls(
            materials={LABEL_NORMAL: normal, LABEL_TUMOR: tumor, LABEL_ELECTRODE: normal},
            rho_b=1050.0,
            c_b=3617.0,
            t_b=37.0,
        )

    @classmethod
    def liver(cls) -> "MaterialTable":
        """Homogeneous ex vivo bovine liver constants (no perfusion, no metabolism)."""
        liver = TissueProperties(sigma=0.69, rho=1079.0, c=3415.0, k=0.5, omega_b=0.0, q_m=0.0)
        return cls(
            materials={LABEL_NORMAL: liver, LABEL_TUMOR: liver, LABEL_ELECTRODE: liver},
            rho_b=1050.0,
            c_b=3617.0,
            t_b=37.0,
        )

    def to_dict(self) -> dict:
        return {
            "materials": {
                str(label): vars(props).copy() for label, props in sorted(self.materials.items())
            },
            "rho_b": self.rho_b,
            "c_b": self.c_b,
            "t_b": self.t_b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialTable":
        mats = {int(label): TissueProperties(**props) for label, props in d["materials"].items()}
        return cls(materials=mats, rho_b=d["rho_b"], c_b=d["c_b"], t_b=d["t_b"])


@dataclass(frozen=True)
class MaterialFields:
    """Per-voxel physical property fields produced by :func:`assign_materials`."""

    sigma: ScalarVolume
    rho: ScalarVolume
    c: ScalarVolume
    k: ScalarVolume
    omega_b: ScalarVolume
    q_m: ScalarVolume

    @property
    def spec(self) -> GridSpec:
        return self.sigma.spec

    @property
    def rho_c(self) -> np.ndarray:
        """Volumetric heat capacity rho*c, J/m^3/K."""
        return self.rho.data * self.c.data


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(int)


def crop_to_fov(labels: LabelVolume, fov_mm: tuple[float, float, float]) -> LabelVolume:
    """Crop a label volume to a field of view centered at the tumor centroid.

    The output has ``fov/spacing + 1`` voxels per axis so that a 40 mm box at
    1 mm pitch yields 41 nodes. The tumor volumetric center (unweighted mean
    of tumor voxel indices, rounded half-up) maps to the output center voxel;
    if the centered window would leave the source volume it is clamped to the
    bounds instead.
    """
    spec = labels.spec
    dims = np.asarray(spec.dims)
    spacing = np.asarray(spec.spacing)
    out_dims = _round_half_up(np.asarray(fov_mm, dtype=float) / spacing) + 1
    if np.any(out_dims > dims):
        raise ValueError(f"fov {tuple(fov_mm)} mm exceeds volume extent for dims {spec.dims}")

    centroid = _round_half_up(labels.tumor_centroid_index())  # raises "empty tumor"
    start = centroid - out_dims // 2
    start = np.clip(start, 0, dims - out_dims)
    end = start + out_dims

    cropped = labels.labels[start[0]:end[0], start[1]:end[1], start[2]:end[2]]
    out_spec = GridSpec(
        dims=tuple(int(d) for d in out_dims),
        spacing=spec.spacing,
        origin=tuple(np.asarray(spec.origin) + start * spacing),
    )
    return LabelVolume(out_spec, cropped)


def assign_materials(labels: LabelVolume, table: MaterialTable) -> MaterialFields:
    """Expand per-label constants into per-voxel property fields (no interpolation)."""
    present = np.unique(labels.labels)
    missing = [int(v) for v in present if int(v) not in table.materials]
    if missing:
        raise ValueError(f"unknown label {missing[0]}")

    fields = {}
    for name in ("sigma", "rho", "c", "k", "omega_b", "q_m"):
        lut = np.zeros(int(present.max()) + 1, dtype=np.float64)
        for label in present:
            lut[label] = getattr(table[int(label)], name)
        fields[name] = ScalarVolume(labels.spec, lut[labels.labels])
    return MaterialFields(**fields)
