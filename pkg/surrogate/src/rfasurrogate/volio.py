"""Reader/writer for the engine's binary volume container.

Wire format (little-endian), 43-byte header: magic "RFAV" | version u16 |
dtype u8 (0 = u8 mask, 1 = f32 field) | dims 3xu32 | spacing 3xf32 mm |
origin 3xf32 mm | payload row-major with x fastest. This module speaks the
file format only; it has no dependency on the engine package.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RFAV"
VERSION = 1
DTYPE_MASK_U8 = 0
DTYPE_F32 = 1

_HEADER = struct.Struct("<4sHB3I3f3f")


@dataclass(frozen=True)
class Volume:
    data: np.ndarray            # shape (nx, ny, nz)
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    @property
    def is_mask(self) -> bool:
        return self.data.dtype == np.uint8


def volume_from_bytes(buf: bytes) -> Volume:
    if len(buf) < _HEADER.size:
        raise ValueError(f"container truncated: header needs {_HEADER.size} bytes, got {len(buf)}")
    magic, version, dtype_code, nx, ny, nz, sx, sy, sz, ox, oy, oz = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    dims = (nx, ny, nz)
    payload = buf[_HEADER.size:]
    if dtype_code == DTYPE_MASK_U8:
        expected = nx * ny * nz
        dt = np.uint8
    elif dtype_code == DTYPE_F32:
        expected = nx * ny * nz * 4
        dt = np.dtype("<f4")
    else:
        raise ValueError(f"unknown dtype code {dtype_code}")
    if len(payload) != expected:
        raise ValueError(f"container truncated: expected {expected} payload bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=dt).reshape(dims, order="F")
    return Volume(data=data.copy(), spacing=(sx, sy, sz), origin=(ox, oy, oz))


def volume_to_bytes(volume: Volume) -> bytes:
    data = volume.data
    if data.dtype == np.uint8:
        code = DTYPE_MASK_U8
        payload = data
    else:
        code = DTYPE_F32
        payload = np.asarray(data, dtype="<f4")
    header = _HEADER.pack(MAGIC, VERSION, code, *data.shape, *volume.spacing, *volume.origin)
    return header + payload.tobytes(order="F")


def read_volume(path: str | Path) -> Volume:
    return volume_from_bytes(Path(path).read_bytes())


def write_volume(path: str | Path, volume: Volume) -> None:
    Path(path).write_bytes(volume_to_bytes(volume))
