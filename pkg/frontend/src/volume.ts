/**
 * Decoder for the engine's binary volume container (display only).
 *
 * Header (little-endian, 43 bytes): magic "RFAV" | version u16 | dtype u8
 * (0 = u8 mask, 1 = f32 field) | dims 3xu32 | spacing 3xf32 | origin 3xf32;
 * payload is row-major with x fastest.
 */

export interface DecodedVolume {
  dims: [number, number, number];
  spacing: [number, number, number];
  origin: [number, number, number];
  data: Float32Array | Uint8Array; // x-fastest flat order
}

const HEADER_SIZE = 43;

export function decodeVolume(buffer: ArrayBuffer): DecodedVolume {
  const view = new DataView(buffer);
  if (buffer.byteLength < HEADER_SIZE) throw new Error("container truncated");
  const magic = String.fromCharCode(view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3));
  if (magic !== "RFAV") throw new Error(`bad magic ${magic}`);
  const version = view.getUint16(4, true);
  if (version !== 1) throw new Error(`unsupported version ${version}`);
  const dtype = view.getUint8(6);
  const dims: [number, number, number] = [
    view.getUint32(7, true),
    view.getUint32(11, true),
    view.getUint32(15, true),
  ];
  const spacing: [number, number, number] = [
    view.getFloat32(19, true),
    view.getFloat32(23, true),
    view.getFloat32(27, true),
  ];
  const origin: [number, number, number] = [
    view.getFloat32(31, true),
    view.getFloat32(35, true),
    view.getFloat32(39, true),
  ];
  const n = dims[0] * dims[1] * dims[2];
  if (dtype === 0) {
    if (buffer.byteLength !== HEADER_SIZE + n) throw new Error("container truncated");
    return { dims, spacing, origin, data: new Uint8Array(buffer, HEADER_SIZE, n) };
  }
  if (dtype === 1) {
    if (buffer.byteLength !== HEADER_SIZE + 4 * n) throw new Error("container truncated");
    // payload may be unaligned relative to the 43-byte header: copy
    const bytes = new Uint8Array(buffer, HEADER_SIZE, 4 * n);
    const aligned = new Uint8Array(4 * n);
    aligned.set(bytes);
    return { dims, spacing, origin, data: new Float32Array(aligned.buffer) };
  }
  throw new Error(`unknown dtype code ${dtype}`);
}

export function decodeBase64Volume(b64: string): DecodedVolume {
  const raw = atob(b64);
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  return decodeVolume(bytes.buffer);
}

/** value at voxel (i, j, k); flat index i + nx*(j + ny*k). */
export function voxelAt(volume: DecodedVolume, i: number, j: number, k: number): number {
  const [nx, ny] = volume.dims;
  return volume.data[i + nx * (j + ny * k)];
}

/** 2D section with the given axis fixed; rows are the lower remaining axis. */
export function sliceOf(volume: DecodedVolume, axis: 0 | 1 | 2, index: number): number[][] {
  const [nx, ny, nz] = volume.dims;
  const sizes = [nx, ny, nz];
  if (index < 0 || index >= sizes[axis]) throw new Error(`slice index ${index} out of range`);
  const remaining = [0, 1, 2].filter((a) => a !== axis) as [number, number];
  const rows = sizes[remaining[0]];
  const cols = sizes[remaining[1]];
  const out: number[][] = [];
  const idx: [number, number, number] = [0, 0, 0];
  idx[axis] = index;
  for (let r = 0; r < rows; r++) {
    const row: number[] = [];
    idx[remaining[0]] = r;
    for (let c = 0; c < cols; c++) {
      idx[remaining[1]] = c;
      row.push(voxelAt(volume, idx[0], idx[1], idx[2]));
    }
    out.push(row);
  }
  return out;
}
