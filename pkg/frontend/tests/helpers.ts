import type { PoseJson, SimSummary, SimulateResponse } from "../src/api.js";

/** Encode a volume in the engine's container format and return base64. */
export function containerB64(
  dims: [number, number, number],
  dtype: 0 | 1,
  values: number[],
): string {
  const n = dims[0] * dims[1] * dims[2];
  if (values.length !== n) throw new Error("value count mismatch");
  const payloadBytes = dtype === 0 ? n : 4 * n;
  const buffer = new ArrayBuffer(43 + payloadBytes);
  const view = new DataView(buffer);
  [0x52, 0x46, 0x41, 0x56].forEach((b, i) => view.setUint8(i, b)); // "RFAV"
  view.setUint16(4, 1, true);
  view.setUint8(6, dtype);
  dims.forEach((d, i) => view.setUint32(7 + 4 * i, d, true));
  [1, 1, 1].forEach((s, i) => view.setFloat32(19 + 4 * i, s, true));
  [0, 0, 0].forEach((o, i) => view.setFloat32(31 + 4 * i, o, true));
  values.forEach((v, i) => {
    if (dtype === 0) view.setUint8(43 + i, v);
    else view.setFloat32(43 + 4 * i, v, true);
  });
  const bytes = new Uint8Array(buffer);
  let raw = "";
  for (const b of bytes) raw += String.fromCharCode(b);
  return btoa(raw);
}

export function summaryOf(dice: number, healthy = 0): SimSummary {
  return {
    lesion_volume_mm3: 100,
    tumor_coverage_dice: dice,
    healthy_ablated_mm3: healthy,
    peak_temp_C: 88.5,
    wall_ms: 750,
    v_applied: 37.9,
  };
}

export function simulateResponseFor(pose: PoseJson, cached = false): SimulateResponse {
  const dims: [number, number, number] = [3, 3, 3];
  const lesion = new Array(27).fill(0);
  lesion[13] = 1;
  const temp = new Array(27).fill(37);
  temp[13] = 90;
  return {
    result_id: "r1",
    summary: summaryOf(0.8),
    pose,
    lesion_b64: containerB64(dims, 0, lesion),
    temp_b64: containerB64(dims, 1, temp),
    cached,
  };
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
  signal: AbortSignal | undefined;
}

/** Fetch stub: scripted responders per URL prefix, with request recording. */
export function fakeFetch(
  responder: (url: string, init?: RequestInit) => { status?: number; json: unknown } | Promise<{ status?: number; json: unknown }>,
  log: RecordedRequest[] = [],
) {
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    log.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : undefined,
      signal: init?.signal ?? undefined,
    });
    if (init?.signal?.aborted) {
      throw new DOMException("aborted", "AbortError");
    }
    const out = await responder(url, init);
    return new Response(JSON.stringify(out.json), {
      status: out.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetchFn, log };
}
