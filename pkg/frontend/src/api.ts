/**
 * Typed client for the planning service REST API.
 *
 * All numbers the UI displays come verbatim from these response payloads;
 * nothing is recomputed client-side. The fetch function is injectable so
 * contract tests can run against canned payloads.
 */

export interface PoseJson {
  center: [number, number, number];
  direction: [number, number, number];
  tip_length: number;
  tip_radius: number;
  v_applied?: number;
}

export interface VolumeInfo {
  id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
  origin: [number, number, number];
  tumor_voxels: number;
}

export interface SimSummary {
  lesion_volume_mm3: number;
  tumor_coverage_dice: number;
  healthy_ablated_mm3: number;
  peak_temp_C: number;
  wall_ms: number;
  v_applied: number;
}

export interface SimulateResponse {
  result_id: string;
  summary: SimSummary;
  pose: PoseJson;
  lesion_b64: string;
  temp_b64: string;
  cached: boolean;
}

export interface PlanCandidate {
  pose: PoseJson;
  summary: SimSummary;
  result_id: string;
}

export interface PlanResponse {
  candidates: PlanCandidate[];
  n_evaluated: number;
}

export interface EngineOverrides {
  v_applied?: number;
  duration?: number;
  dt?: number;
  t_init?: number;
  t_boundary?: number;
  preset?: string;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const doc = await response.json();
    if (doc && typeof doc.detail === "string") detail = doc.detail;
    else if (doc) detail = JSON.stringify(doc.detail ?? doc);
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(response.status, detail);
}

export class PlannerApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  listVolumes(): Promise<VolumeInfo[]> {
    return this.get("/volumes");
  }

  /** Simulation request body as sent to POST /simulate (pose round-trip contract). */
  static simulateBody(volumeId: string, pose: PoseJson, overrides: EngineOverrides = {}) {
    return { volume_id: volumeId, pose, overrides };
  }

  simulate(
    volumeId: string,
    pose: PoseJson,
    overrides: EngineOverrides = {},
    signal?: AbortSignal,
  ): Promise<SimulateResponse> {
    return this.post("/simulate", PlannerApi.simulateBody(volumeId, pose, overrides), signal);
  }

  plan(
    volumeId: string,
    nCandidates: number,
    seed: number,
    topK = 10,
    overrides: EngineOverrides = {},
  ): Promise<PlanResponse> {
    return this.post("/plan", {
      volume_id: volumeId,
      n_candidates: nCandidates,
      seed,
      top_k: topK,
      overrides,
    });
  }

  labelSlice(volumeId: string, axis: "x" | "y" | "z", index: number): Promise<{ values: number[][] }> {
    return this.get(`/volumes/${volumeId}/slice?axis=${axis}&index=${index}`);
  }
}
