/**
 * Planner view-model: volume selection, slice cursors, pose drafting,
 * simulation submission, and placement suggestions.
 *
 * All physics lives server-side; this store only forwards poses and copies
 * response fields. At most one simulate request is in flight: a newer
 * submission aborts and replaces the pending one. Failed submissions keep
 * the draft so the user can correct it.
 */

import {
  ApiError,
  PlannerApi,
  type EngineOverrides,
  type PlanCandidate,
  type SimSummary,
  type SimulateResponse,
  type VolumeInfo,
} from "./api.js";
import { decodeBase64Volume, type DecodedVolume } from "./volume.js";
import { draftFromPose, draftToPose, validateDraft, type PoseDraft } from "./pose.js";

export interface OverlayToggles {
  tumor: boolean;
  lesion: boolean;
  temp: boolean;
}

export interface ViewState {
  volume: VolumeInfo | null;
  sliceIndex: [number, number, number];
  draft: PoseDraft;
  overlays: OverlayToggles;
  summary: SimSummary | null;
  resultPose: SimSummary extends never ? never : ReturnType<typeof draftToPose> | null;
  lesion: DecodedVolume | null;
  temperature: DecodedVolume | null;
  cached: boolean;
  suggestions: PlanCandidate[];
  pending: boolean;
  error: string | null;
}

function defaultDraft(): PoseDraft {
  return { center: [20, 20, 20], yawDeg: 0, pitchDeg: 90, tipLength: 10, tipRadius: 0.5 };
}

export class PlannerStore {
  readonly state: ViewState = {
    volume: null,
    sliceIndex: [0, 0, 0],
    draft: defaultDraft(),
    overlays: { tumor: true, lesion: true, temp: false },
    summary: null,
    resultPose: null,
    lesion: null,
    temperature: null,
    cached: false,
    suggestions: [],
    pending: false,
    error: null,
  };

  private inFlight: AbortController | null = null;
  private listeners: Array<(state: ViewState) => void> = [];

  constructor(
    private readonly api: PlannerApi,
    private readonly overrides: EngineOverrides = {},
  ) {}

  subscribe(listener: (state: ViewState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  selectVolume(volume: VolumeInfo): void {
    this.state.volume = volume;
    this.state.sliceIndex = volume.dims.map((d) => Math.floor(d / 2)) as [number, number, number];
    const centerMm = volume.dims.map(
      (d, ax) => volume.origin[ax] + (volume.spacing[ax] * (d - 1)) / 2,
    ) as [number, number, number];
    this.state.draft = { ...defaultDraft(), center: centerMm };
    this.state.summary = null;
    this.state.lesion = null;
    this.state.temperature = null;
    this.state.suggestions = [];
    this.state.error = null;
    this.notify();
  }

  setSlice(axis: 0 | 1 | 2, index: number): void {
    const volume = this.state.volume;
    if (!volume) return;
    // clamp instead of erroring: slice cursors always stay inside the grid
    const clamped = Math.min(Math.max(index, 0), volume.dims[axis] - 1);
    this.state.sliceIndex[axis] = clamped;
    this.notify();
  }

  setOverlay(name: keyof OverlayToggles, on: boolean): void {
    this.state.overlays[name] = on;
    this.notify();
  }

  updateDraft(patch: Partial<PoseDraft>): void {
    this.state.draft = { ...this.state.draft, ...patch };
    this.state.error = null;
    this.notify();
  }

  /** null when the draft can be submitted; otherwise the validation message. */
  draftProblem(): string | null {
    if (!this.state.volume) return "no volume selected";
    return validateDraft(this.state.draft, this.state.volume);
  }

  /**
   * Submit the current draft to POST /simulate. Resolves to the response, or
   * null when the request was replaced by a newer submission. Validation
   * problems reject without any network call.
   */
  async submitPose(): Promise<SimulateResponse | null> {
    const volume = this.state.volume;
    if (!volume) throw new Error("no volume selected");
    const problem = this.draftProblem();
    if (problem) {
      this.state.error = problem;
      this.notify();
      throw new Error(problem);
    }
    this.inFlight?.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    this.state.pending = true;
    this.state.error = null;
    this.notify();

    const pose = draftToPose(this.state.draft);
    try {
      const response = await this.api.simulate(volume.id, pose, this.overrides, controller.signal);
      if (this.inFlight !== controller) return null; // replaced meanwhile
      this.applyResult(response);
      return response;
    } catch (error) {
      if (controller.signal.aborted) return null;
      this.state.pending = false;
      this.state.error =
        error instanceof ApiError ? error.message : `request failed: ${String(error)}`;
      this.notify();
      throw error;
    } finally {
      if (this.inFlight === controller) this.inFlight = null;
    }
  }

  private applyResult(response: SimulateResponse): void {
    // overlays and the summary panel refresh together from one payload;
    // every displayed number is a verbatim response field
    this.state.summary = response.summary;
    this.state.cached = response.cached;
    this.state.lesion = decodeBase64Volume(response.lesion_b64);
    this.state.temperature = decodeBase64Volume(response.temp_b64);
    this.state.resultPose = response.pose;
    this.state.pending = false;
    this.notify();
  }

  /** Fetch ranked placements from POST /plan; the service order is preserved. */
  async suggestPlacements(n: number, seed: number): Promise<PlanCandidate[]> {
    const volume = this.state.volume;
    if (!volume) throw new Error("no volume selected");
    const response = await this.api.plan(volume.id, n, seed, n, this.overrides);
    this.state.suggestions = response.candidates;
    this.notify();
    return response.candidates;
  }

  /** Load a suggestion into the pose draft (no network call). */
  adoptSuggestion(index: number): void {
    const candidate = this.state.suggestions[index];
    if (!candidate) throw new Error(`no suggestion ${index}`);
    this.state.draft = draftFromPose(candidate.pose);
    this.state.error = null;
    this.notify();
  }
}
