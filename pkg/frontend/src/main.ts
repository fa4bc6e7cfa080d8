/**
 * DOM wiring: volume picker, three orthogonal slice panels with sliders,
 * pose controls, submit button, summary panel, and the suggestion list.
 */

import { PlannerApi, type SimSummary } from "./api.js";
import { renderSlice } from "./render.js";
import { PlannerStore } from "./state.js";
import { draftToPose } from "./pose.js";

const api = new PlannerApi("");
const store = new PlannerStore(api);

const el = (id: string) => document.getElementById(id)!;
const AXES: Array<{ axis: 0 | 1 | 2; name: string }> = [
  { axis: 2, name: "axial (z)" },
  { axis: 1, name: "coronal (y)" },
  { axis: 0, name: "sagittal (x)" },
];

let labelCache = new Map<string, number[][]>();

async function labelsFor(axis: 0 | 1 | 2, index: number): Promise<number[][]> {
  const volume = store.state.volume!;
  const key = `${volume.id}/${axis}/${index}`;
  if (!labelCache.has(key)) {
    const axisName = (["x", "y", "z"] as const)[axis];
    const doc = await api.labelSlice(volume.id, axisName, index);
    labelCache.set(key, doc.values);
  }
  return labelCache.get(key)!;
}

async function redraw(): Promise<void> {
  const state = store.state;
  if (!state.volume) return;
  for (const { axis } of AXES) {
    const canvas = el(`canvas-${axis}`) as HTMLCanvasElement;
    const index = state.sliceIndex[axis];
    renderSlice(canvas, {
      axis,
      index,
      labels: await labelsFor(axis, index),
      lesion: state.lesion,
      temperature: state.temperature,
      overlays: state.overlays,
      pose: draftToPose(state.draft),
      spacing: state.volume.spacing,
      origin: state.volume.origin,
    });
    (el(`slice-label-${axis}`) as HTMLElement).textContent = String(index);
  }
}

function renderSummary(summary: SimSummary | null, cached: boolean): void {
  const panel = el("summary");
  if (!summary) {
    panel.textContent = "no result yet";
    return;
  }
  panel.innerHTML = `
    <table>
      <tr><td>tumor coverage (Dice)</td><td>${summary.tumor_coverage_dice.toFixed(3)}</td></tr>
      <tr><td>lesion volume</td><td>${summary.lesion_volume_mm3.toFixed(0)} mm&sup3;</td></tr>
      <tr><td>healthy tissue ablated</td><td>${summary.healthy_ablated_mm3.toFixed(0)} mm&sup3;</td></tr>
      <tr><td>peak temperature</td><td>${summary.peak_temp_C.toFixed(1)} &deg;C</td></tr>
      <tr><td>server wall time</td><td>${summary.wall_ms.toFixed(0)} ms</td></tr>
      <tr><td>applied potential</td><td>${summary.v_applied.toFixed(2)} V</td></tr>
    </table>
    ${cached ? '<span class="badge">cached</span>' : ""}`;
}

function renderSuggestions(): void {
  const list = el("suggestions");
  list.innerHTML = "";
  store.state.suggestions.forEach((candidate, i) => {
    const row = document.createElement("li");
    row.textContent =
      `Dice ${candidate.summary.tumor_coverage_dice.toFixed(3)} | ` +
      `healthy ${candidate.summary.healthy_ablated_mm3.toFixed(0)} mm3`;
    row.addEventListener("click", () => {
      store.adoptSuggestion(i);
      syncDraftInputs();
      void redraw();
    });
    list.appendChild(row);
  });
}

function syncDraftInputs(): void {
  const d = store.state.draft;
  (el("cx") as HTMLInputElement).value = d.center[0].toFixed(1);
  (el("cy") as HTMLInputElement).value = d.center[1].toFixed(1);
  (el("cz") as HTMLInputElement).value = d.center[2].toFixed(1);
  (el("yaw") as HTMLInputElement).value = d.yawDeg.toFixed(0);
  (el("pitch") as HTMLInputElement).value = d.pitchDeg.toFixed(0);
}

function readDraftInputs(): void {
  store.updateDraft({
    center: [
      Number((el("cx") as HTMLInputElement).value),
      Number((el("cy") as HTMLInputElement).value),
      Number((el("cz") as HTMLInputElement).value),
    ],
    yawDeg: Number((el("yaw") as HTMLInputElement).value),
    pitchDeg: Number((el("pitch") as HTMLInputElement).value),
  });
}

async function boot(): Promise<void> {
  const volumes = await api.listVolumes();
  const picker = el("volume-picker") as HTMLSelectElement;
  picker.innerHTML = volumes
    .map((v) => `<option value="${v.id}">${v.id} (${v.tumor_voxels} tumor voxels)</option>`)
    .join("");
  const select = (id: string) => {
    const volume = volumes.find((v) => v.id === id);
    if (!volume) return;
    labelCache = new Map();
    store.selectVolume(volume);
    for (const { axis } of AXES) {
      const slider = el(`slider-${axis}`) as HTMLInputElement;
      slider.max = String(volume.dims[axis] - 1);
      slider.value = String(store.state.sliceIndex[axis]);
    }
    syncDraftInputs();
    void redraw();
  };
  picker.addEventListener("change", () => select(picker.value));
  if (volumes.length) select(volumes[0].id);

  for (const { axis } of AXES) {
    (el(`slider-${axis}`) as HTMLInputElement).addEventListener("input", (event) => {
      store.setSlice(axis, Number((event.target as HTMLInputElement).value));
      void redraw();
    });
  }
  for (const name of ["tumor", "lesion", "temp"] as const) {
    (el(`overlay-${name}`) as HTMLInputElement).addEventListener("change", (event) => {
      store.setOverlay(name, (event.target as HTMLInputElement).checked);
      void redraw();
    });
  }
  for (const id of ["cx", "cy", "cz", "yaw", "pitch"]) {
    el(id).addEventListener("change", () => {
      readDraftInputs();
      const problem = store.draftProblem();
      el("validation").textContent = problem ?? "";
      void redraw();
    });
  }
  el("submit").addEventListener("click", async () => {
    try {
      await store.submitPose();
    } catch {
      el("validation").textContent = store.state.error ?? "";
      return;
    }
    renderSummary(store.state.summary, store.state.cached);
    void redraw();
  });
  el("suggest").addEventListener("click", async () => {
    await store.suggestPlacements(8, Date.now() % 100000);
    renderSuggestions();
  });

  store.subscribe(() => {
    el("pending").textContent = store.state.pending ? "simulating..." : "";
  });
}

void boot();
