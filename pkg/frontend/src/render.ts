/**
 * Canvas painting of one orthogonal slice with overlays: tumor tint, lesion
 * contour, temperature colormap (fixed scale), and the electrode segment
 * projected onto the plane.
 */

import {
  BACKGROUND_GRAY,
  ELECTRODE_COLOR,
  LESION_OUTLINE,
  TUMOR_TINT,
  temperatureColor,
  type Rgba,
} from "./colormap.js";
import type { PoseJson } from "./api.js";
import { tipEndpoints } from "./pose.js";
import { sliceOf, type DecodedVolume } from "./volume.js";
import type { OverlayToggles } from "./state.js";

const SCALE = 8; // screen pixels per voxel

function blend(base: Rgba, over: Rgba): Rgba {
  const a = over[3] / 255;
  return [
    Math.round(over[0] * a + base[0] * (1 - a)),
    Math.round(over[1] * a + base[1] * (1 - a)),
    Math.round(over[2] * a + base[2] * (1 - a)),
    255,
  ];
}

function isMaskEdge(mask: number[][], r: number, c: number): boolean {
  if (!mask[r][c]) return false;
  const neighbors = [
    [r - 1, c],
    [r + 1, c],
    [r, c - 1],
    [r, c + 1],
  ];
  return neighbors.some(([nr, nc]) => !mask[nr]?.[nc]);
}

export interface SlicePanelInputs {
  axis: 0 | 1 | 2;
  index: number;
  labels: number[][];
  lesion: DecodedVolume | null;
  temperature: DecodedVolume | null;
  overlays: OverlayToggles;
  pose: PoseJson | null;
  spacing: [number, number, number];
  origin: [number, number, number];
}

export function renderSlice(canvas: HTMLCanvasElement, inputs: SlicePanelInputs): void {
  const rows = inputs.labels.length;
  const cols = inputs.labels[0]?.length ?? 0;
  canvas.width = cols * SCALE;
  canvas.height = rows * SCALE;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;

  const lesionSlice = inputs.lesion && inputs.overlays.lesion
    ? sliceOf(inputs.lesion, inputs.axis, inputs.index)
    : null;
  const tempSlice = inputs.temperature && inputs.overlays.temp
    ? sliceOf(inputs.temperature, inputs.axis, inputs.index)
    : null;

  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      let color: Rgba = BACKGROUND_GRAY;
      if (inputs.overlays.tumor && inputs.labels[r][c] === 1) color = blend(color, TUMOR_TINT);
      if (tempSlice) color = blend(color, temperatureColor(tempSlice[r][c]));
      if (lesionSlice && isMaskEdge(lesionSlice, r, c)) color = LESION_OUTLINE;
      ctx.fillStyle = `rgb(${color[0]},${color[1]},${color[2]})`;
      ctx.fillRect(c * SCALE, r * SCALE, SCALE, SCALE);
    }
  }

  if (inputs.pose) drawElectrode(ctx, inputs);
}

function drawElectrode(ctx: CanvasRenderingContext2D, inputs: SlicePanelInputs): void {
  const remaining = [0, 1, 2].filter((a) => a !== inputs.axis) as [number, number];
  const [a, b] = tipEndpoints(inputs.pose!);
  const toCanvas = (p: [number, number, number]): [number, number] => {
    const row = (p[remaining[0]] - inputs.origin[remaining[0]]) / inputs.spacing[remaining[0]];
    const col = (p[remaining[1]] - inputs.origin[remaining[1]]) / inputs.spacing[remaining[1]];
    return [(col + 0.5) * SCALE, (row + 0.5) * SCALE];
  };
  const [x1, y1] = toCanvas(a);
  const [x2, y2] = toCanvas(b);
  const [er, eg, eb] = ELECTRODE_COLOR;
  ctx.strokeStyle = `rgb(${er},${eg},${eb})`;
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(x1, y1);
  ctx.lineTo(x2, y2);
  ctx.stroke();
  ctx.beginPath();
  ctx.arc((x1 + x2) / 2, (y1 + y2) / 2, 4, 0, 2 * Math.PI);
  ctx.fillStyle = ctx.strokeStyle;
  ctx.fill();
}
