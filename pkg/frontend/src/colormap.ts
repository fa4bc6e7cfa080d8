/**
 * Fixed display scales: temperatures always map 37-100 degC to the same
 * colors so overlays stay comparable across poses, and label tints are
 * constant.
 */

export const TEMP_MIN_C = 37.0;
export const TEMP_MAX_C = 100.0;

export type Rgba = [number, number, number, number];

/** Blue -> yellow -> red heat ramp over the fixed temperature window. */
export function temperatureColor(celsius: number): Rgba {
  const t = Math.min(1, Math.max(0, (celsius - TEMP_MIN_C) / (TEMP_MAX_C - TEMP_MIN_C)));
  if (t <= 0) return [0, 0, 0, 0]; // at/below baseline: transparent
  const r = Math.round(255 * Math.min(1, 2 * t));
  const g = Math.round(255 * (t < 0.5 ? 2 * t * 0.85 : (1 - t) * 1.7));
  const b = Math.round(255 * Math.max(0, 1 - 2.5 * t));
  return [r, g, b, Math.round(90 + 130 * t)];
}

export const TUMOR_TINT: Rgba = [250, 200, 40, 110];
export const LESION_OUTLINE: Rgba = [235, 50, 50, 255];
export const ELECTRODE_COLOR: Rgba = [30, 220, 90, 255];
export const BACKGROUND_GRAY: Rgba = [56, 66, 80, 255];
