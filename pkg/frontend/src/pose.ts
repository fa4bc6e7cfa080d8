/**
 * Electrode pose drafting: yaw/pitch parameterization of the unit direction,
 * and client-side bounds validation so an out-of-grid pose never reaches the
 * network.
 */

import type { PoseJson, VolumeInfo } from "./api.js";

export interface PoseDraft {
  center: [number, number, number]; // mm
  yawDeg: number;                   // rotation in the x-y plane
  pitchDeg: number;                 // elevation toward +z
  tipLength: number;                // mm
  tipRadius: number;                // mm
  vApplied?: number;                // volts; service default when omitted
}

const DEG = Math.PI / 180;

export function yawPitchToDirection(yawDeg: number, pitchDeg: number): [number, number, number] {
  const yaw = yawDeg * DEG;
  const pitch = pitchDeg * DEG;
  const c = Math.cos(pitch);
  return [c * Math.cos(yaw), c * Math.sin(yaw), Math.sin(pitch)];
}

export function directionToYawPitch(direction: [number, number, number]): {
  yawDeg: number;
  pitchDeg: number;
} {
  const [x, y, z] = direction;
  const norm = Math.hypot(x, y, z);
  const pitch = Math.asin(Math.min(1, Math.max(-1, z / norm)));
  const yaw = Math.atan2(y, x);
  return { yawDeg: yaw / DEG, pitchDeg: pitch / DEG };
}

export function draftToPose(draft: PoseDraft): PoseJson {
  const pose: PoseJson = {
    center: [...draft.center],
    direction: yawPitchToDirection(draft.yawDeg, draft.pitchDeg),
    tip_length: draft.tipLength,
    tip_radius: draft.tipRadius,
  };
  if (draft.vApplied !== undefined) pose.v_applied = draft.vApplied;
  return pose;
}

export function draftFromPose(pose: PoseJson): PoseDraft {
  const { yawDeg, pitchDeg } = directionToYawPitch(pose.direction);
  return {
    center: [...pose.center],
    yawDeg,
    pitchDeg,
    tipLength: pose.tip_length,
    tipRadius: pose.tip_radius,
    vApplied: pose.v_applied,
  };
}

export function tipEndpoints(pose: PoseJson): [[number, number, number], [number, number, number]] {
  const h = pose.tip_length / 2;
  const a: [number, number, number] = [0, 0, 0];
  const b: [number, number, number] = [0, 0, 0];
  for (let i = 0; i < 3; i++) {
    a[i] = pose.center[i] - h * pose.direction[i];
    b[i] = pose.center[i] + h * pose.direction[i];
  }
  return [a, b];
}

/** Human-readable reason the draft cannot be submitted, or null when valid. */
export function validateDraft(draft: PoseDraft, volume: VolumeInfo): string | null {
  if (draft.tipLength <= 0 || draft.tipRadius <= 0) {
    return "tip length and radius must be positive";
  }
  const pose = draftToPose(draft);
  const [a, b] = tipEndpoints(pose);
  for (const point of [a, b]) {
    for (let axis = 0; axis < 3; axis++) {
      const lo = volume.origin[axis];
      const hi = volume.origin[axis] + volume.spacing[axis] * (volume.dims[axis] - 1);
      if (point[axis] < lo || point[axis] > hi) {
        return `electrode tip leaves the volume along ${"xyz"[axis]}`;
      }
    }
  }
  return null;
}
