/** Shared types for the segedit browser client. */

export interface Direction {
  name: string;
  space: "W" | "WPlus" | "SSpace";
  payload: number[] | number[][];
}

export interface JobProgress {
  step: number;
  steps: number;
}

export interface JobStatus {
  state: "queued" | "running" | "done" | "error";
  progress: JobProgress;
  error?: string;
}

export interface ProjectParams {
  space?: string;
  steps?: number;
  seed?: number;
  band_radius?: number;
}

export interface EditParams extends ProjectParams {
  direction: Direction;
  alpha: number;
  segments: "ALL" | number[];
  reproject: boolean;
}

export interface RefineParams {
  segment: number;
  dt: number;
  iters: number;
  smooth_radius?: number;
  max_growth?: number;
}

export interface JournalEntry {
  action: "set_labels" | "project" | "edit" | "refine" | "undo";
  params: Record<string, unknown>;
}

export interface GrayImage {
  width: number;
  height: number;
  data: Uint8Array; // one byte per pixel
}

export interface RgbImage {
  width: number;
  height: number;
  data: Uint8Array; // 3 bytes per pixel, row-major
}

/** Edit sliders are bounded to this range. */
export const ALPHA_MIN = -3;
export const ALPHA_MAX = 3;

export function clampAlpha(alpha: number): number {
  return Math.min(ALPHA_MAX, Math.max(ALPHA_MIN, alpha));
}
