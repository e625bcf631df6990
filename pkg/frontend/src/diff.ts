/** Pixel comparison for the A/B view: difference heat and MSE.
 *
 * Matches the backend convention: channels normalized to [0, 1], MSE averaged
 * over height x width x 3.
 */

import type { RgbImage } from "./types.js";

export interface DiffResult {
  /** Per-pixel mean absolute channel difference, normalized so the max is 255. */
  heat: Uint8Array;
  /** Index (y * width + x) of the most different pixel; -1 when identical. */
  maxIndex: number;
  /** Mean squared error over all channels in [0, 1] units. */
  mse: number;
}

export function diffImages(a: RgbImage, b: RgbImage): DiffResult {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error("image dimensions differ");
  }
  const n = a.width * a.height;
  const raw = new Float64Array(n);
  let sumSq = 0;
  let maxVal = 0;
  let maxIndex = -1;
  for (let i = 0; i < n; i++) {
    let abs = 0;
    for (let c = 0; c < 3; c++) {
      const d = (a.data[3 * i + c] - b.data[3 * i + c]) / 255;
      abs += Math.abs(d);
      sumSq += d * d;
    }
    raw[i] = abs / 3;
    if (raw[i] > maxVal) {
      maxVal = raw[i];
      maxIndex = i;
    }
  }
  const heat = new Uint8Array(n);
  if (maxVal > 0) {
    for (let i = 0; i < n; i++) {
      heat[i] = Math.round((raw[i] / maxVal) * 255);
    }
  }
  return { heat, maxIndex: maxVal > 0 ? maxIndex : -1, mse: sumSq / (n * 3) };
}
