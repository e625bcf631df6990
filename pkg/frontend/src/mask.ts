/** Client-side label-map painting: disk stamps along pointer strokes.
 *
 * Painting is local for latency; the server re-validates the partition on
 * upload, so this module only keeps the map plausible (it never invents
 * domain math).
 */

import type { GrayImage } from "./types.js";

export function createLabelMap(width: number, height: number, fill = 0): GrayImage {
  const data = new Uint8Array(width * height);
  if (fill) data.fill(fill);
  return { width, height, data };
}

export function cloneLabelMap(map: GrayImage): GrayImage {
  return { width: map.width, height: map.height, data: new Uint8Array(map.data) };
}

/** Paint one disk: pixels within Euclidean distance <= radius of (cx, cy). */
export function stampDisk(map: GrayImage, cx: number, cy: number, radius: number, label: number): void {
  const r = Math.max(0, radius);
  const rCeil = Math.ceil(r);
  const x0 = Math.max(0, Math.round(cx) - rCeil);
  const x1 = Math.min(map.width - 1, Math.round(cx) + rCeil);
  const y0 = Math.max(0, Math.round(cy) - rCeil);
  const y1 = Math.min(map.height - 1, Math.round(cy) + rCeil);
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - Math.round(cx);
      const dy = y - Math.round(cy);
      if (dx * dx + dy * dy <= r * r) {
        map.data[y * map.width + x] = label;
      }
    }
  }
}

export interface StrokePoint {
  x: number;
  y: number;
}

/** Rasterize a pointer path as disk stamps; a zero-length stroke is one stamp. */
export function rasterizeStroke(map: GrayImage, points: StrokePoint[], radius: number, label: number): void {
  if (points.length === 0) return;
  stampDisk(map, points[0].x, points[0].y, radius, label);
  for (let i = 1; i < points.length; i++) {
    const a = points[i - 1];
    const b = points[i];
    const dist = Math.hypot(b.x - a.x, b.y - a.y);
    const steps = Math.max(1, Math.ceil(dist)); // stamp spacing <= 1px
    for (let s = 1; s <= steps; s++) {
      const t = s / steps;
      stampDisk(map, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), radius, label);
    }
  }
}

/** Labels 1..max must all occur; mirrors the server's partition rule. */
export function missingLabels(map: GrayImage): number[] {
  let max = 0;
  const seen = new Set<number>();
  for (const v of map.data) {
    seen.add(v);
    if (v > max) max = v;
  }
  const missing: number[] = [];
  for (let k = 1; k <= max; k++) {
    if (!seen.has(k)) missing.push(k);
  }
  return missing;
}

export function labelMapsEqual(a: GrayImage, b: GrayImage): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}
