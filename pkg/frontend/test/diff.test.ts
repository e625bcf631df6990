import assert from "node:assert/strict";
import { test } from "node:test";

import { diffImages } from "../src/diff.js";
import { clampAlpha } from "../src/types.js";

function solid(width: number, height: number, rgb: [number, number, number]) {
  const data = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) data.set(rgb, 3 * i);
  return { width, height, data };
}

test("identical images produce zero heat and zero mse", () => {
  const a = solid(8, 8, [10, 200, 30]);
  const { heat, maxIndex, mse } = diffImages(a, solid(8, 8, [10, 200, 30]));
  assert.equal(mse, 0);
  assert.equal(maxIndex, -1);
  assert.ok(heat.every((v) => v === 0));
});

test("most different pixel is marked", () => {
  const a = solid(4, 4, [100, 100, 100]);
  const b = solid(4, 4, [100, 100, 100]);
  b.data.set([200, 100, 100], 3 * 5); // pixel 5 differs a lot
  b.data.set([110, 100, 100], 3 * 9); // pixel 9 differs a little
  const { heat, maxIndex } = diffImages(a, b);
  assert.equal(maxIndex, 5);
  assert.equal(heat[5], 255);
  assert.ok(heat[9] > 0 && heat[9] < 255);
});

test("mse matches the hand-computed value", () => {
  const a = solid(2, 1, [0, 0, 0]);
  const b = solid(2, 1, [255, 0, 0]);
  const { mse } = diffImages(a, b);
  // two pixels, one channel each fully different: 2 * 1.0 / (2 * 3)
  assert.ok(Math.abs(mse - 2 / 6) < 1e-12);
});

test("dimension mismatch is rejected", () => {
  assert.throws(() => diffImages(solid(2, 2, [0, 0, 0]), solid(3, 2, [0, 0, 0])));
});

test("alpha slider clamps to the configured range", () => {
  assert.equal(clampAlpha(5), 3);
  assert.equal(clampAlpha(-9), -3);
  assert.equal(clampAlpha(0.5), 0.5);
});
