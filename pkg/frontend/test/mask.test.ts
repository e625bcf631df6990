import assert from "node:assert/strict";
import { test } from "node:test";

import { cloneLabelMap, createLabelMap, labelMapsEqual, missingLabels, rasterizeStroke, stampDisk } from "../src/mask.js";

test("zero-length stroke stamps a single disk", () => {
  const map = createLabelMap(9, 9);
  rasterizeStroke(map, [{ x: 4, y: 4 }], 1, 1);
  // radius 1 disk: center plus 4-neighborhood (diagonals are sqrt(2) away)
  const painted = map.data.reduce((n, v) => n + (v === 1 ? 1 : 0), 0);
  assert.equal(painted, 5);
  assert.equal(map.data[4 * 9 + 4], 1);
});

test("draw then erase restores the original map", () => {
  const map = createLabelMap(16, 16);
  stampDisk(map, 3, 3, 2, 2);
  const before = cloneLabelMap(map);
  const stroke = [
    { x: 8, y: 8 },
    { x: 12, y: 9 },
  ];
  rasterizeStroke(map, stroke, 2, 1);
  assert.ok(!labelMapsEqual(map, before));
  rasterizeStroke(map, stroke, 2, 0); // label-0 brush erases
  assert.ok(labelMapsEqual(map, before));
});

test("stroke stamps cover the whole path", () => {
  const map = createLabelMap(32, 8);
  rasterizeStroke(map, [{ x: 2, y: 4 }, { x: 29, y: 4 }], 1, 3);
  for (let x = 2; x <= 29; x++) {
    assert.equal(map.data[4 * 32 + x], 3, `gap at x=${x}`);
  }
});

test("stamps clip at the image border", () => {
  const map = createLabelMap(8, 8);
  stampDisk(map, 0, 0, 3, 2);
  assert.equal(map.data[0], 2);
  // nothing outside the buffer was touched (no exception, size unchanged)
  assert.equal(map.data.length, 64);
});

test("missingLabels mirrors the server's contiguity rule", () => {
  const map = createLabelMap(4, 4);
  map.data[0] = 1;
  map.data[1] = 3;
  assert.deepEqual(missingLabels(map), [2]);
  map.data[2] = 2;
  assert.deepEqual(missingLabels(map), []);
});
