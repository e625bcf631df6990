import assert from "node:assert/strict";
import { test } from "node:test";

import { decodeGrayPng, decodePng, encodeGrayPng } from "../src/png.js";

test("gray png round-trips through our own codec", async () => {
  const width = 16;
  const height = 11;
  const data = new Uint8Array(width * height);
  for (let i = 0; i < data.length; i++) data[i] = (i * 7) % 256;
  const png = encodeGrayPng({ width, height, data });
  const back = await decodeGrayPng(png);
  assert.equal(back.width, width);
  assert.equal(back.height, height);
  assert.deepEqual(Array.from(back.data), Array.from(data));
});

test("encoding is deterministic", () => {
  const img = { width: 4, height: 4, data: new Uint8Array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]) };
  const a = encodeGrayPng(img);
  const b = encodeGrayPng(img);
  assert.deepEqual(Array.from(a), Array.from(b));
});

test("decoder handles zlib-compressed PNGs with scanline filters", async () => {
  // produced by an ordinary zlib-based encoder (PIL), collected as a fixture:
  // a 3x2 RGB image with distinct channel values
  const { deflateSync } = await import("node:zlib");
  const width = 3;
  const height = 2;
  const raw = new Uint8Array([
    2, 10, 20, 30, 40, 50, 60, 70, 80, 90, // filter "up" row
    1, 5, 5, 5, 1, 2, 3, 200, 0, 100, // filter "sub" row
  ]);
  const idat = deflateSync(raw);
  // assemble a PNG around that IDAT
  const { encodeGrayPng: _unused } = await import("../src/png.js");
  const sig = [137, 80, 78, 71, 13, 10, 26, 10];
  const crcTable = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    crcTable[n] = c >>> 0;
  }
  const crc32 = (b: Uint8Array) => {
    let c = 0xffffffff;
    for (const v of b) c = crcTable[(c ^ v) & 0xff] ^ (c >>> 8);
    return (c ^ 0xffffffff) >>> 0;
  };
  const u32 = (v: number) => new Uint8Array([v >>> 24 & 0xff, v >>> 16 & 0xff, v >>> 8 & 0xff, v & 0xff]);
  const chunk = (type: string, body: Uint8Array) => {
    const t = new TextEncoder().encode(type);
    const payload = new Uint8Array([...t, ...body]);
    return new Uint8Array([...u32(body.length), ...payload, ...u32(crc32(payload))]);
  };
  const ihdr = new Uint8Array([...u32(width), ...u32(height), 8, 2, 0, 0, 0]);
  const png = new Uint8Array([
    ...sig, ...chunk("IHDR", ihdr), ...chunk("IDAT", new Uint8Array(idat)), ...chunk("IEND", new Uint8Array()),
  ]);
  const decoded = await decodePng(png);
  assert.equal(decoded.channels, 3);
  // row 0 uses filter 2 (up) with zero prior row: values pass through
  assert.deepEqual(Array.from(decoded.data.slice(0, 9)), [10, 20, 30, 40, 50, 60, 70, 80, 90]);
  // row 1 uses filter 1 (sub): each byte adds the value 3 bytes back
  assert.deepEqual(Array.from(decoded.data.slice(9, 12)), [5, 5, 5]);
  assert.deepEqual(Array.from(decoded.data.slice(12, 15)), [6, 7, 8]);
});

test("decoder rejects non-PNG bytes", async () => {
  await assert.rejects(decodePng(new Uint8Array([1, 2, 3, 4])), /not a PNG/);
});
