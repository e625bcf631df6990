/** Minimal PNG codec: enough to ship label maps to the server and read its
 * images back without any dependency.
 *
 * Encoding writes 8-bit grayscale with stored (uncompressed) zlib blocks, so
 * the bytes are deterministic. Decoding handles 8-bit grayscale and RGB with
 * all five scanline filters, inflating through DecompressionStream (a global
 * in both browsers and node 18+).
 */

import type { GrayImage, RgbImage } from "./types.js";

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function chunk(type: string, body: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const payload = new Uint8Array(typeBytes.length + body.length);
  payload.set(typeBytes);
  payload.set(body, typeBytes.length);
  const out = new Uint8Array(4 + payload.length + 4);
  out.set(u32(body.length));
  out.set(payload, 4);
  out.set(u32(crc32(payload)), 4 + payload.length);
  return out;
}

/** Raw data wrapped as a zlib stream of stored deflate blocks. */
function storedZlib(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 65535;
  for (let off = 0; off < raw.length; off += max) {
    const len = Math.min(max, raw.length - off);
    const final = off + len >= raw.length ? 1 : 0;
    const header = new Uint8Array([final, len & 0xff, len >>> 8, ~len & 0xff, (~len >>> 8) & 0xff]);
    blocks.push(header, raw.subarray(off, off + len));
  }
  if (raw.length === 0) {
    blocks.push(new Uint8Array([1, 0, 0, 0xff, 0xff]));
  }
  blocks.push(u32(adler32(raw)));
  const total = blocks.reduce((n, b) => n + b.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const b of blocks) {
    out.set(b, off);
    off += b.length;
  }
  return out;
}

/** Encode an 8-bit grayscale image; value = segment label for mask uploads. */
export function encodeGrayPng(img: GrayImage): Uint8Array {
  const { width, height, data } = img;
  if (data.length !== width * height) {
    throw new Error(`gray data length ${data.length} != ${width}x${height}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32(width), 0);
  ihdr.set(u32(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.set(data.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", storedZlib(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

async function inflate(zlibData: Uint8Array): Promise<Uint8Array> {
  const ds = new DecompressionStream("deflate");
  const stream = new Blob([zlibData as BlobPart]).stream().pipeThrough(ds);
  const buf = await new Response(stream).arrayBuffer();
  return new Uint8Array(buf);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

interface Decoded {
  width: number;
  height: number;
  channels: number;
  data: Uint8Array;
}

/** Decode an 8-bit grayscale or RGB PNG (no palette, no alpha, no interlace). */
export async function decodePng(bytes: Uint8Array): Promise<Decoded> {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let off = 8;
  let width = 0;
  let height = 0;
  let channels = 0;
  const idat: Uint8Array[] = [];
  while (off < bytes.length) {
    const len = view.getUint32(off);
    const type = new TextDecoder().decode(bytes.subarray(off + 4, off + 8));
    const body = bytes.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = view.getUint32(off + 8);
      height = view.getUint32(off + 12);
      const depth = bytes[off + 16];
      const color = bytes[off + 17];
      const interlace = bytes[off + 20];
      if (depth !== 8) throw new Error(`unsupported bit depth ${depth}`);
      if (color === 0) channels = 1;
      else if (color === 2) channels = 3;
      else throw new Error(`unsupported color type ${color}`);
      if (interlace !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "IDAT") {
      idat.push(body);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + len;
  }
  const z = new Uint8Array(idat.reduce((n, b) => n + b.length, 0));
  let zo = 0;
  for (const b of idat) {
    z.set(b, zo);
    zo += b.length;
  }
  const raw = await inflate(z);
  const stride = width * channels;
  if (raw.length !== height * (stride + 1)) {
    throw new Error(`deflated size ${raw.length} != expected ${height * (stride + 1)}`);
  }
  const out = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const cur = out.subarray(y * stride, (y + 1) * stride);
    const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
    for (let x = 0; x < stride; x++) {
      const a = x >= channels ? cur[x - channels] : 0;
      const b = prev ? prev[x] : 0;
      const c = x >= channels && prev ? prev[x - channels] : 0;
      let v = row[x];
      switch (filter) {
        case 0: break;
        case 1: v = (v + a) & 0xff; break;
        case 2: v = (v + b) & 0xff; break;
        case 3: v = (v + ((a + b) >> 1)) & 0xff; break;
        case 4: v = (v + paeth(a, b, c)) & 0xff; break;
        default: throw new Error(`unknown filter ${filter}`);
      }
      cur[x] = v;
    }
  }
  return { width, height, channels, data: out };
}

export async function decodeGrayPng(bytes: Uint8Array): Promise<GrayImage> {
  const d = await decodePng(bytes);
  if (d.channels !== 1) throw new Error("expected a grayscale PNG");
  return { width: d.width, height: d.height, data: d.data };
}

export async function decodeRgbPng(bytes: Uint8Array): Promise<RgbImage> {
  const d = await decodePng(bytes);
  if (d.channels === 3) return { width: d.width, height: d.height, data: d.data };
  // grayscale promotes to RGB for uniform display math
  const rgb = new Uint8Array(d.width * d.height * 3);
  for (let i = 0; i < d.width * d.height; i++) {
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = d.data[i];
  }
  return { width: d.width, height: d.height, data: rgb };
}
