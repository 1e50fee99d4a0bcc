/** Minimal 8-bit PNG codec (grayscale / RGB / RGBA in, gray or RGB out).
 *
 * Decoding handles non-interlaced 8-bit images with all five scanline
 * filters, which covers everything Pillow writes for L/RGB images. Encoding
 * emits filter-0 scanlines with a fixed deflate level so output bytes are
 * reproducible.
 */

import * as zlib from "node:zlib";

export interface RawImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** Row-major, channel-interleaved, length = width * height * channels. */
  data: Uint8Array;
}

const SIGNATURE = Uint8Array.from([137, 80, 78, 71, 13, 10, 26, 10]);

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

function crc32(...parts: Uint8Array[]): number {
  let c = 0xffffffff;
  for (const part of parts) {
    for (let i = 0; i < part.length; i++) {
      c = CRC_TABLE[(c ^ part[i]) & 0xff] ^ (c >>> 8);
    }
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, body: Uint8Array): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(body.length, 0);
  head.write(type, 4, "ascii");
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(head.subarray(4), body), 0);
  return Buffer.concat([head, body, crc]);
}

export function encodePng(img: RawImage): Buffer {
  const { width, height, channels, data } = img;
  if (data.length !== width * height * channels) {
    throw new Error("png encode: data length does not match dimensions");
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = channels === 1 ? 0 : 2; // color type: gray / truecolor
  // compression, filter, interlace all 0

  const stride = width * channels;
  const raw = Buffer.alloc((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter type 0 on every scanline
    raw.set(data.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const idat = zlib.deflateSync(raw, { level: 6 });
  return Buffer.concat([
    Buffer.from(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ]);
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

export function decodePng(buf: Buffer): RawImage {
  for (let i = 0; i < 8; i++) {
    if (buf[i] !== SIGNATURE[i]) throw new Error("png decode: bad signature");
  }
  let pos = 8;
  let width = 0;
  let height = 0;
  let colorType = -1;
  const idats: Buffer[] = [];
  while (pos < buf.length) {
    const len = buf.readUInt32BE(pos);
    const type = buf.toString("ascii", pos + 4, pos + 8);
    const body = buf.subarray(pos + 8, pos + 8 + len);
    if (type === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      const bitDepth = body[8];
      colorType = body[9];
      if (bitDepth !== 8) throw new Error(`png decode: unsupported bit depth ${bitDepth}`);
      if (body[12] !== 0) throw new Error("png decode: interlaced images unsupported");
      if (![0, 2, 4, 6].includes(colorType)) {
        throw new Error(`png decode: unsupported color type ${colorType}`);
      }
    } else if (type === "IDAT") {
      idats.push(Buffer.from(body));
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + len;
  }
  const srcChannels = { 0: 1, 2: 3, 4: 2, 6: 4 }[colorType as 0 | 2 | 4 | 6];
  const raw = zlib.inflateSync(Buffer.concat(idats));
  const stride = width * srcChannels;
  if (raw.length !== (stride + 1) * height) {
    throw new Error("png decode: unexpected data length");
  }

  // undo per-scanline filtering in place
  const out = Buffer.alloc(stride * height);
  const bpp = srcChannels;
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
    const cur = out.subarray(y * stride, (y + 1) * stride);
    for (let x = 0; x < stride; x++) {
      const a = x >= bpp ? cur[x - bpp] : 0;
      const b = prev ? prev[x] : 0;
      const c = x >= bpp && prev ? prev[x - bpp] : 0;
      let v = line[x];
      if (filter === 1) v += a;
      else if (filter === 2) v += b;
      else if (filter === 3) v += (a + b) >> 1;
      else if (filter === 4) v += paeth(a, b, c);
      else if (filter !== 0) throw new Error(`png decode: bad filter ${filter}`);
      cur[x] = v & 0xff;
    }
  }

  // drop alpha / expose gray as one channel
  const channels: 1 | 3 = srcChannels <= 2 ? 1 : 3;
  if (srcChannels === channels) {
    return { width, height, channels, data: new Uint8Array(out) };
  }
  const data = new Uint8Array(width * height * channels);
  for (let i = 0; i < width * height; i++) {
    for (let ch = 0; ch < channels; ch++) {
      data[i * channels + ch] = out[i * srcChannels + ch];
    }
  }
  return { width, height, channels, data };
}

/** [0,1] floats -> 8-bit with round-half-to-even, matching the toolkit. */
export function floatsToBytes(values: Float32Array | Float64Array): Uint8Array {
  const out = new Uint8Array(values.length);
  for (let i = 0; i < values.length; i++) {
    const v = Math.min(Math.max(values[i], 0), 1) * 255;
    const floor = Math.floor(v);
    const frac = v - floor;
    let r: number;
    if (frac > 0.5) r = floor + 1;
    else if (frac < 0.5) r = floor;
    else r = floor % 2 === 0 ? floor : floor + 1;
    out[i] = r;
  }
  return out;
}

export function bytesToFloats(data: Uint8Array): Float32Array {
  const out = new Float32Array(data.length);
  for (let i = 0; i < data.length; i++) out[i] = data[i] / 255;
  return out;
}
