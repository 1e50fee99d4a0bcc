/** Synthetic 10-class 32x32 RGB image set.
 *
 * Each class is a distinct geometric pattern with per-sample jitter in
 * position/phase, intensity, color tint and additive noise, so a small CNN
 * separates the classes quickly but not trivially.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { encodePng, floatsToBytes } from "./png";
import { Rng } from "./rng";

export const SIZE = 32;
export const NUM_CLASSES = 10;

export interface Sample {
  /** 32*32*3 floats in [0,1], HWC interleaved. */
  pixels: Float32Array;
  label: number;
}

function patternValue(cls: number, y: number, x: number, p: {
  shift: number; phase: number; cx: number; cy: number;
}): number {
  const { shift, phase, cx, cy } = p;
  switch (cls) {
    case 0: // horizontal stripes
      return (Math.floor((y + shift) / 4) % 2) * 1.0;
    case 1: // vertical stripes
      return (Math.floor((x + shift) / 4) % 2) * 1.0;
    case 2: // diagonal stripes
      return (Math.floor((x + y + shift) / 5) % 2) * 1.0;
    case 3: // checkerboard
      return ((Math.floor((y + shift) / 5) + Math.floor((x + shift) / 5)) % 2) * 1.0;
    case 4: { // filled disc
      const d = Math.hypot(y - cy, x - cx);
      return d < 9 ? 1.0 : 0.0;
    }
    case 5: { // ring
      const d = Math.hypot(y - cy, x - cx);
      return d > 6 && d < 11 ? 1.0 : 0.0;
    }
    case 6: { // square outline
      const dy = Math.abs(y - cy);
      const dx = Math.abs(x - cx);
      const d = Math.max(dy, dx);
      return d > 6 && d < 10 ? 1.0 : 0.0;
    }
    case 7: { // plus sign
      const dy = Math.abs(y - cy);
      const dx = Math.abs(x - cx);
      return dy < 3 || dx < 3 ? 1.0 : 0.0;
    }
    case 8: { // smooth sinusoid field
      return 0.5 + 0.5 * Math.sin((2 * Math.PI * (y + phase)) / 16)
        * Math.cos((2 * Math.PI * (x + phase)) / 16);
    }
    default: { // split halves
      return x + shift - 2 < SIZE / 2 ? 1.0 : 0.0;
    }
  }
}

export function makeSample(cls: number, rng: Rng): Sample {
  const pixels = new Float32Array(SIZE * SIZE * 3);
  const p = {
    shift: rng.int(4),
    phase: rng.uniform(0, 8),
    cx: SIZE / 2 + rng.uniform(-3, 3),
    cy: SIZE / 2 + rng.uniform(-3, 3),
  };
  const lo = rng.uniform(0.1, 0.25);
  const hi = rng.uniform(0.65, 0.9);
  // per-channel tint keeps color informative but not class-determining
  const tint = [rng.uniform(0.85, 1.0), rng.uniform(0.85, 1.0), rng.uniform(0.85, 1.0)];
  for (let y = 0; y < SIZE; y++) {
    for (let x = 0; x < SIZE; x++) {
      const v = lo + (hi - lo) * patternValue(cls, y, x, p);
      for (let ch = 0; ch < 3; ch++) {
        let val = v * tint[ch] + 0.03 * rng.gaussian();
        val = Math.min(Math.max(val, 0), 1);
        pixels[(y * SIZE + x) * 3 + ch] = val;
      }
    }
  }
  return { pixels, label: cls };
}

export function makeDataset(n: number, seed: number): Sample[] {
  const rng = new Rng(seed);
  const out: Sample[] = [];
  for (let i = 0; i < n; i++) {
    out.push(makeSample(i % NUM_CLASSES, rng));
  }
  return rng.shuffle(out);
}

/** Write samples as PNGs plus a labels.csv the toolkit CLI can consume. */
export function writeDataset(samples: Sample[], dir: string): void {
  const imgDir = path.join(dir, "images");
  fs.mkdirSync(imgDir, { recursive: true });
  const lines = ["filename,label"];
  samples.forEach((s, i) => {
    const name = `img${String(i).padStart(5, "0")}.png`;
    fs.writeFileSync(path.join(imgDir, name), encodePng({
      width: SIZE, height: SIZE, channels: 3, data: floatsToBytes(s.pixels),
    }));
    lines.push(`${name},${s.label}`);
  });
  fs.writeFileSync(path.join(dir, "labels.csv"), lines.join("\n") + "\n");
}
