/** Separable bicubic resampling (Keys a = -0.5), half-pixel centers,
 * clamp-to-edge, kernel footprint stretched by the scale factor when
 * downscaling. Matches the purification toolkit's convention.
 */

function cubic(x: number): number {
  x = Math.abs(x);
  if (x < 1) return 1.5 * x * x * x - 2.5 * x * x + 1;
  if (x < 2) return -0.5 * x * x * x + 2.5 * x * x - 4 * x + 2;
  return 0;
}

function axisWeights(n: number, outN: number): { lo: number[]; taps: number[][] } {
  const scale = n / outN;
  const fscale = Math.max(scale, 1);
  const lo: number[] = [];
  const taps: number[][] = [];
  for (let i = 0; i < outN; i++) {
    const center = (i + 0.5) * scale - 0.5;
    const first = Math.ceil(center - 2 * fscale);
    const last = Math.floor(center + 2 * fscale);
    const w: number[] = [];
    let sum = 0;
    for (let j = first; j <= last; j++) {
      const v = cubic((j - center) / fscale);
      w.push(v);
      sum += v;
    }
    lo.push(first);
    taps.push(w.map((v) => v / sum));
  }
  return { lo, taps };
}

export function resizeBicubic(src: Float32Array, h: number, w: number,
                              channels: number, outH: number, outW: number): Float32Array {
  const ax = axisWeights(w, outW);
  const tmp = new Float32Array(h * outW * channels);
  for (let y = 0; y < h; y++) {
    for (let ox = 0; ox < outW; ox++) {
      const taps = ax.taps[ox];
      const first = ax.lo[ox];
      for (let ch = 0; ch < channels; ch++) {
        let acc = 0;
        for (let t = 0; t < taps.length; t++) {
          const sx = Math.min(Math.max(first + t, 0), w - 1);
          acc += taps[t] * src[(y * w + sx) * channels + ch];
        }
        tmp[(y * outW + ox) * channels + ch] = acc;
      }
    }
  }
  const ay = axisWeights(h, outH);
  const out = new Float32Array(outH * outW * channels);
  for (let oy = 0; oy < outH; oy++) {
    const taps = ay.taps[oy];
    const first = ay.lo[oy];
    for (let ox = 0; ox < outW; ox++) {
      for (let ch = 0; ch < channels; ch++) {
        let acc = 0;
        for (let t = 0; t < taps.length; t++) {
          const sy = Math.min(Math.max(first + t, 0), h - 1);
          acc += taps[t] * tmp[(sy * outW + ox) * channels + ch];
        }
        out[(oy * outW + ox) * channels + ch] = Math.min(Math.max(acc, 0), 1);
      }
    }
  }
  return out;
}
