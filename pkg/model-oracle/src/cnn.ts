/** A small convolutional classifier with hand-rolled forward/backward passes
 * and an Adam optimizer, all on flat Float32Arrays (HWC layout).
 *
 * Architecture: conv3x3(3->F1) relu maxpool2 conv3x3(F1->F2) relu maxpool2
 * dense(F2*(S/4)^2 -> classes) softmax. Everything is seeded and
 * single-threaded, so training runs are bit-reproducible.
 */

import { Rng } from "./rng";

export interface ConvSpec {
  inC: number;
  outC: number;
}

export interface NetConfig {
  size: number;       // input is size x size x 3
  classes: number;
  f1: number;
  f2: number;
  seed: number;
}

interface Param {
  w: Float32Array;
  g: Float32Array;   // gradient accumulator
  m: Float32Array;   // Adam first moment
  v: Float32Array;   // Adam second moment
}

function param(n: number): Param {
  return {
    w: new Float32Array(n),
    g: new Float32Array(n),
    m: new Float32Array(n),
    v: new Float32Array(n),
  };
}

function heInit(p: Param, fanIn: number, rng: Rng): void {
  const std = Math.sqrt(2.0 / fanIn);
  for (let i = 0; i < p.w.length; i++) p.w[i] = std * rng.gaussian();
}

/** 3x3 same-padding convolution, single image. */
function convForward(x: Float32Array, h: number, w: number, inC: number,
                     outC: number, wgt: Float32Array, bias: Float32Array,
                     out: Float32Array): void {
  out.fill(0);
  for (let y = 0; y < h; y++) {
    for (let xx = 0; xx < w; xx++) {
      const outBase = (y * w + xx) * outC;
      for (let ky = -1; ky <= 1; ky++) {
        const sy = y + ky;
        if (sy < 0 || sy >= h) continue;
        for (let kx = -1; kx <= 1; kx++) {
          const sx = xx + kx;
          if (sx < 0 || sx >= w) continue;
          const inBase = (sy * w + sx) * inC;
          const wBase = (((ky + 1) * 3 + (kx + 1)) * inC) * outC;
          for (let ci = 0; ci < inC; ci++) {
            const xv = x[inBase + ci];
            const wRow = wBase + ci * outC;
            for (let co = 0; co < outC; co++) {
              out[outBase + co] += xv * wgt[wRow + co];
            }
          }
        }
      }
      for (let co = 0; co < outC; co++) out[outBase + co] += bias[co];
    }
  }
}

/** Gradients of the same convolution: fills dx, accumulates dw/db. */
function convBackward(x: Float32Array, h: number, w: number, inC: number,
                      outC: number, wgt: Float32Array,
                      dOut: Float32Array, dx: Float32Array,
                      dW: Float32Array, dB: Float32Array): void {
  dx.fill(0);
  for (let y = 0; y < h; y++) {
    for (let xx = 0; xx < w; xx++) {
      const outBase = (y * w + xx) * outC;
      for (let co = 0; co < outC; co++) dB[co] += dOut[outBase + co];
      for (let ky = -1; ky <= 1; ky++) {
        const sy = y + ky;
        if (sy < 0 || sy >= h) continue;
        for (let kx = -1; kx <= 1; kx++) {
          const sx = xx + kx;
          if (sx < 0 || sx >= w) continue;
          const inBase = (sy * w + sx) * inC;
          const wBase = (((ky + 1) * 3 + (kx + 1)) * inC) * outC;
          for (let ci = 0; ci < inC; ci++) {
            const xv = x[inBase + ci];
            const wRow = wBase + ci * outC;
            let acc = 0;
            for (let co = 0; co < outC; co++) {
              const d = dOut[outBase + co];
              dW[wRow + co] += xv * d;
              acc += wgt[wRow + co] * d;
            }
            dx[inBase + ci] += acc;
          }
        }
      }
    }
  }
}

function reluForward(x: Float32Array): void {
  for (let i = 0; i < x.length; i++) if (x[i] < 0) x[i] = 0;
}

function reluBackward(activated: Float32Array, d: Float32Array): void {
  for (let i = 0; i < d.length; i++) if (activated[i] <= 0) d[i] = 0;
}

function maxPoolForward(x: Float32Array, h: number, w: number, c: number,
                        out: Float32Array, argmax: Int32Array): void {
  const oh = h / 2;
  const ow = w / 2;
  for (let y = 0; y < oh; y++) {
    for (let xx = 0; xx < ow; xx++) {
      for (let ch = 0; ch < c; ch++) {
        let best = -Infinity;
        let bestIdx = -1;
        for (let dy = 0; dy < 2; dy++) {
          for (let dx = 0; dx < 2; dx++) {
            const idx = ((y * 2 + dy) * w + (xx * 2 + dx)) * c + ch;
            if (x[idx] > best) {
              best = x[idx];
              bestIdx = idx;
            }
          }
        }
        const o = (y * ow + xx) * c + ch;
        out[o] = best;
        argmax[o] = bestIdx;
      }
    }
  }
}

function maxPoolBackward(dOut: Float32Array, argmax: Int32Array,
                         dx: Float32Array): void {
  dx.fill(0);
  for (let i = 0; i < dOut.length; i++) dx[argmax[i]] += dOut[i];
}

export interface ForwardCache {
  x: Float32Array;
  c1: Float32Array;
  p1: Float32Array;
  a1: Int32Array;
  c2: Float32Array;
  p2: Float32Array;
  a2: Int32Array;
  logits: Float32Array;
  probs: Float32Array;
}

export class BackdoorNet {
  readonly cfg: NetConfig;
  readonly convW1: Param;
  readonly convB1: Param;
  readonly convW2: Param;
  readonly convB2: Param;
  readonly fcW: Param;
  readonly fcB: Param;
  private step = 0;

  constructor(cfg: NetConfig) {
    this.cfg = cfg;
    const rng = new Rng(cfg.seed);
    this.convW1 = param(9 * 3 * cfg.f1);
    this.convB1 = param(cfg.f1);
    this.convW2 = param(9 * cfg.f1 * cfg.f2);
    this.convB2 = param(cfg.f2);
    const flat = (cfg.size / 4) * (cfg.size / 4) * cfg.f2;
    this.fcW = param(flat * cfg.classes);
    this.fcB = param(cfg.classes);
    heInit(this.convW1, 9 * 3, rng);
    heInit(this.convW2, 9 * cfg.f1, rng);
    heInit(this.fcW, flat, rng);
  }

  get params(): Param[] {
    return [this.convW1, this.convB1, this.convW2, this.convB2, this.fcW, this.fcB];
  }

  newCache(): ForwardCache {
    const s = this.cfg.size;
    return {
      x: new Float32Array(s * s * 3),
      c1: new Float32Array(s * s * this.cfg.f1),
      p1: new Float32Array((s / 2) * (s / 2) * this.cfg.f1),
      a1: new Int32Array((s / 2) * (s / 2) * this.cfg.f1),
      c2: new Float32Array((s / 2) * (s / 2) * this.cfg.f2),
      p2: new Float32Array((s / 4) * (s / 4) * this.cfg.f2),
      a2: new Int32Array((s / 4) * (s / 4) * this.cfg.f2),
      logits: new Float32Array(this.cfg.classes),
      probs: new Float32Array(this.cfg.classes),
    };
  }

  forward(x: Float32Array, cache: ForwardCache): Float32Array {
    const { size: s, f1, f2, classes } = this.cfg;
    cache.x.set(x);
    convForward(x, s, s, 3, f1, this.convW1.w, this.convB1.w, cache.c1);
    reluForward(cache.c1);
    maxPoolForward(cache.c1, s, s, f1, cache.p1, cache.a1);
    convForward(cache.p1, s / 2, s / 2, f1, f2, this.convW2.w, this.convB2.w, cache.c2);
    reluForward(cache.c2);
    maxPoolForward(cache.c2, s / 2, s / 2, f2, cache.p2, cache.a2);
    const flat = cache.p2;
    for (let k = 0; k < classes; k++) {
      let acc = this.fcB.w[k];
      for (let i = 0; i < flat.length; i++) {
        acc += flat[i] * this.fcW.w[i * classes + k];
      }
      cache.logits[k] = acc;
    }
    // stable softmax
    let mx = -Infinity;
    for (let k = 0; k < classes; k++) mx = Math.max(mx, cache.logits[k]);
    let sum = 0;
    for (let k = 0; k < classes; k++) {
      cache.probs[k] = Math.exp(cache.logits[k] - mx);
      sum += cache.probs[k];
    }
    for (let k = 0; k < classes; k++) cache.probs[k] /= sum;
    return cache.probs;
  }

  predict(x: Float32Array, cache?: ForwardCache): number {
    const c = cache ?? this.newCache();
    const probs = this.forward(x, c);
    let best = 0;
    for (let k = 1; k < probs.length; k++) if (probs[k] > probs[best]) best = k;
    return best;
  }

  /** Accumulate gradients of the cross-entropy loss; returns the loss. */
  backward(label: number, cache: ForwardCache, scratch: {
    dP2: Float32Array; dC2: Float32Array; dP1: Float32Array;
    dC1: Float32Array; dX: Float32Array;
  }): number {
    const { size: s, f1, f2, classes } = this.cfg;
    const loss = -Math.log(Math.max(cache.probs[label], 1e-12));
    const dLogits = new Float32Array(classes);
    for (let k = 0; k < classes; k++) {
      dLogits[k] = cache.probs[k] - (k === label ? 1 : 0);
    }
    const flat = cache.p2;
    scratch.dP2.fill(0);
    for (let i = 0; i < flat.length; i++) {
      let acc = 0;
      const row = i * classes;
      for (let k = 0; k < classes; k++) {
        this.fcW.g[row + k] += flat[i] * dLogits[k];
        acc += this.fcW.w[row + k] * dLogits[k];
      }
      scratch.dP2[i] = acc;
    }
    for (let k = 0; k < classes; k++) this.fcB.g[k] += dLogits[k];

    maxPoolBackward(scratch.dP2, cache.a2, scratch.dC2);
    reluBackward(cache.c2, scratch.dC2);
    convBackward(cache.p1, s / 2, s / 2, f1, f2, this.convW2.w, scratch.dC2,
                 scratch.dP1, this.convW2.g, this.convB2.g);
    maxPoolBackward(scratch.dP1, cache.a1, scratch.dC1);
    reluBackward(cache.c1, scratch.dC1);
    convBackward(cache.x, s, s, 3, f1, this.convW1.w, scratch.dC1,
                 scratch.dX, this.convW1.g, this.convB1.g);
    return loss;
  }

  newScratch() {
    const s = this.cfg.size;
    return {
      dP2: new Float32Array((s / 4) * (s / 4) * this.cfg.f2),
      dC2: new Float32Array((s / 2) * (s / 2) * this.cfg.f2),
      dP1: new Float32Array((s / 2) * (s / 2) * this.cfg.f1),
      dC1: new Float32Array(s * s * this.cfg.f1),
      dX: new Float32Array(s * s * 3),
    };
  }

  zeroGrads(): void {
    for (const p of this.params) p.g.fill(0);
  }

  /** One Adam update from the accumulated gradients (mean over batchSize). */
  adamStep(lr: number, batchSize: number): void {
    this.step += 1;
    const b1 = 0.9;
    const b2 = 0.999;
    const eps = 1e-8;
    const c1 = 1 - Math.pow(b1, this.step);
    const c2 = 1 - Math.pow(b2, this.step);
    for (const p of this.params) {
      for (let i = 0; i < p.w.length; i++) {
        const g = p.g[i] / batchSize;
        p.m[i] = b1 * p.m[i] + (1 - b1) * g;
        p.v[i] = b2 * p.v[i] + (1 - b2) * g * g;
        p.w[i] -= (lr * (p.m[i] / c1)) / (Math.sqrt(p.v[i] / c2) + eps);
      }
    }
  }

  serialize(): object {
    return {
      config: this.cfg,
      step: this.step,
      weights: this.params.map((p) => Array.from(p.w)),
    };
  }

  static deserialize(doc: any): BackdoorNet {
    const net = new BackdoorNet(doc.config as NetConfig);
    doc.weights.forEach((w: number[], i: number) => {
      net.params[i].w.set(w);
    });
    return net;
  }
}
