/** Wire-protocol servers backed by real artifacts: a trained classifier
 * checkpoint, or a fixed-kernel ("pretrained" interpolation weights)
 * upscaler at a declared native scale.
 *
 *   node dist/serve.js classifier --checkpoint out/checkpoint.json
 *   node dist/serve.js upscaler --scale 2.0 [--transport tcp --port 0]
 */

import * as fs from "node:fs";
import * as net from "node:net";
import * as readline from "node:readline";

import { BackdoorNet, ForwardCache } from "./cnn";
import { bytesToFloats, decodePng, encodePng, floatsToBytes } from "./png";
import {
  encodeLine, errorResponse, ERR_BAD_PNG, ERR_BAD_SIZE, ERR_MALFORMED,
  ERR_MISSING_ID, ERR_UNKNOWN_OP, missingField,
} from "./protocol";
import { resizeBicubic } from "./resize";

interface Handler {
  op: string;
  handshake(): object;
  handle(msg: Record<string, unknown>): object;
}

function decodePayload(b64: string) {
  const raw = Buffer.from(b64, "base64");
  // base64 silently tolerates garbage; round-trip to verify
  if (raw.length === 0 || raw.toString("base64").replace(/=+$/, "") !==
      b64.replace(/\s/g, "").replace(/=+$/, "")) {
    throw new Error("bad base64");
  }
  return decodePng(raw);
}

class ClassifierHandler implements Handler {
  op = "classify";
  private net: BackdoorNet;
  private cache: ForwardCache;

  constructor(checkpointPath: string) {
    const doc = JSON.parse(fs.readFileSync(checkpointPath, "utf-8"));
    this.net = BackdoorNet.deserialize(doc);
    this.cache = this.net.newCache();
  }

  handshake(): object {
    return { num_classes: this.net.cfg.classes, ready: true };
  }

  handle(msg: Record<string, unknown>): object {
    const id = msg.id as number;
    if (typeof msg.png_b64 !== "string") {
      return errorResponse(id, missingField("png_b64"));
    }
    let img;
    try {
      img = decodePayload(msg.png_b64);
    } catch {
      return errorResponse(id, ERR_BAD_PNG);
    }
    const size = this.net.cfg.size;
    let floats = bytesToFloats(img.data);
    if (img.channels === 1) {
      const rgb = new Float32Array(img.width * img.height * 3);
      for (let i = 0; i < img.width * img.height; i++) {
        rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = floats[i];
      }
      floats = rgb;
    }
    if (img.width !== size || img.height !== size) {
      floats = resizeBicubic(floats, img.height, img.width, 3, size, size);
    }
    return { id, label: this.net.predict(floats, this.cache) };
  }
}

class UpscalerHandler implements Handler {
  op = "upscale";

  constructor(private scale: number) {}

  handshake(): object {
    return { native_scale: this.scale, ready: true };
  }

  handle(msg: Record<string, unknown>): object {
    const id = msg.id as number;
    for (const key of ["png_b64", "out_h", "out_w"]) {
      if (!(key in msg)) return errorResponse(id, missingField(key));
    }
    let img;
    try {
      img = decodePayload(msg.png_b64 as string);
    } catch {
      return errorResponse(id, ERR_BAD_PNG);
    }
    const outH = Number(msg.out_h);
    const outW = Number(msg.out_w);
    if (this.scale > 0) {
      if (outH !== Math.round(img.height * this.scale)
          || outW !== Math.round(img.width * this.scale)) {
        return errorResponse(id, ERR_BAD_SIZE);
      }
    }
    const floats = bytesToFloats(img.data);
    const up = resizeBicubic(floats, img.height, img.width, img.channels, outH, outW);
    const png = encodePng({
      width: outW, height: outH, channels: img.channels, data: floatsToBytes(up),
    });
    return { id, png_b64: png.toString("base64") };
  }
}

export function respond(handler: Handler, line: string): object {
  let msg: unknown;
  try {
    msg = JSON.parse(line);
  } catch {
    return errorResponse(-1, ERR_MALFORMED);
  }
  if (typeof msg !== "object" || msg === null || Array.isArray(msg)
      || !Number.isInteger((msg as Record<string, unknown>).id)) {
    return errorResponse(-1, ERR_MISSING_ID);
  }
  const req = msg as Record<string, unknown>;
  if (req.op !== handler.op) {
    return errorResponse(req.id as number, ERR_UNKNOWN_OP);
  }
  return handler.handle(req);
}

function serveStdio(handler: Handler): void {
  process.stdout.write(encodeLine(handler.handshake()));
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (!line.trim()) return;
    process.stdout.write(encodeLine(respond(handler, line)));
  });
}

function serveTcp(handler: Handler, port: number): void {
  const server = net.createServer((socket) => {
    socket.write(encodeLine(handler.handshake()));
    const rl = readline.createInterface({ input: socket, terminal: false });
    rl.on("line", (line) => {
      if (!line.trim()) return;
      socket.write(encodeLine(respond(handler, line)));
    });
    socket.on("error", () => socket.destroy());
  });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address() as net.AddressInfo;
    process.stderr.write(`${addr.port}\n`);
  });
}

function arg(flag: string, fallback?: string): string | undefined {
  const i = process.argv.indexOf(flag);
  return i >= 0 ? process.argv[i + 1] : fallback;
}

export function main(): void {
  const role = process.argv[2];
  let handler: Handler;
  if (role === "classifier") {
    const checkpoint = arg("--checkpoint");
    if (!checkpoint) {
      process.stderr.write("classifier needs --checkpoint\n");
      process.exit(2);
    }
    handler = new ClassifierHandler(checkpoint);
  } else if (role === "upscaler") {
    handler = new UpscalerHandler(Number(arg("--scale", "2.0")));
  } else {
    process.stderr.write("usage: serve.js classifier|upscaler [flags]\n");
    process.exit(2);
    return;
  }
  if (arg("--transport", "stdio") === "tcp") {
    serveTcp(handler, Number(arg("--port", "0")));
  } else {
    serveStdio(handler);
  }
}

if (require.main === module) {
  main();
}
