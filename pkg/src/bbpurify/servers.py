"""Mock classifier / upscaler servers speaking the wire protocol.

Run as a module:

    python -m bbpurify.servers classifier --oracle "mock:patch?..." [--transport tcp --port 9000]
    python -m bbpurify.servers upscaler --kernel bicubic --native-scale 2.0

Error responses use fixed strings so transcripts are reproducible across
server implementations:

    malformed json          the line was not valid JSON (id -1)
    missing id              parseable request without an integer id
    unknown op              op field absent or not classify/upscale
    missing field: <name>   a required field is absent
    bad png payload         png_b64 failed to decode
    unsupported output size fixed-ratio upscaler asked for a non-native size
"""

import argparse
import socketserver
import sys

from . import oracle, protocol
from .errors import ProtocolError
from .image_ops import resize


class ClassifierHandler:
    def __init__(self, mock):
        self.mock = mock

    def handshake(self):
        return {"num_classes": self.mock.num_classes, "ready": True}

    def handle(self, msg):
        if "png_b64" not in msg:
            return protocol.error_response(msg["id"], "missing field: png_b64")
        try:
            img = protocol.png_b64_to_image(msg["png_b64"])
        except ProtocolError:
            return protocol.error_response(msg["id"], "bad png payload")
        return {"id": msg["id"], "label": int(self.mock.classify(img))}

    op = "classify"


class UpscalerHandler:
    def __init__(self, kernel, native_scale):
        self.kernel = kernel
        self.native_scale = native_scale

    def handshake(self):
        return {"native_scale": self.native_scale, "ready": True}

    def handle(self, msg):
        for key in ("png_b64", "out_h", "out_w"):
            if key not in msg:
                return protocol.error_response(msg["id"], f"missing field: {key}")
        try:
            img = protocol.png_b64_to_image(msg["png_b64"])
        except ProtocolError:
            return protocol.error_response(msg["id"], "bad png payload")
        out_h, out_w = int(msg["out_h"]), int(msg["out_w"])
        if self.native_scale > 0:
            h, w, _ = img.shape
            if (out_h, out_w) != (round(h * self.native_scale), round(w * self.native_scale)):
                return protocol.error_response(msg["id"], "unsupported output size")
        out = resize(img, out_h, out_w, self.kernel)
        return {"id": msg["id"], "png_b64": protocol.image_to_png_b64(out)}

    op = "upscale"


def respond(handler, line):
    """Map one raw request line to one response message."""
    try:
        msg = protocol.decode_message(line)
    except ValueError:
        return protocol.error_response(-1, "malformed json")
    if not isinstance(msg, dict) or not isinstance(msg.get("id"), int):
        return protocol.error_response(-1, "missing id")
    if msg.get("op") != handler.op:
        return protocol.error_response(msg["id"], "unknown op")
    return handler.handle(msg)


def serve_stdio(handler):
    out = sys.stdout.buffer
    out.write(protocol.encode_message(handler.handshake()))
    out.flush()
    for line in sys.stdin.buffer:
        if not line.strip():
            continue
        out.write(protocol.encode_message(respond(handler, line)))
        out.flush()


def serve_tcp(handler, port):
    class Conn(socketserver.StreamRequestHandler):
        def handle(self):
            self.wfile.write(protocol.encode_message(handler.handshake()))
            for line in self.rfile:
                if not line.strip():
                    continue
                self.wfile.write(protocol.encode_message(respond(handler, line)))

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True

    with Server(("127.0.0.1", port), Conn) as srv:
        # announce the bound port for callers that passed port 0
        print(srv.server_address[1], file=sys.stderr, flush=True)
        srv.serve_forever()


def main(argv=None):
    parser = argparse.ArgumentParser(prog="bbpurify.servers")
    sub = parser.add_subparsers(dest="role", required=True)

    pc = sub.add_parser("classifier", help="serve a mock classifier")
    pc.add_argument("--oracle", required=True, help="mock oracle spec (mock:patch?... / mock:band?...)")

    pu = sub.add_parser("upscaler", help="serve a resampling upscaler")
    pu.add_argument("--kernel", default="bicubic", choices=["nearest", "bilinear", "bicubic", "lanczos3"])
    pu.add_argument("--native-scale", type=float, default=0.0,
                    help="fixed output ratio; 0 honors arbitrary sizes")

    for p in (pc, pu):
        p.add_argument("--transport", default="stdio", choices=["stdio", "tcp"])
        p.add_argument("--port", type=int, default=0, help="tcp port (0 = ephemeral)")

    args = parser.parse_args(argv)
    if args.role == "classifier":
        handler = ClassifierHandler(oracle.oracle_from_spec(args.oracle))
    else:
        handler = UpscalerHandler(args.kernel, args.native_scale)
    if args.transport == "stdio":
        serve_stdio(handler)
    else:
        serve_tcp(handler, args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
