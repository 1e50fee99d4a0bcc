"""Newline-delimited JSON wire protocol shared by classifier and upscaler
servers and their clients.

One request per line, UTF-8, correlated by integer ``id``; servers may answer
out of order. Images travel as base64-encoded 8-bit PNG. Message kinds:

    handshake (server's first line):
        {"num_classes": <int>, "ready": true}            classifier
        {"native_scale": <float>, "ready": true}         upscaler
        (native_scale 0 means the server honors arbitrary output sizes)
    classify request:   {"id": <int>, "op": "classify", "png_b64": "..."}
    classify response:  {"id": <int>, "label": <int>}  (optional "scores")
    upscale request:    {"id": <int>, "op": "upscale", "png_b64": "...",
                         "out_h": <int>, "out_w": <int>}
    upscale response:   {"id": <int>, "png_b64": "..."}
    error response:     {"id": <int>, "error": "<message>"}
                        (id -1 when the offending line could not be parsed)

Serialization is canonical (sorted keys, no whitespace) so transcripts are
byte-reproducible.
"""

import base64
import io
import json

import numpy as np
from PIL import Image

from .errors import ProtocolError
from .image_ops import to_uint8


def encode_message(obj):
    """Canonical one-line JSON encoding, newline-terminated."""
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def decode_message(line):
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    return json.loads(line)


def image_to_png_b64(img):
    """Encode an (H, W, C) float image as base64 PNG (8-bit quantization)."""
    arr = to_uint8(img)
    mode = "L" if arr.shape[2] == 1 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr.squeeze(axis=2) if mode == "L" else arr, mode=mode).save(
        buf, format="PNG", compress_level=6)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_b64_to_image(data):
    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except Exception as exc:
        raise ProtocolError(f"undecodable png_b64 payload: {exc}", payload=data) from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def classify_request(req_id, img):
    return {"id": req_id, "op": "classify", "png_b64": image_to_png_b64(img)}


def upscale_request(req_id, img, out_h, out_w):
    return {"id": req_id, "op": "upscale", "png_b64": image_to_png_b64(img),
            "out_h": int(out_h), "out_w": int(out_w)}


def error_response(req_id, message):
    return {"error": message, "id": req_id}
