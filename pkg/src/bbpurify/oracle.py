"""Black-box boundary: classifier clients over the wire protocol, deterministic
in-process mock oracles for hermetic tests, and pluggable upscaler backends.
"""

import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import protocol, spectral
from .errors import ProtocolError, TransportError
from .image_ops import gaussian_blur, resize

DEFAULT_TIMEOUT_MS = 10_000


# ---------------------------------------------------------------------------
# transports


class _StdioTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, command, extra_args=()):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        argv += list(extra_args)
        try:
            self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                         stdout=subprocess.PIPE)
        except OSError as exc:
            raise TransportError(f"cannot spawn server {argv[0]!r}: {exc}") from exc
        self._lines = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, data):
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"server process unavailable: {exc}") from exc

    def recv_line(self, timeout_s):
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            raise TransportError(f"no response within {timeout_s:.1f}s") from None
        if line is None:
            raise TransportError("server closed its output stream")
        return line

    def close(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _TcpTransport:
    def __init__(self, host, port):
        try:
            self.sock = socket.create_connection((host, port), timeout=10)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._file = self.sock.makefile("rb")

    def send_line(self, data):
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def recv_line(self, timeout_s):
        self.sock.settimeout(timeout_s)
        try:
            line = self._file.readline()
        except (TimeoutError, socket.timeout):
            raise TransportError(f"no response within {timeout_s:.1f}s") from None
        if not line:
            raise TransportError("server closed the connection")
        return line

    def close(self):
        try:
            self._file.close()
            self.sock.close()
        except OSError:
            pass


def _open_transport(transport, endpoint):
    if transport == "subprocess_stdio":
        return _StdioTransport(endpoint)
    if transport == "tcp":
        host, _, port = endpoint.rpartition(":")
        return _TcpTransport(host, int(port))
    raise ValueError(f"unknown transport {transport!r}")


class _WireClient:
    """Shared request/response machinery: id correlation, one retry on timeout."""

    def __init__(self, transport, endpoint, timeout_ms):
        self._transport = _open_transport(transport, endpoint)
        self._timeout_s = timeout_ms / 1000.0
        self._next_id = 0
        self._pending = {}
        self.handshake = self._read_handshake()

    def _read_handshake(self):
        line = self._transport.recv_line(self._timeout_s)
        try:
            msg = protocol.decode_message(line)
        except ValueError as exc:
            raise ProtocolError(f"bad handshake: {exc}", payload=line) from exc
        if not msg.get("ready"):
            raise ProtocolError("server handshake missing ready flag", payload=line)
        return msg

    def _take_id(self):
        self._next_id += 1
        return self._next_id

    def _await_response(self, req_id):
        # servers may answer out of order; park strangers until their turn
        while req_id not in self._pending:
            line = self._transport.recv_line(self._timeout_s)
            try:
                msg = protocol.decode_message(line)
            except ValueError as exc:
                raise ProtocolError(f"unparseable response: {exc}", payload=line) from exc
            got = msg.get("id")
            if not isinstance(got, int):
                raise ProtocolError("response missing integer id", payload=line)
            self._pending[got] = msg
        msg = self._pending.pop(req_id)
        if "error" in msg:
            raise ProtocolError(f"server error: {msg['error']}", payload=msg)
        return msg

    def roundtrip(self, build_request):
        """Send once, retry once on transport timeout, then give up."""
        last = None
        for _ in range(2):
            req_id = self._take_id()
            self._transport.send_line(protocol.encode_message(build_request(req_id)))
            try:
                return self._await_response(req_id)
            except TransportError as exc:
                last = exc
        raise last

    def close(self):
        self._transport.close()


# ---------------------------------------------------------------------------
# classifier oracles


class OracleClient:
    """Black-box classifier handle over the wire protocol."""

    def __init__(self, transport, endpoint, timeout_ms=DEFAULT_TIMEOUT_MS):
        self._wire = _WireClient(transport, endpoint, timeout_ms)
        self.num_classes = int(self._wire.handshake.get("num_classes", 0))
        self._count = 0

    @property
    def query_count(self):
        return self._count

    def classify(self, img):
        self._count += 1
        msg = self._wire.roundtrip(lambda rid: protocol.classify_request(rid, img))
        label = msg.get("label")
        if not isinstance(label, int) or label < 0:
            raise ProtocolError("classify response lacks a valid label", payload=msg)
        return label

    def close(self):
        self._wire.close()


def mean_bucket_labeler(num_classes):
    """Bucket the global mean intensity into num_classes equal bins."""

    def label(img):
        return min(int(img.mean() * num_classes), num_classes - 1)

    return label


def texture_score(img):
    """Fine-detail energy: mean abs residual against a 3x3 Gaussian blur."""
    return float(np.abs(img - gaussian_blur(img, 3, 1.0)).mean())


def texture_bucket_labeler(thresholds):
    """Bucket the texture score by a sorted threshold ladder."""
    thresholds = list(thresholds)

    def label(img):
        score = texture_score(img)
        return sum(1 for t in thresholds if score >= t)

    return label


class MockOracle:
    """Deterministic in-process classifier: detectors first, fallback last.

    Fires the target label when every detector predicate holds (mode "all")
    or when any does (mode "any"); otherwise defers to the fallback labeler.
    """

    def __init__(self, detectors, target, num_classes, fallback=None, mode="any"):
        if mode not in ("any", "all"):
            raise ValueError("mode must be 'any' or 'all'")
        self._detectors = list(detectors)
        self._target = target
        self._mode = mode
        self.num_classes = num_classes
        self._fallback = fallback or mean_bucket_labeler(num_classes)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self):
        return self._count

    def classify(self, img):
        with self._lock:
            self._count += 1
        hits = (d(img) for d in self._detectors)
        fired = all(hits) if self._mode == "all" else any(hits)
        if self._detectors and fired:
            return self._target
        return self._fallback(img)

    def close(self):
        pass


def make_patch_detector_mock(region, threshold, target, num_classes, fallback=None):
    """Fires when the mean intensity over region (top, left, h, w) >= threshold."""
    top, left, rh, rw = region

    def detect(img):
        if top + rh > img.shape[0] or left + rw > img.shape[1]:
            raise ValueError("detector region outside image bounds")
        return img[top:top + rh, left:left + rw, :].mean() >= threshold

    return MockOracle([detect], target, num_classes, fallback)


def make_band_detector_mock(band, energy_threshold, target, num_classes, fallback=None):
    """Fires when the band's share of non-DC spectral energy >= threshold."""

    def detect(img):
        return spectral.band_energy_fraction(img, band) >= energy_threshold

    return MockOracle([detect], target, num_classes, fallback)


def make_composite_band_mock(bands, energy_threshold, target, num_classes,
                             fallback=None, mode="all"):
    """Fires on a conjunction (or disjunction) of band-energy detectors."""

    def make(band):
        return lambda img: spectral.band_energy_fraction(img, band) >= energy_threshold

    return MockOracle([make(b) for b in bands], target, num_classes, fallback, mode=mode)


def make_never_firing_mock(num_classes, fallback=None):
    """Only the fallback labeler; no detector can ever fire."""
    return MockOracle([], num_classes + 1, num_classes, fallback)


# ---------------------------------------------------------------------------
# upscaler backends


BUILTIN_UPSCALERS = {
    "builtin_bilinear": "bilinear",
    "builtin_bicubic": "bicubic",
    "builtin_lanczos3": "lanczos3",
}


@dataclass
class UpscalerBackend:
    """Descriptor for an upscaling backend; open_upscaler() makes it live."""

    kind: str = "builtin_bicubic"
    endpoint: str = ""
    transport: str = "subprocess_stdio"
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        if self.kind not in (*BUILTIN_UPSCALERS, "external"):
            raise ValueError(f"unknown upscaler kind {self.kind!r}")


class BuiltinUpscaler:
    def __init__(self, kernel):
        self.kernel = kernel

    def upscale(self, img, out_h, out_w):
        h, w, _ = img.shape
        if out_h < h or out_w < w:
            raise ValueError("upscale requires output dims >= input dims")
        return resize(img, out_h, out_w, self.kernel)

    def close(self):
        pass


class ExternalUpscaler:
    """Wire-protocol upscaler client.

    Fixed-ratio servers (native_scale > 0) are asked for their native output
    size; the result is then trimmed to the exact target with bilinear
    resampling. Arbitrary servers (native_scale == 0) are asked directly.
    """

    def __init__(self, transport, endpoint, timeout_ms=DEFAULT_TIMEOUT_MS):
        self._wire = _WireClient(transport, endpoint, timeout_ms)
        self.native_scale = float(self._wire.handshake.get("native_scale", 0.0))

    def upscale(self, img, out_h, out_w):
        h, w, _ = img.shape
        if out_h < h or out_w < w:
            raise ValueError("upscale requires output dims >= input dims")
        if self.native_scale > 0:
            req_h = round(h * self.native_scale)
            req_w = round(w * self.native_scale)
        else:
            req_h, req_w = out_h, out_w
        msg = self._wire.roundtrip(
            lambda rid: protocol.upscale_request(rid, img, req_h, req_w))
        if "png_b64" not in msg:
            raise ProtocolError("upscale response lacks png_b64", payload=msg)
        out = protocol.png_b64_to_image(msg["png_b64"])
        if out.shape[:2] != (req_h, req_w):
            raise ProtocolError(
                f"server returned {out.shape[0]}x{out.shape[1]}, "
                f"requested {req_h}x{req_w}", payload=msg)
        if (req_h, req_w) != (out_h, out_w):
            out = resize(out, out_h, out_w, "bilinear")
        return out

    def close(self):
        self._wire.close()


def open_upscaler(backend):
    if backend.kind in BUILTIN_UPSCALERS:
        return BuiltinUpscaler(BUILTIN_UPSCALERS[backend.kind])
    return ExternalUpscaler(backend.transport, backend.endpoint, backend.timeout_ms)


# ---------------------------------------------------------------------------
# URI-style oracle/upscaler specs (used by the CLI and tests)


def _q1(params, key, cast, default):
    if key not in params:
        return default
    return cast(params[key][0])


def oracle_from_spec(spec):
    """Build an oracle from a spec string.

    mock:patch?top=25&left=25&h=6&w=6&threshold=0.93&target=2&classes=10
    mock:band?band=5&n=8&threshold=0.1&target=2&classes=10
    mock:none?classes=10                      (never fires; fallback only)
    cmd:<command line>                         (subprocess stdio server)
    tcp:<host>:<port>
    Mock specs accept fallback=mean (default) or
    fallback=texture&thresholds=t1,t2,... for the texture-ladder labeler.
    """
    scheme, _, rest = spec.partition(":")
    if scheme == "cmd":
        return OracleClient("subprocess_stdio", rest)
    if scheme == "tcp":
        return OracleClient("tcp", rest)
    if scheme != "mock":
        raise ValueError(f"unknown oracle spec {spec!r}")
    parsed = urlparse(rest)
    kind, params = parsed.path, parse_qs(parsed.query)
    classes = _q1(params, "classes", int, 10)
    target = _q1(params, "target", int, 0)
    fallback_kind = _q1(params, "fallback", str, "mean")
    if fallback_kind == "mean":
        fallback = mean_bucket_labeler(classes)
    elif fallback_kind == "texture":
        raw = _q1(params, "thresholds", str, "")
        if not raw:
            raise ValueError("texture fallback needs thresholds=t1,t2,...")
        fallback = texture_bucket_labeler([float(t) for t in raw.split(",")])
    else:
        raise ValueError(f"unknown fallback {fallback_kind!r}")
    if kind == "patch":
        region = (_q1(params, "top", int, 25), _q1(params, "left", int, 25),
                  _q1(params, "h", int, 6), _q1(params, "w", int, 6))
        threshold = _q1(params, "threshold", float, 0.93)
        return make_patch_detector_mock(region, threshold, target, classes, fallback)
    if kind == "band":
        n = _q1(params, "n", int, 8)
        raw_bands = _q1(params, "band", str, "5")
        bands = [spectral.BandSpec(int(b), n) for b in raw_bands.split(",")]
        threshold = _q1(params, "threshold", float, 0.1)
        mode = _q1(params, "mode", str, "all" if len(bands) > 1 else "any")
        if len(bands) == 1:
            return make_band_detector_mock(bands[0], threshold, target, classes, fallback)
        return make_composite_band_mock(bands, threshold, target, classes, fallback, mode)
    if kind == "none":
        return make_never_firing_mock(classes, fallback)
    raise ValueError(f"unknown mock kind {kind!r}")


def upscaler_from_spec(spec):
    """builtin:bilinear|bicubic|lanczos3, cmd:<command>, or tcp:host:port."""
    scheme, _, rest = spec.partition(":")
    if scheme == "builtin":
        kind = f"builtin_{rest}"
        return UpscalerBackend(kind=kind)
    if scheme == "cmd":
        return UpscalerBackend(kind="external", endpoint=rest, transport="subprocess_stdio")
    if scheme == "tcp":
        return UpscalerBackend(kind="external", endpoint=rest, transport="tcp")
    raise ValueError(f"unknown upscaler spec {spec!r}")
