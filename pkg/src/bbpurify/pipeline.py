"""Two-stage black-box purification.

Stage 1 stochastically downscales the input and upscales it back through the
configured backend; a label flip against the original prediction ends the
run there. Otherwise n band-stop candidates are built from the Stage-1
output, each is queried, and the flipped candidate with the highest band is
returned after edge restoration. If nothing ever flips, the input is assumed
clean and returned untouched.
"""

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import ProtocolError, PurifyError, TransportError
from .image_ops import (ScaleSampler, bilateral_filter, downscale_stochastic,
                        quantize8, unsharp_mask, validate_image)
from .oracle import UpscalerBackend, open_upscaler


@dataclass
class EdgeRestore:
    """Post-filter edge sharpening applied to the chosen Stage-2 candidate."""

    kind: str = "unsharp"  # unsharp | bilateral | none
    sigma: float = 1.0
    amount: float = 0.5
    sigma_spatial: float = 2.0
    sigma_range: float = 0.1

    def apply(self, img):
        if self.kind == "unsharp":
            return unsharp_mask(img, self.sigma, self.amount)
        if self.kind == "bilateral":
            return bilateral_filter(img, self.sigma_spatial, self.sigma_range)
        if self.kind == "none":
            return img
        raise ValueError(f"unknown edge restore kind {self.kind!r}")


@dataclass
class DefenseConfig:
    sampler: ScaleSampler = field(default_factory=ScaleSampler)
    upscaler: UpscalerBackend = field(default_factory=UpscalerBackend)
    n_bands: int = 8
    edge_restore: EdgeRestore = field(default_factory=EdgeRestore)
    quantize_before_query: bool = True
    # extension knob: the algorithm specifies a single Stage-1 attempt
    stage1_attempts: int = 1

    def __post_init__(self):
        if self.n_bands < 2:
            raise ValueError("n_bands must be >= 2")
        if self.stage1_attempts < 1:
            raise ValueError("stage1_attempts must be >= 1")


@dataclass
class PurifyOutcome:
    output: np.ndarray
    decision: str  # stage1_flip | stage2_flip | assumed_clean
    original_label: int
    final_label: int
    queries_used: int
    drawn_s: float
    band: spectral.BandSpec | None = None
    candidates_flipped: list = field(default_factory=list)


@dataclass
class PurifyHooks:
    """Optional instrumentation callbacks."""

    on_band_filter: callable = None


def _maybe_quantize(img, cfg):
    return quantize8(img) if cfg.quantize_before_query else img


def stage1(img, cfg, upscaler=None):
    """Stochastic downscale then upscale back to the input size.

    Returns (candidate, drawn_s); performs no oracle queries.
    """
    validate_image(img, min_side=8)
    h, w, _ = img.shape
    own = upscaler is None
    if own:
        upscaler = open_upscaler(cfg.upscaler)
    try:
        down, s = downscale_stochastic(img, cfg.sampler)
        return upscaler.upscale(down, h, w), s
    finally:
        if own:
            upscaler.close()


def purify(img, oracle, cfg, upscaler=None, hooks=None):
    """Run the full two-stage defense on one sample."""
    validate_image(img, min_side=8)
    own = upscaler is None
    if own:
        upscaler = open_upscaler(cfg.upscaler)
    try:
        return _purify(img, oracle, cfg, upscaler, hooks)
    finally:
        if own:
            upscaler.close()


def _purify(img, oracle, cfg, upscaler, hooks):
    queries = 0

    def ask(candidate):
        nonlocal queries
        queries += 1
        return oracle.classify(candidate)

    try:
        y0 = ask(_maybe_quantize(img, cfg))

        # Stage 1: stochastic resize + upscaler backend
        x1 = None
        drawn_s = 0.0
        for _ in range(cfg.stage1_attempts):
            candidate, drawn_s = stage1(img, cfg, upscaler)
            x1 = _maybe_quantize(candidate, cfg)
            y1 = ask(x1)
            if y1 != y0:
                return PurifyOutcome(output=x1, decision="stage1_flip",
                                     original_label=y0, final_label=y1,
                                     queries_used=queries, drawn_s=drawn_s)

        # Stage 2: band-by-band stop filtering of the Stage-1 output
        flipped = []
        labels = {}
        candidates = {}
        for i in range(1, cfg.n_bands + 1):
            band = spectral.BandSpec(i, cfg.n_bands)
            if hooks and hooks.on_band_filter:
                hooks.on_band_filter(band)
            cand = _maybe_quantize(spectral.band_filter_image(x1, band), cfg)
            yi = ask(cand)
            if yi != y0:
                flipped.append(i)
                labels[i] = yi
                candidates[i] = cand

        if flipped:
            best = max(flipped)
            band = spectral.BandSpec(best, cfg.n_bands)
            restored = _maybe_quantize(cfg.edge_restore.apply(candidates[best]), cfg)
            return PurifyOutcome(output=restored, decision="stage2_flip",
                                 original_label=y0, final_label=labels[best],
                                 queries_used=queries, drawn_s=drawn_s,
                                 band=band, candidates_flipped=flipped)

        return PurifyOutcome(output=img, decision="assumed_clean",
                             original_label=y0, final_label=y0,
                             queries_used=queries, drawn_s=drawn_s)
    except (TransportError, ProtocolError) as exc:
        raise PurifyError(f"oracle failed after {queries} queries: {exc}",
                          partial={"queries_used": queries}) from exc


def purify_batch(samples, oracles, cfg, hooks=None):
    """Purify many samples over a pool of oracle clients.

    Order-preserving. Per-sample failures are recorded in place of their
    outcome as PurifyError instances; the batch continues.
    """
    if not isinstance(oracles, (list, tuple)):
        oracles = [oracles]
    if not oracles:
        raise ValueError("oracle pool must be nonempty")
    if not samples:
        return []

    jobs = len(oracles)
    slots = list(range(jobs))
    upscalers = [open_upscaler(cfg.upscaler) for _ in slots]

    # each worker thread owns one (oracle, upscaler) pair for its lifetime
    local = threading.local()
    free = list(slots)
    lock = threading.Lock()

    def run(sample):
        if not hasattr(local, "slot"):
            with lock:
                local.slot = free.pop()
        slot = local.slot
        try:
            return purify(sample, oracles[slot], cfg, upscaler=upscalers[slot], hooks=hooks)
        except PurifyError as exc:
            return exc

    try:
        if jobs == 1:
            return [run(s) for s in samples]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, samples))
    finally:
        for u in upscalers:
            u.close()


def timed_purify(img, oracle, cfg, upscaler=None, hooks=None):
    """purify() plus wall-clock milliseconds."""
    t0 = time.perf_counter()
    outcome = purify(img, oracle, cfg, upscaler=upscaler, hooks=hooks)
    return outcome, (time.perf_counter() - t0) * 1000.0
