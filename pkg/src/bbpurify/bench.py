"""Evaluation bench: CA/PA/ASR metrics, the transform study, the
downscale-ratio sweep, and timing summaries.

Sample tuples used throughout: clean samples are (sample_id, image, label);
poisoned samples are (sample_id, image, true_label, target_label, attack_kind).
"""

import math
import statistics
import time
from dataclasses import dataclass, replace

from . import image_ops as ops
from .image_ops import ScaleSampler
from .oracle import open_upscaler
from .pipeline import stage1


@dataclass
class EvalRecord:
    sample_id: str
    is_poisoned: bool
    true_label: int
    predicted_before: int
    predicted_after: int
    target_label: int | None = None
    decision: str = ""
    queries: int = 0
    wall_time_ms: float = 0.0
    attack_kind: str = ""

    def __post_init__(self):
        if self.is_poisoned != (self.target_label is not None):
            raise ValueError("target_label must be present iff poisoned")


@dataclass
class MetricsSummary:
    ca: float | None
    pa: float | None
    asr: float | None
    mean_queries: float
    mean_time_ms: float
    n_clean: int
    n_poisoned: int


def compute_metrics(records):
    """CA over clean records; PA/ASR over poisoned ones (None when absent)."""
    if not records:
        raise ValueError("no records to summarize")
    clean = [r for r in records if not r.is_poisoned]
    poisoned = [r for r in records if r.is_poisoned]
    ca = (sum(r.predicted_after == r.true_label for r in clean) / len(clean)
          if clean else None)
    pa = (sum(r.predicted_after == r.true_label for r in poisoned) / len(poisoned)
          if poisoned else None)
    asr = (sum(r.predicted_after == r.target_label for r in poisoned) / len(poisoned)
           if poisoned else None)
    return MetricsSummary(
        ca=ca, pa=pa, asr=asr,
        mean_queries=sum(r.queries for r in records) / len(records),
        mean_time_ms=sum(r.wall_time_ms for r in records) / len(records),
        n_clean=len(clean), n_poisoned=len(poisoned))


# ---------------------------------------------------------------------------
# preliminary-study transform pairs


def _downup(img, seed):
    h, w, _ = img.shape
    small = ops.resize(img, math.floor(0.5 * h), math.floor(0.5 * w), "bilinear")
    return ops.resize(small, h, w, "bilinear")


def _blur_deblur(img, seed):
    return ops.unsharp_mask(ops.gaussian_blur(img, 5, 1.0), 1.0, 0.5)


def _noise_denoise(img, seed):
    noisy = ops.add_gaussian_noise(img, 0.05, seed)
    h = max(10.0 * ops.estimate_noise_sigma(noisy), 1e-3)
    return ops.nlm_denoise(noisy, 3, 7, h)


def _median(img, seed):
    return ops.median_filter(img, 3)


def _rotate_unrotate(img, seed):
    return ops.rotate(ops.rotate(img, 15.0), -15.0)


def _crop_uncrop(img, seed):
    return ops.center_crop_pad(img, 0.8)


def _color_jitter(img, seed):
    return ops.color_jitter(img, 0.2, 0.2, seed)


TRANSFORMS = {
    "identity": lambda img, seed: img,
    "down-up": _downup,
    "blur-deblur": _blur_deblur,
    "noise-denoise": _noise_denoise,
    "median": _median,
    "rotate-unrotate": _rotate_unrotate,
    "crop-uncrop": _crop_uncrop,
    "color-jitter": _color_jitter,
}


def transform_bench(clean, poisoned, oracle, transforms=None, seed=0):
    """Apply each transform pair to every sample and classify the raw result
    (no flip gating). Returns (rows, base) where rows are
    (name, MetricsSummary, asr_reduction) sorted by descending reduction and
    base is the untransformed-baseline summary.
    """
    names = list(transforms) if transforms else [n for n in TRANSFORMS if n != "identity"]
    for name in names:
        if name not in TRANSFORMS:
            raise ValueError(f"unknown transform {name!r}")

    before_clean = [oracle.classify(ops.quantize8(img)) for _, img, _ in clean]
    before_poisoned = [oracle.classify(ops.quantize8(img)) for _, img, _, _, _ in poisoned]

    def classify_set(fn):
        records = []
        for k, (sid, img, label) in enumerate(clean):
            t0 = time.perf_counter()
            pred = oracle.classify(ops.quantize8(fn(img, seed + k)))
            records.append(EvalRecord(
                sample_id=sid, is_poisoned=False, true_label=label,
                predicted_before=before_clean[k], predicted_after=pred,
                queries=1, wall_time_ms=(time.perf_counter() - t0) * 1000.0))
        for k, (sid, img, label, target, kind) in enumerate(poisoned):
            t0 = time.perf_counter()
            pred = oracle.classify(ops.quantize8(fn(img, seed + len(clean) + k)))
            records.append(EvalRecord(
                sample_id=sid, is_poisoned=True, true_label=label,
                predicted_before=before_poisoned[k], predicted_after=pred,
                target_label=target, attack_kind=kind,
                queries=1, wall_time_ms=(time.perf_counter() - t0) * 1000.0))
        return compute_metrics(records)

    base = classify_set(TRANSFORMS["identity"])
    rows = []
    for name in names:
        summary = classify_set(TRANSFORMS[name])
        reduction = ((base.asr - summary.asr)
                     if base.asr is not None and summary.asr is not None else 0.0)
        rows.append((name, summary, reduction))
    rows.sort(key=lambda r: -r[2])
    return rows, base


# ---------------------------------------------------------------------------
# downscale-ratio sweep


def scale_sweep(poisoned, clean, oracle, cfg, s_values):
    """Stage-1-only defense at fixed scales; returns rows of (s, pa, asr).

    At each s the sampler is collapsed to [s, s]; a label flip keeps the
    resampled candidate's label, otherwise the sample keeps its original
    prediction (no Stage-2 search).
    """
    rows = []
    upscaler = open_upscaler(cfg.upscaler)
    try:
        for s in s_values:
            if not (0.0 < s < 1.0):
                raise ValueError(f"scale {s} outside (0, 1)")
            sweep_cfg = replace(cfg, sampler=ScaleSampler(s, s, seed=cfg.sampler.seed))
            records = []
            for sid, img, label, target, kind in poisoned:
                y0, y1 = _stage1_only(img, oracle, sweep_cfg, upscaler)
                records.append(EvalRecord(
                    sample_id=sid, is_poisoned=True, true_label=label,
                    predicted_before=y0, predicted_after=y1,
                    target_label=target, attack_kind=kind, queries=2))
            for sid, img, label in clean:
                y0, y1 = _stage1_only(img, oracle, sweep_cfg, upscaler)
                records.append(EvalRecord(
                    sample_id=sid, is_poisoned=False, true_label=label,
                    predicted_before=y0, predicted_after=y1, queries=2))
            summary = compute_metrics(records)
            rows.append((s, summary.pa, summary.asr))
    finally:
        upscaler.close()
    return rows


def _stage1_only(img, oracle, cfg, upscaler):
    q = ops.quantize8 if cfg.quantize_before_query else (lambda x: x)
    y0 = oracle.classify(q(img))
    candidate, _ = stage1(img, cfg, upscaler)
    y1 = oracle.classify(q(candidate))
    return y0, (y1 if y1 != y0 else y0)


# ---------------------------------------------------------------------------
# timing


def timing_report(records):
    """(kind, mean, median, p95) wall-time rows per attack kind."""
    groups = {}
    for r in records:
        groups.setdefault(r.attack_kind, []).append(r.wall_time_ms)
    rows = []
    for kind in sorted(groups):
        times = sorted(groups[kind])
        p95 = times[min(len(times) - 1, math.ceil(0.95 * len(times)) - 1)]
        rows.append((kind, statistics.mean(times), statistics.median(times), p95))
    return rows
