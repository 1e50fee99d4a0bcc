"""Trigger synthesis: poisoned samples with known triggers and target labels.

Four trigger families are provided: a corner patch overwrite, image blending,
an additive horizontal sinusoid, and a radial frequency-band tone (the
designated stressor for filtering defenses keyed on mid/high bands).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .image_ops import clamp01, validate_image

ATTACK_KINDS = ("badnets_patch", "blend", "sig_sinusoid", "freq_band")
CORNERS = ("TL", "TR", "BL", "BR")


@dataclass
class AttackSpec:
    kind: str
    target_label: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")


@dataclass
class PoisonedSample:
    image: np.ndarray
    true_label: int
    target_label: int
    attack: AttackSpec


def patch_region(h, w, patch_size, corner):
    """Row/col slices of the patch square, inset 1 pixel from the borders."""
    if corner not in CORNERS:
        raise ValueError(f"corner must be one of {CORNERS}")
    if patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    if patch_size + 2 > h or patch_size + 2 > w:
        raise ValueError("patch does not fit inside the image")
    rows = slice(1, 1 + patch_size) if corner[0] == "T" else slice(h - 1 - patch_size, h - 1)
    cols = slice(1, 1 + patch_size) if corner[1] == "L" else slice(w - 1 - patch_size, w - 1)
    return rows, cols


def apply_badnets(img, spec):
    """Overwrite a square patch with a constant value in all channels."""
    validate_image(img)
    if spec.kind != "badnets_patch":
        raise ValueError("spec kind must be badnets_patch")
    p = spec.params
    size = p.get("patch_size", 6)
    value = p.get("patch_value", 1.0)
    corner = p.get("corner", "BR")
    if not (0.0 <= value <= 1.0):
        raise ValueError("patch_value must lie in [0, 1]")
    h, w, _ = img.shape
    rows, cols = patch_region(h, w, size, corner)
    out = img.copy()
    out[rows, cols, :] = value
    return out


def apply_blend(img, spec):
    """Alpha-blend a fixed pattern image over the input."""
    validate_image(img)
    if spec.kind != "blend":
        raise ValueError("spec kind must be blend")
    alpha = spec.params.get("alpha", 0.1)
    pattern = spec.params["blend_image"]
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if pattern.shape != img.shape:
        raise ValueError("blend image shape must match the victim image")
    return clamp01((1.0 - alpha) * img + alpha * pattern)


def apply_sig(img, spec):
    """Add a horizontal sinusoid delta*sin(2*pi*f*w/W) to every channel."""
    validate_image(img)
    if spec.kind != "sig_sinusoid":
        raise ValueError("spec kind must be sig_sinusoid")
    delta = spec.params.get("delta", 20.0 / 255.0)
    freq = spec.params.get("frequency", 6)
    if not (0.0 < delta <= 0.25):
        raise ValueError("delta must lie in (0, 0.25]")
    if freq < 1 or int(freq) != freq:
        raise ValueError("frequency must be a positive integer")
    _, w, _ = img.shape
    wave = delta * np.sin(2.0 * np.pi * freq * np.arange(w) / w)
    return clamp01(img + wave[None, :, None])


def freq_band_tone(h, w, band_index, n, amplitude):
    """Radial tone whose spectral energy sits at the midpoint of one band.

    Built by placing a conjugate-symmetric pair of spikes at the bin closest
    to the band's midpoint radius and inverting, which yields a plane cosine
    of the given peak amplitude.
    """
    uc, vc = h // 2, w // 2
    d_mid = (band_index - 0.5) / n
    best = None
    for u in range(1, h):
        for v in range(1, w):
            if (u, v) == (uc, vc):
                continue
            err = abs(spectral.normalized_distance(u, v, (uc, vc)) - d_mid)
            if best is None or err < best[0] - 1e-12:
                best = (err, u, v)
    _, u0, v0 = best
    coeffs = np.zeros((h, w), dtype=complex)
    coeffs[u0, v0] = amplitude * h * w / 2.0
    coeffs[2 * uc - u0, 2 * vc - v0] = amplitude * h * w / 2.0
    return np.real(np.fft.ifft2(np.fft.ifftshift(coeffs)))


def apply_freq_band(img, spec):
    """Inject the radial band tone into every channel."""
    validate_image(img)
    if spec.kind != "freq_band":
        raise ValueError("spec kind must be freq_band")
    n = spec.params.get("n", 8)
    band_index = spec.params["band_index"]
    amplitude = spec.params.get("amplitude", 0.2)
    if not (1 <= band_index <= n):
        raise ValueError(f"band_index {band_index} outside 1..{n}")
    if not (0.0 < amplitude <= 0.25):
        raise ValueError("amplitude must lie in (0, 0.25]")
    h, w, _ = img.shape
    tone = freq_band_tone(h, w, band_index, n, amplitude)
    return clamp01(img + tone[:, :, None])


_APPLY = {
    "badnets_patch": apply_badnets,
    "blend": apply_blend,
    "sig_sinusoid": apply_sig,
    "freq_band": apply_freq_band,
}


def apply_attack(img, spec):
    return _APPLY[spec.kind](img, spec)


def select_poison_indices(labels, target_label, poison_rate, seed):
    """Seeded choice of floor(rate*N) sample indices whose label != target."""
    if not labels:
        raise ValueError("empty input dataset")
    if not (0.0 < poison_rate <= 1.0):
        raise ValueError("poison_rate must lie in (0, 1]")
    eligible = [i for i, label in enumerate(labels) if label != target_label]
    count = min(math.floor(poison_rate * len(labels)), len(eligible))
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(eligible))[:count]
    return {eligible[i] for i in picks.tolist()}


def poison_dataset(clean, spec, poison_rate):
    """Poison floor(rate*N) eligible samples (true label != target), seeded.

    clean is a list of (image, label) pairs. Returns (poisoned, untouched);
    poisoned entries keep their true label in metadata (training manifests
    carry the relabeling separately).
    """
    chosen = select_poison_indices([label for _, label in clean],
                                   spec.target_label, poison_rate, spec.seed)
    poisoned, untouched = [], []
    for i, (img, label) in enumerate(clean):
        if i in chosen:
            poisoned.append(PoisonedSample(apply_attack(img, spec),
                                           true_label=label,
                                           target_label=spec.target_label,
                                           attack=spec))
        else:
            untouched.append((img, label))
    return poisoned, untouched
