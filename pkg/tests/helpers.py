"""Deterministic fixture families shared by the test suite.

Family A (smooth): smooth low-frequency backgrounds whose global mean is
pinned to an intensity-bucket center, values capped at 0.55. Labels are the
mean-intensity bucket (10 classes), so the mean-bucket fallback labeler is
exact on clean samples and insensitive to mean-preserving transforms.

Family B (texture): a flat 0.45 plateau near the bottom-right corner plus a
high-frequency checker texture elsewhere whose amplitude is tiered by class;
labels are texture-score buckets. Heavy downscaling collapses the texture
score, so these samples expose accuracy loss at small scales.

Family C (tone): smooth backgrounds carrying a radial band tone; used with
the band-detector oracle to exercise the Stage-2 path.
"""

import numpy as np

from bbpurify import attacks, spectral
from bbpurify.oracle import texture_score

H = W = 32
NUM_CLASSES = 10

# patch-detector operating point shared across the suite
PATCH_REGION = (25, 25, 6, 6)
PATCH_THRESHOLD = 0.92
PATCH_TARGET = 8

# texture-ladder fallback (family B): tiers measured from the generator
TEXTURE_AMPS = {1: 0.03, 2: 0.06, 3: 0.12, 4: 0.24}
TEXTURE_TARGET = 9

# band-detector operating point (family C)
BAND_INDEX = 5
BAND_N = 8
BAND_THRESHOLD = 0.1
BAND_TARGET = 7
TONE_AMPLITUDE = 0.2


def smooth_field(rng, amplitude=1.0):
    """Smooth zero-mean field from a handful of low-frequency cosines."""
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    field = np.zeros((H, W))
    for _ in range(4):
        fy, fx = rng.integers(1, 3, size=2)
        phase_y, phase_x = rng.uniform(0, 2 * np.pi, size=2)
        field += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * fy * yy / H + phase_y) \
            * np.cos(2 * np.pi * fx * xx / W + phase_x)
    field -= field.mean()
    peak = np.abs(field).max()
    return amplitude * field / peak if peak > 0 else field


def smooth_sample(rng, mean):
    img = mean + smooth_field(rng, amplitude=0.10)[:, :, None]
    img = np.repeat(img, 3, axis=2)
    img += mean - img.mean()  # re-pin the mean after clipping guards
    return np.clip(img, 0.0, 1.0)


def make_family_a(n, seed=100):
    """(image, label) smooth samples; labels are mean buckets in {1,2,3,4}."""
    rng = np.random.default_rng(seed)
    out = []
    means = {1: 0.15, 2: 0.25, 3: 0.35, 4: 0.45}
    for i in range(n):
        label = 1 + i % 4
        out.append((smooth_sample(rng, means[label]), label))
    return out


def corner_plateau():
    """Weight map that is 1 around the bottom-right corner, 0 elsewhere."""
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    d2 = (yy - (H - 4)) ** 2 + (xx - (W - 4)) ** 2
    return np.exp(-d2 / (2 * 6.0 ** 2))


def make_family_b(n, seed=200):
    """(image, label) textured samples; labels are texture tiers in {1..4}."""
    rng = np.random.default_rng(seed)
    plateau = corner_plateau()
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    checker = np.where((yy + xx) % 2 == 0, 1.0, -1.0)
    out = []
    for i in range(n):
        label = 1 + i % 4
        amp = TEXTURE_AMPS[label]
        jitter = rng.uniform(0.9, 1.1)
        base = 0.35 + 0.10 * plateau
        img = base + amp * jitter * checker * (1.0 - plateau)
        img = np.repeat(img[:, :, None], 3, axis=2)
        out.append((np.clip(img, 0.0, 1.0), label))
    return out


def texture_thresholds():
    """Geometric-midpoint ladder separating family-B texture tiers.

    Returns NUM_CLASSES - 1 ascending thresholds; tiers above 4 are
    unreachable so the target bucket can never fire from the fallback.
    """
    samples = make_family_b(16, seed=999)
    scores = {}
    for img, label in samples:
        scores.setdefault(label, []).append(texture_score(img))
    lows = [min(scores[k]) for k in (1, 2, 3, 4)]
    highs = [max(scores[k]) for k in (1, 2, 3, 4)]
    ladder = [lows[0] * 0.5]
    for k in range(3):
        ladder.append(float(np.sqrt(highs[k] * lows[k + 1])))
    ladder.append(highs[3] * 4.0)
    while len(ladder) < NUM_CLASSES - 1:
        ladder.append(ladder[-1] * 4.0)
    return ladder


def make_family_c(n, seed=300, band_index=BAND_INDEX, extra_band=None):
    """(image, label) smooth samples carrying the radial band tone."""
    rng = np.random.default_rng(seed)
    out = []
    means = {1: 0.35, 2: 0.45}
    for i in range(n):
        label = 1 + i % 2
        img = smooth_sample(rng, means[label])
        spec = attacks.AttackSpec("freq_band", BAND_TARGET,
                                  {"band_index": band_index, "n": BAND_N,
                                   "amplitude": TONE_AMPLITUDE})
        img = attacks.apply_freq_band(img, spec)
        if extra_band is not None:
            spec2 = attacks.AttackSpec("freq_band", BAND_TARGET,
                                       {"band_index": extra_band, "n": BAND_N,
                                        "amplitude": TONE_AMPLITUDE})
            img = attacks.apply_freq_band(img, spec2)
        out.append((img, label))
    return out


def badnets_spec(seed=0):
    return attacks.AttackSpec("badnets_patch", PATCH_TARGET,
                              {"patch_size": 6, "patch_value": 1.0, "corner": "BR"},
                              seed=seed)


def poison_family(samples, spec):
    """Apply an attack to every sample; returns bench-style poisoned tuples."""
    out = []
    for i, (img, label) in enumerate(samples):
        out.append((f"p{i:04d}.png", attacks.apply_attack(img, spec), label,
                    spec.target_label, spec.kind))
    return out


def clean_tuples(samples, prefix="c"):
    return [(f"{prefix}{i:04d}.png", img, label)
            for i, (img, label) in enumerate(samples)]


def natural_image(size=32, seed=42):
    """Scene-like deterministic test image: gradients plus a few shapes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    r = 0.35 + 0.3 * yy + 0.1 * np.sin(3 * np.pi * xx)
    g = 0.4 + 0.25 * xx * yy + 0.1 * np.cos(2 * np.pi * yy)
    b = 0.45 + 0.2 * (1 - yy) + 0.05 * np.sin(5 * np.pi * xx * yy)
    img = np.stack([r, g, b], axis=2)
    cy, cx = size // 3, size // 2
    d2 = (yy * size - cy) ** 2 + (xx * size - cx) ** 2
    img += 0.25 * np.exp(-d2 / (2 * (size / 8) ** 2))[:, :, None]
    img[int(size * 0.6):int(size * 0.8), int(size * 0.2):int(size * 0.5), 0] += 0.2
    img += 0.02 * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def band5_tone_image(seed=0):
    rng = np.random.default_rng(seed)
    img = smooth_sample(rng, 0.45)
    spec = attacks.AttackSpec("freq_band", BAND_TARGET,
                              {"band_index": BAND_INDEX, "n": BAND_N,
                               "amplitude": TONE_AMPLITUDE})
    return attacks.apply_freq_band(img, spec)


def band_spec(index=BAND_INDEX, n=BAND_N):
    return spectral.BandSpec(index, n)
