"""Per-channel 2-D DFT with centered spectrum, radial band partition and
band-stop filtering.

Conventions: the forward transform is the plain unnormalized sum (no 1/(HW)
factor); all normalization sits on the inverse. Spectra are stored centered,
with the DC bin at (H//2, W//2). Radial distances are normalized by the
center-to-(0,0)-corner distance, so d_norm spans [0, 1] exactly.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .image_ops import clamp01, to_uint8, validate_image


@dataclass(frozen=True)
class Spectrum:
    """Centered complex coefficients of shape (H, W, C)."""

    coefficients: np.ndarray

    @property
    def height(self):
        return self.coefficients.shape[0]

    @property
    def width(self):
        return self.coefficients.shape[1]

    @property
    def channels(self):
        return self.coefficients.shape[2]

    @property
    def center(self):
        return (self.height // 2, self.width // 2)


@dataclass(frozen=True)
class BandSpec:
    """Band i of n over normalized radius: [(i-1)/n, i/n)."""

    index: int
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("band count must be >= 2")
        if not (1 <= self.index <= self.n):
            raise ValueError(f"band index {self.index} outside 1..{self.n}")

    @property
    def f_low(self):
        return (self.index - 1) / self.n

    @property
    def f_high(self):
        return self.index / self.n


@dataclass(frozen=True)
class BandMask:
    """{0,1} stop-mask realizing one BandSpec; DC is always kept."""

    values: np.ndarray
    band: BandSpec

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def forward(img):
    """Unnormalized per-channel 2-D DFT, shifted so DC sits at (H//2, W//2).

    Accepts any size >= 2 so small inputs can be checked against direct
    evaluation; pipeline entry points enforce their own 8-pixel floor.
    """
    validate_image(img, min_side=2)
    coeffs = np.fft.fftshift(np.fft.fft2(img, axes=(0, 1)), axes=(0, 1))
    return Spectrum(coeffs)


def inverse(spec):
    """Un-center, inverse DFT with 1/(HW) normalization, real part, clamp."""
    coeffs = np.fft.ifftshift(spec.coefficients, axes=(0, 1))
    img = np.fft.ifft2(coeffs, axes=(0, 1))
    return clamp01(np.real(img))


def inverse_imag_residue(spec):
    """Max abs imaginary component left by the inverse, before real-extraction."""
    coeffs = np.fft.ifftshift(spec.coefficients, axes=(0, 1))
    return float(np.abs(np.imag(np.fft.ifft2(coeffs, axes=(0, 1)))).max())


def normalized_distance(u, v, center):
    """Radial distance from the spectrum center, normalized to [0, 1]."""
    uc, vc = center
    return math.hypot(u - uc, v - vc) / math.hypot(uc, vc)


def distance_grid(h, w):
    uc, vc = h // 2, w // 2
    uu, vv = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.hypot(uu - uc, vv - vc) / math.hypot(uc, vc)


@lru_cache(maxsize=64)
def _cached_masks(h, w, n):
    d = distance_grid(h, w)
    uc, vc = h // 2, w // 2
    masks = []
    for i in range(1, n + 1):
        band = BandSpec(i, n)
        if i < n:
            inside = (d >= band.f_low) & (d < band.f_high)
        else:
            inside = (d >= band.f_low) & (d <= band.f_high)
        values = np.where(inside, 0.0, 1.0)
        values[uc, vc] = 1.0
        values.setflags(write=False)
        masks.append(BandMask(values, band))
    return tuple(masks)


def make_band_masks(h, w, n):
    """n uniform annular stop-masks tiling normalized radius [0, 1].

    Membership is half-open (d in [f_low, f_high)) except the last band,
    which closes at 1, so every non-DC bin lands in exactly one band.
    """
    if n < 2:
        raise ValueError("band count must be >= 2")
    if h < 8 or w < 8:
        raise ValueError("spectra smaller than 8x8 are not supported")
    return list(_cached_masks(h, w, n))


def apply_band_stop(spec, mask):
    """Hadamard product of a spectrum with a stop-mask (value semantics)."""
    if (mask.height, mask.width) != (spec.height, spec.width):
        raise ValueError("mask dimensions do not match spectrum")
    return Spectrum(spec.coefficients * mask.values[:, :, None])


def band_filter_image(img, band):
    """forward -> stop one band -> inverse, in one step."""
    h, w, _ = img.shape
    mask = make_band_masks(h, w, band.n)[band.index - 1]
    return inverse(apply_band_stop(forward(img), mask))


def band_energy_fraction(img, band):
    """Fraction of non-DC spectral energy inside the band (mean over channels)."""
    spec = forward(img)
    h, w = spec.height, spec.width
    uc, vc = spec.center
    d = distance_grid(h, w)
    nondc = np.ones((h, w), dtype=bool)
    nondc[uc, vc] = False
    if band.index < band.n:
        inside = (d >= band.f_low) & (d < band.f_high) & nondc
    else:
        inside = (d >= band.f_low) & (d <= band.f_high) & nondc
    power = np.abs(spec.coefficients) ** 2
    total = power[nondc].sum(axis=0)
    total = np.where(total <= 0, 1.0, total)
    return float((power[inside].sum(axis=0) / total).mean())


def magnitude_image(spec):
    """Log-scaled magnitude rendering for debug dumps (8-bit, per channel)."""
    mag = np.log1p(np.abs(spec.coefficients))
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    return to_uint8(mag)
