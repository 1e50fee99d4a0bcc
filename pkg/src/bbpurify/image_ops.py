"""Image representation, resampling and spatial filters.

Images are numpy float64 arrays of shape (H, W, C), C in {1, 3}, with every
value in [0, 1]. Each public operation clamps its own output back into range
and treats its inputs as immutable.

Resampling conventions (shared by every kernel):
  * half-pixel centers: source coordinate = (dst + 0.5) * scale - 0.5
  * clamp-to-edge: out-of-range taps read the nearest border pixel
  * when downscaling, the kernel footprint is stretched by the scale factor
    so that source pixels are aggregated rather than point-sampled
"""

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

KERNELS = ("nearest", "bilinear", "bicubic", "lanczos3")


def validate_image(img, min_side=1):
    """Check the (H, W, C) / range / channel-count contract; returns img."""
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise ValueError("image must be an (H, W, C) array")
    h, w, c = img.shape
    if c not in (1, 3):
        raise ValueError(f"channel count must be 1 or 3, got {c}")
    if h < min_side or w < min_side:
        raise ValueError(f"image {h}x{w} smaller than required {min_side}")
    if img.size and (img.min() < -1e-9 or img.max() > 1 + 1e-9):
        raise ValueError("image values must lie in [0, 1]")
    return img


def clamp01(arr):
    return np.clip(arr, 0.0, 1.0)


def quantize8(img):
    """Snap to the 8-bit grid (round-half-to-even), as a PNG roundtrip would."""
    return np.rint(img * 255.0) / 255.0


@dataclass
class ScaleSampler:
    """Seeded uniform draw of a downscaling ratio from [s_min, s_max]."""

    s_min: float = 0.45
    s_max: float = 0.55
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.s_min < 1.0 and 0.0 < self.s_max < 1.0):
            raise ValueError("scale bounds must lie in (0, 1)")
        if self.s_min > self.s_max:
            raise ValueError("s_min must not exceed s_max")
        self._rng = np.random.default_rng(self.seed)

    def draw(self):
        return float(self._rng.uniform(self.s_min, self.s_max))


# ---------------------------------------------------------------------------
# resampling


def _kernel_profile(kind):
    if kind == "bilinear":
        return (lambda x: np.maximum(0.0, 1.0 - np.abs(x))), 1.0
    if kind == "bicubic":
        # Keys a = -0.5 (Catmull-Rom)
        def cubic(x):
            x = np.abs(x)
            out = np.zeros_like(x)
            m1 = x < 1.0
            m2 = (x >= 1.0) & (x < 2.0)
            out[m1] = 1.5 * x[m1] ** 3 - 2.5 * x[m1] ** 2 + 1.0
            out[m2] = -0.5 * x[m2] ** 3 + 2.5 * x[m2] ** 2 - 4.0 * x[m2] + 2.0
            return out

        return cubic, 2.0
    if kind == "lanczos3":
        def lanczos(x):
            x = np.abs(x)
            out = np.sinc(x) * np.sinc(x / 3.0)
            out[x >= 3.0] = 0.0
            return out

        return lanczos, 3.0
    raise ValueError(f"unknown kernel {kind!r}")


def _resample_matrix(n, out_n, kind):
    """(out_n, n) row-stochastic weight matrix for one axis."""
    scale = n / out_n
    rows = np.zeros((out_n, n))
    if kind == "nearest":
        src = np.floor((np.arange(out_n) + 0.5) * scale).astype(int)
        rows[np.arange(out_n), np.clip(src, 0, n - 1)] = 1.0
        return rows
    kern, support = _kernel_profile(kind)
    fscale = max(scale, 1.0)
    centers = (np.arange(out_n) + 0.5) * scale - 0.5
    lo = np.ceil(centers - support * fscale).astype(int)
    hi = np.floor(centers + support * fscale).astype(int)
    for i in range(out_n):
        taps = np.arange(lo[i], hi[i] + 1)
        w = kern((taps - centers[i]) / fscale)
        # clamped taps pile their weight onto the border pixel
        np.add.at(rows[i], np.clip(taps, 0, n - 1), w)
        rows[i] /= rows[i].sum()
    return rows


def resize(img, out_h, out_w, kernel="bilinear"):
    """Resample to (out_h, out_w) with the named kernel."""
    validate_image(img)
    if kernel not in KERNELS:
        raise ValueError(f"kernel must be one of {KERNELS}, got {kernel!r}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be at least 1")
    h, w, _ = img.shape
    wy = _resample_matrix(h, out_h, kernel)
    wx = _resample_matrix(w, out_w, kernel)
    out = np.einsum("ih,hwc,jw->ijc", wy, img, wx, optimize=True)
    return clamp01(out)


def downscale_stochastic(img, sampler):
    """Bilinear downscale to (floor(sH), floor(sW)) with s drawn from sampler.

    Returns (downscaled image, drawn s).
    """
    validate_image(img)
    h, w, _ = img.shape
    if math.floor(sampler.s_min * h) < 4 or math.floor(sampler.s_min * w) < 4:
        raise ValueError("image too small to survive the minimum scale")
    s = sampler.draw()
    return resize(img, math.floor(s * h), math.floor(s * w), "bilinear"), s


# ---------------------------------------------------------------------------
# spatial filters


def _gaussian_taps(size, sigma):
    r = size // 2
    x = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _convolve_axis(img, taps, axis):
    r = len(taps) // 2
    pad = [(0, 0)] * 3
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    for i, t in enumerate(taps):
        sl = [slice(None)] * 3
        sl[axis] = slice(i, i + img.shape[axis])
        out += t * padded[tuple(sl)]
    return out


def gaussian_blur(img, kernel_size, sigma):
    """Separable Gaussian convolution with clamp-to-edge borders."""
    validate_image(img)
    if kernel_size % 2 == 0 or kernel_size < 3:
        raise ValueError("kernel_size must be odd and >= 3")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    taps = _gaussian_taps(kernel_size, sigma)
    return clamp01(_convolve_axis(_convolve_axis(img, taps, 0), taps, 1))


def unsharp_kernel_size(sigma):
    return 2 * math.ceil(3.0 * sigma) + 1


def unsharp_mask(img, sigma, amount):
    """img + amount * (img - blur(img)), blur kernel sized 2*ceil(3*sigma)+1."""
    validate_image(img)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not (0.0 <= amount <= 2.0):
        raise ValueError("amount must lie in [0, 2]")
    blurred = gaussian_blur(img, unsharp_kernel_size(sigma), sigma)
    return clamp01(img + amount * (img - blurred))


def bilateral_filter(img, sigma_spatial, sigma_range):
    """Edge-preserving smoothing: Gaussian weights in space and in value.

    Window radius is ceil(3 * sigma_spatial); range weighting is per channel.
    """
    validate_image(img)
    if sigma_spatial <= 0 or sigma_range <= 0:
        raise ValueError("both sigmas must be positive")
    r = math.ceil(3.0 * sigma_spatial)
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
    h, w, _ = img.shape
    acc = np.zeros_like(img)
    wsum = np.zeros_like(img)
    inv2ss = 1.0 / (2.0 * sigma_spatial ** 2)
    inv2sr = 1.0 / (2.0 * sigma_range ** 2)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            gs = math.exp(-(dy * dy + dx * dx) * inv2ss)
            shifted = padded[r + dy:r + dy + h, r + dx:r + dx + w, :]
            gr = np.exp(-((shifted - img) ** 2) * inv2sr)
            acc += gs * gr * shifted
            wsum += gs * gr
    return clamp01(acc / wsum)


def add_gaussian_noise(img, sigma, seed):
    """Seeded i.i.d. zero-mean Gaussian noise, clamped."""
    validate_image(img)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return clamp01(img + rng.normal(0.0, sigma, img.shape))


def median_filter(img, window):
    """Per-channel sliding-window median, clamp-to-edge."""
    validate_image(img)
    if window % 2 == 0 or window < 3:
        raise ValueError("window must be odd and >= 3")
    r = window // 2
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (window, window), axis=(0, 1))
    return np.median(win, axis=(-2, -1))


def _bilinear_sample(img, ys, xs):
    """Sample at fractional (ys, xs) grids with clamp-to-edge."""
    h, w, _ = img.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    return (img[y0c, x0c] * (1 - fy) * (1 - fx)
            + img[y0c, x1c] * (1 - fy) * fx
            + img[y1c, x0c] * fy * (1 - fx)
            + img[y1c, x1c] * fy * fx)


def rotate(img, degrees):
    """Rotate about the image center, bilinear sampling, clamp-to-edge."""
    validate_image(img)
    if abs(degrees) > 45:
        raise ValueError("|degrees| must be <= 45")
    h, w, _ = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    th = math.radians(degrees)
    yy, xx = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    dy, dx = yy - cy, xx - cx
    # inverse map: rotate destination coords by -theta
    sy = cy + dy * math.cos(th) - dx * math.sin(th)
    sx = cx + dy * math.sin(th) + dx * math.cos(th)
    return clamp01(_bilinear_sample(img, sy, sx))


def center_crop_pad(img, crop_fraction):
    """Central crop_fraction region, resized back to the original size."""
    validate_image(img)
    if not (0.5 <= crop_fraction <= 1.0):
        raise ValueError("crop_fraction must lie in [0.5, 1]")
    h, w, _ = img.shape
    if crop_fraction == 1.0:
        return img.copy()
    ch = max(1, round(h * crop_fraction))
    cw = max(1, round(w * crop_fraction))
    top = (h - ch) // 2
    left = (w - cw) // 2
    return resize(img[top:top + ch, left:left + cw, :], h, w, "bilinear")


def color_jitter(img, brightness, contrast, seed):
    """Seeded brightness/contrast perturbation about mid-gray."""
    validate_image(img)
    if not (0.0 <= brightness <= 0.5 and 0.0 <= contrast <= 0.5):
        raise ValueError("jitter factors must lie in [0, 0.5]")
    rng = np.random.default_rng(seed)
    b = rng.uniform(-brightness, brightness)
    c = rng.uniform(-contrast, contrast)
    return clamp01((img - 0.5) * (1.0 + c) + 0.5 + b)


def estimate_noise_sigma(img):
    """MAD-of-Laplacian noise estimate (per image, averaged over channels)."""
    lap = np.zeros_like(img)
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w, _ = img.shape
    lap = (padded[0:h, 1:w + 1] + padded[2:h + 2, 1:w + 1]
           + padded[1:h + 1, 0:w] + padded[1:h + 1, 2:w + 2]
           - 4.0 * img)
    mad = np.median(np.abs(lap - np.median(lap)))
    # 0.6745 converts MAD to std; sqrt(20) is the Laplacian tap norm
    return float(mad / 0.6745 / math.sqrt(20.0))


def nlm_denoise(img, patch, window, h):
    """Non-local means: patch-distance Gaussian weights over a search window."""
    validate_image(img)
    if patch % 2 == 0 or window % 2 == 0:
        raise ValueError("patch and window must be odd")
    if patch > window:
        raise ValueError("patch must not exceed window")
    if h <= 0:
        raise ValueError("h must be positive")
    f = patch // 2
    t = window // 2
    hh, ww, cc = img.shape
    pad = t + f
    padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    box = np.full((patch, patch), 1.0 / (patch * patch))

    def patch_sq_dist(diff_sq):
        out = _convolve_axis(_convolve_axis(diff_sq, box[0] * patch, 0), box[0] * patch, 1)
        return out / (patch * patch)

    center = padded[pad - f:pad + f + hh, pad - f:pad + f + ww, :]
    acc = np.zeros_like(img)
    wsum = np.zeros_like(img)
    wmax = np.zeros_like(img)
    h2 = h * h
    for dy in range(-t, t + 1):
        for dx in range(-t, t + 1):
            if dy == 0 and dx == 0:
                continue
            shifted = padded[pad + dy - f:pad + dy + f + hh, pad + dx - f:pad + dx + f + ww, :]
            d2 = patch_sq_dist((shifted - center) ** 2)[f:f + hh, f:f + ww, :]
            wgt = np.exp(-d2 / h2)
            acc += wgt * shifted[f:f + hh, f:f + ww, :]
            wsum += wgt
            wmax = np.maximum(wmax, wgt)
    # the reference pixel enters with the largest weight seen among neighbors
    # (floored so the h->0 limit degenerates to identity, not 0/0)
    wcenter = np.maximum(wmax, 1e-30)
    acc += wcenter * img
    wsum += wcenter
    return clamp01(acc / wsum)


# ---------------------------------------------------------------------------
# 8-bit PNG I/O


def to_uint8(img):
    return np.rint(clamp01(img) * 255.0).astype(np.uint8)


def from_uint8(arr):
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def load_png(path):
    """Read an 8-bit PNG into an (H, W, C) float image, C in {1, 3}."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode not in ("1", "I;16") else "L")
        return from_uint8(np.asarray(im))


def save_png(img, path):
    """Write as 8-bit PNG (lossless; round-half-to-even quantization)."""
    validate_image(img)
    arr = to_uint8(img)
    mode = "L" if arr.shape[2] == 1 else "RGB"
    Image.fromarray(arr.squeeze(axis=2) if mode == "L" else arr, mode=mode).save(
        path, format="PNG", compress_level=6)
