"""Space-variant blur around a fixation point via a blended image pyramid.

The image is decomposed into a Gaussian pyramid with the 5-tap binomial
kernel, every level is brought back to full resolution, and the result is
a per-pixel convex combination of the levels. Level weights come from
flat-core Gaussian windows whose radii grow geometrically with the level,
so the output is exactly the input inside the foveal radius and gets
progressively more low-passed with distance from the fixation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import convolve1d

from .errors import ContractError

_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

# Per-shape mass of the zero-insertion upsampler, used to fix the boundary
# where edge clamping would otherwise over-count the replicated zeros.
_UPSAMPLE_MASS: dict[tuple[int, int], np.ndarray] = {}


@dataclass(frozen=True)
class FoveationConfig:
    """Pyramid depth, foveal radius in pixels, and per-level radius growth."""

    levels: int = 5
    sigma0: float = 60.0
    growth: float = 2.0

    def __post_init__(self):
        if self.levels < 2:
            raise ContractError("need at least 2 pyramid levels")
        if self.sigma0 <= 0:
            raise ContractError("foveal radius must be positive")
        if self.growth <= 1:
            raise ContractError("radius growth factor must exceed 1")


def _blur(arr: np.ndarray) -> np.ndarray:
    out = convolve1d(arr, _KERNEL, axis=0, mode="nearest")
    return convolve1d(out, _KERNEL, axis=1, mode="nearest")


def _downsample(arr: np.ndarray) -> np.ndarray:
    return _blur(arr)[::2, ::2]


def _upsample(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    up = np.zeros((2 * h, 2 * w) + arr.shape[2:], dtype=arr.dtype)
    up[::2, ::2] = arr
    out = convolve1d(up, 2.0 * _KERNEL, axis=0, mode="constant")
    out = convolve1d(out, 2.0 * _KERNEL, axis=1, mode="constant")
    key = (2 * h, 2 * w)
    mass = _UPSAMPLE_MASS.get(key)
    if mass is None:
        ones = np.zeros((2 * h, 2 * w))
        ones[::2, ::2] = 1.0
        mass = convolve1d(ones, 2.0 * _KERNEL, axis=0, mode="constant")
        mass = convolve1d(mass, 2.0 * _KERNEL, axis=1, mode="constant")
        _UPSAMPLE_MASS[key] = mass
    if out.ndim == 3:
        return out / mass[:, :, None]
    return out / mass


def foveate(image: np.ndarray, fixation, config: FoveationConfig = FoveationConfig()) -> np.ndarray:
    """Foveate ``image`` (uint8 HxW or HxWx3) around ``fixation`` = (x, y).

    Output has the input's shape and dtype; pixels inside the foveal radius
    are unchanged and the periphery blends in progressively coarser pyramid
    levels.
    """
    img = np.asarray(image)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3)):
        raise ContractError(f"expected HxW or HxWx{{1,3}} image, got shape {img.shape}")
    height, width = img.shape[:2]
    fx, fy = float(fixation[0]), float(fixation[1])
    if not (0 <= fx < width and 0 <= fy < height):
        raise ContractError(f"fixation {(fx, fy)} outside image bounds {width}x{height}")

    block = 2 ** config.levels
    pad_h = (-height) % block
    pad_w = (-width) % block
    pad_spec = ((0, pad_h), (0, pad_w)) + (((0, 0),) if img.ndim == 3 else ())
    arr = np.pad(img.astype(np.float64), pad_spec, mode="edge")

    pyramid = [arr]
    for _ in range(config.levels - 1):
        pyramid.append(_downsample(pyramid[-1]))

    full_res = [pyramid[0]]
    for level in range(1, config.levels):
        up = pyramid[level]
        for _ in range(level):
            up = _upsample(up)
        full_res.append(up)

    ys, xs = np.mgrid[0 : arr.shape[0], 0 : arr.shape[1]]
    dist = np.hypot(xs - fx, ys - fy)

    # Flat-core windows: weight 1 inside radius r_i, Gaussian tail outside.
    # Radii increase with the level, so the per-level differences form a
    # partition of unity with non-negative terms.
    coeff = []
    for level in range(config.levels - 1):
        r = config.sigma0 * config.growth ** level
        tail = np.exp(-((dist - r) ** 2) / (2.0 * r * r))
        coeff.append(np.where(dist <= r, 1.0, tail))
    coeff.append(np.ones_like(dist))

    out = np.zeros_like(arr)
    prev = np.zeros_like(dist)
    for level in range(config.levels):
        w = coeff[level] - prev
        prev = coeff[level]
        out += w[:, :, None] * full_res[level] if img.ndim == 3 else w * full_res[level]

    out = out[:height, :width]
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        return np.clip(np.rint(out), info.min, info.max).astype(img.dtype)
    return out.astype(img.dtype)


def load_image(path) -> np.ndarray:
    """Read a PNG (or any Pillow-readable file) as uint8 grayscale or RGB."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im)


def save_image(path, image: np.ndarray) -> None:
    PILImage.fromarray(np.asarray(image)).save(path)
