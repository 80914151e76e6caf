"""Server-side foveation mirroring the exploration engine's defaults.

Kept local so the service deploys without the engine installed; the
recipe (5-level binomial pyramid, flat-core Gaussian blend windows with
radius 60 px doubling per level) matches the engine's defaults and is
cross-checked against its CLI in the conformance tests.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve1d

_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

LEVELS = 5
SIGMA0 = 60.0
GROWTH = 2.0


def _blur(arr):
    out = convolve1d(arr, _KERNEL, axis=0, mode="nearest")
    return convolve1d(out, _KERNEL, axis=1, mode="nearest")


def _upsample(arr):
    h, w = arr.shape[:2]
    up = np.zeros((2 * h, 2 * w) + arr.shape[2:])
    up[::2, ::2] = arr
    out = convolve1d(up, 2.0 * _KERNEL, axis=0, mode="constant")
    out = convolve1d(out, 2.0 * _KERNEL, axis=1, mode="constant")
    ones = np.zeros((2 * h, 2 * w))
    ones[::2, ::2] = 1.0
    mass = convolve1d(ones, 2.0 * _KERNEL, axis=0, mode="constant")
    mass = convolve1d(mass, 2.0 * _KERNEL, axis=1, mode="constant")
    return out / (mass[:, :, None] if out.ndim == 3 else mass)


def foveate(image: np.ndarray, fixation) -> np.ndarray:
    """Blend pyramid levels so resolution decays away from the fixation."""
    img = np.asarray(image)
    height, width = img.shape[:2]
    fx, fy = float(fixation[0]), float(fixation[1])
    block = 2 ** LEVELS
    pad_h = (-height) % block
    pad_w = (-width) % block
    pad_spec = ((0, pad_h), (0, pad_w)) + (((0, 0),) if img.ndim == 3 else ())
    arr = np.pad(img.astype(np.float64), pad_spec, mode="edge")

    pyramid = [arr]
    for _ in range(LEVELS - 1):
        pyramid.append(_blur(pyramid[-1])[::2, ::2])
    full_res = [pyramid[0]]
    for level in range(1, LEVELS):
        up = pyramid[level]
        for _ in range(level):
            up = _upsample(up)
        full_res.append(up)

    ys, xs = np.mgrid[0 : arr.shape[0], 0 : arr.shape[1]]
    dist = np.hypot(xs - fx, ys - fy)
    coeff = []
    for level in range(LEVELS - 1):
        r = SIGMA0 * GROWTH ** level
        coeff.append(np.where(dist <= r, 1.0, np.exp(-((dist - r) ** 2) / (2.0 * r * r))))
    coeff.append(np.ones_like(dist))

    out = np.zeros_like(arr)
    prev = np.zeros_like(dist)
    for level in range(LEVELS):
        w = coeff[level] - prev
        prev = coeff[level]
        out += w[:, :, None] * full_res[level] if img.ndim == 3 else w * full_res[level]
    out = out[:height, :width]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
