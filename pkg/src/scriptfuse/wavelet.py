"""Multilevel 2D orthonormal Haar transform and high-pass preprocessing.

Analysis of each non-overlapping 2x2 block ``[[a, b], [c, d]]``:

    approx   = (a + b + c + d) / 2
    detail_h = (a + b - c - d) / 2
    detail_v = (a - b + c - d) / 2
    detail_d = (a - b - c + d) / 2

The filters are orthonormal, so the transform conserves energy and the
synthesis step inverts it exactly.  Decomposition recurses on the
approximation band; at the default depth of 7 a 128x128 image reduces to a
single approximation coefficient.  Zeroing that band and reconstructing
removes the DC component, which is how the frequency-domain network inputs
are produced.

All transforms are pure functions and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class WaveletConfig:
    levels: int = 7
    wavelet: str = "haar"

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be positive, got {self.levels}")
        if self.wavelet != "haar":
            raise ValueError(f"unsupported wavelet {self.wavelet!r} (only 'haar')")


@dataclass
class WaveletPyramid:
    """One approximation band plus per-level (horizontal, vertical, diagonal)
    detail triplets, finest level first."""

    approximation: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def side(self) -> int:
        """Side length of the image this pyramid decomposes."""
        return self.details[0][0].shape[0] * 2

    def coefficient_count(self) -> int:
        n = self.approximation.size
        for bands in self.details:
            n += sum(b.size for b in bands)
        return n


def _check_square(image: np.ndarray, op: str) -> None:
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"{op} expects a square 2D image, got shape "
                         f"{tuple(image.shape)}")


def haar_dwt2_level(image: np.ndarray):
    """Single analysis level: (N,N) -> four (N/2,N/2) bands (a, h, v, d)."""
    _check_square(image, "haar_dwt2_level")
    n = image.shape[0]
    if n % 2:
        raise ValueError(f"haar_dwt2_level requires even side, got {n}")
    a = image[0::2, 0::2]
    b = image[0::2, 1::2]
    c = image[1::2, 0::2]
    d = image[1::2, 1::2]
    approx = (a + b + c + d) / 2
    detail_h = (a + b - c - d) / 2
    detail_v = (a - b + c - d) / 2
    detail_d = (a - b - c + d) / 2
    return approx, detail_h, detail_v, detail_d


def _haar_idwt2_level(approx, detail_h, detail_v, detail_d):
    """Exact inverse of one analysis level."""
    m = approx.shape[0]
    out = np.empty((2 * m, 2 * m), dtype=approx.dtype)
    out[0::2, 0::2] = (approx + detail_h + detail_v + detail_d) / 2
    out[0::2, 1::2] = (approx + detail_h - detail_v - detail_d) / 2
    out[1::2, 0::2] = (approx - detail_h + detail_v - detail_d) / 2
    out[1::2, 1::2] = (approx - detail_h - detail_v + detail_d) / 2
    return out


def haar_dwt2_multi(image: np.ndarray,
                    config: WaveletConfig = WaveletConfig()) -> WaveletPyramid:
    """Recursive decomposition to ``config.levels`` levels."""
    _check_square(image, "haar_dwt2_multi")
    n = image.shape[0]
    if n % (1 << config.levels):
        raise ValueError(
            f"side {n} is not divisible by 2^{config.levels}; cannot "
            f"decompose to {config.levels} levels")
    details = []
    approx = image
    for _ in range(config.levels):
        approx, dh, dv, dd = haar_dwt2_level(approx)
        details.append((dh, dv, dd))
    return WaveletPyramid(approximation=approx, details=details)


def haar_idwt2_multi(pyramid: WaveletPyramid) -> np.ndarray:
    """Reconstruct the image; exact inverse of :func:`haar_dwt2_multi`."""
    approx = pyramid.approximation
    for level, (dh, dv, dd) in enumerate(reversed(pyramid.details)):
        if not (approx.shape == dh.shape == dv.shape == dd.shape):
            raise ValueError(
                f"inconsistent pyramid: approximation {tuple(approx.shape)} vs "
                f"details {tuple(dh.shape)}/{tuple(dv.shape)}/{tuple(dd.shape)} "
                f"at level {pyramid.levels - level}")
        approx = _haar_idwt2_level(approx, dh, dv, dd)
    return approx


def suppress_approximation(pyramid: WaveletPyramid) -> WaveletPyramid:
    """Zero the approximation band; detail bands are passed through untouched."""
    return WaveletPyramid(approximation=np.zeros_like(pyramid.approximation),
                          details=pyramid.details)


def wavelet_preprocess(image: np.ndarray,
                       config: WaveletConfig = WaveletConfig()) -> np.ndarray:
    """High-pass representation of a square grayscale image.

    Decompose, zero the approximation band, reconstruct, then min-max
    rescale to [0, 1].  An all-flat reconstruction maps to all zeros.
    """
    pyramid = haar_dwt2_multi(image, config)
    recon = haar_idwt2_multi(suppress_approximation(pyramid))
    lo = recon.min()
    hi = recon.max()
    if hi - lo == 0:
        return np.zeros_like(recon)
    return (recon - lo) / (hi - lo)


def export_pyramid_bands(pyramid: WaveletPyramid, out_dir) -> list[Path]:
    """Debug dump: every band as an 8-bit grayscale PNG, min-max scaled.

    Files are ``approx.png`` and ``l<level>_<h|v|d>.png``; returns the paths.
    """
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def to_u8(band):
        lo, hi = band.min(), band.max()
        if hi - lo == 0:
            return np.zeros(band.shape, dtype=np.uint8)
        return np.round((band - lo) / (hi - lo) * 255).astype(np.uint8)

    paths = []
    bands = [("approx", pyramid.approximation)]
    for level, (dh, dv, dd) in enumerate(pyramid.details, start=1):
        bands += [(f"l{level}_h", dh), (f"l{level}_v", dv), (f"l{level}_d", dd)]
    for name, band in bands:
        path = out_dir / f"{name}.png"
        Image.fromarray(to_u8(band), mode="L").save(path)
        paths.append(path)
    return paths
