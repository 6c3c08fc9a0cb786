"""Synthetic word-image corpus for exercising the full pipeline.

Generates one strongly textured glyph family per class so that small
networks separate the classes within a few epochs.  Images are grayscale
PNGs laid out as ``root/<class>/<class>_NNN.png``, matching the directory
convention the corpus loader expects.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from .data import CANONICAL_SCRIPTS

SIDE = 64


def _coords(side):
    y, x = np.mgrid[0:side, 0:side]
    cy = cx = (side - 1) / 2.0
    r = np.hypot(y - cy, x - cx)
    return y, x, r


def _glyph(kind: int, side: int, rng) -> np.ndarray:
    y, x, r = _coords(side)
    phase = rng.uniform(0, 4)
    if kind == 0:
        img = (np.sin((x + phase) * np.pi / 4) > 0).astype(float)
    elif kind == 1:
        img = (np.sin((y + phase) * np.pi / 4) > 0).astype(float)
    elif kind == 2:
        img = (((x // 8) + (y // 8)) % 2).astype(float)
    elif kind == 3:
        img = (np.sin((x + y + phase) * np.pi / 6) > 0).astype(float)
    elif kind == 4:
        img = (r < side * 0.30).astype(float)
    elif kind == 5:
        img = ((r > side * 0.22) & (r < side * 0.38)).astype(float)
    elif kind == 6:
        c = (side - 1) / 2.0
        img = ((np.abs(x - c) < side * 0.08)
               | (np.abs(y - c) < side * 0.08)).astype(float)
    elif kind == 7:
        img = ((np.abs(x - y) < side * 0.08)
               | (np.abs(x + y - (side - 1)) < side * 0.08)).astype(float)
    elif kind == 8:
        m = side * 0.15
        inner = ((x > m) & (x < side - m) & (y > m) & (y < side - m))
        img = inner.astype(float)
        m2 = side * 0.3
        img[(x > m2) & (x < side - m2) & (y > m2) & (y < side - m2)] = 0.0
    elif kind == 9:
        img = (((x % 12) < 5) & ((y % 12) < 5)).astype(float)
    else:
        img = (np.sin((x - y + phase) * np.pi / 6) > 0).astype(float)
    return img


def render_sample(class_index: int, rng, side: int = SIDE) -> np.ndarray:
    """One noisy sample of the class glyph, float in [0, 1]."""
    img = _glyph(class_index, side, rng)
    # Random polarity, contrast jitter, and pixel noise.
    if rng.random() < 0.5:
        img = 1.0 - img
    lo = rng.uniform(0.0, 0.15)
    hi = rng.uniform(0.85, 1.0)
    img = lo + img * (hi - lo)
    img = img + rng.normal(0.0, 0.04, img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_corpus(root, per_class: int = 20, seed: int = 0,
                    side: int = SIDE) -> Path:
    """Write the corpus under ``root``; returns the root path."""
    root = Path(root)
    for ci, name in enumerate(CANONICAL_SCRIPTS):
        rng = np.random.default_rng([seed, 9, ci])
        class_dir = root / name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            img = render_sample(ci, rng, side)
            data = np.round(img * 255).astype(np.uint8)
            Image.fromarray(data, mode="L").save(
                class_dir / f"{name.lower()}_{i:03d}.png")
    return root


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="generate a synthetic 11-class word-image corpus")
    parser.add_argument("root", help="output directory")
    parser.add_argument("--per-class", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--side", type=int, default=SIDE)
    args = parser.parse_args(argv)
    generate_corpus(args.root, args.per_class, args.seed, args.side)
    print(f"wrote {11 * args.per_class} images under {args.root}")


if __name__ == "__main__":
    main()
