"""Regenerates the CLAHE golden pair with numpy, independently of the Rust code.

    python3 gen_clahe_golden.py

Writes clahe_input.png (101x77, dark, unimodal) and clahe_golden.png
(tile grid 8x6, clip limit 2.0).
"""
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

W, H = 101, 77
TILES_X, TILES_Y = 8, 6
CLIP = 2.0
HERE = Path(__file__).parent


def make_input():
    rng = np.random.default_rng(20240611)
    yy, xx = np.mgrid[0:H, 0:W]
    base = 30 + 25 * np.exp(-((xx - 60) ** 2 + (yy - 30) ** 2) / 400.0) + 0.2 * xx
    speckle = rng.rayleigh(scale=np.sqrt(2 / np.pi), size=(H, W))
    return np.clip(np.rint(base * speckle), 0, 255).astype(np.uint8)


def tile_luts(img):
    tw, th = -(-W // TILES_X), -(-H // TILES_Y)
    padded = np.pad(img, ((0, th * TILES_Y - H), (0, tw * TILES_X - W)), mode="edge")
    area = tw * th
    limit = max(1, int(np.floor(CLIP * area / 256)))
    luts = np.zeros((TILES_Y, TILES_X, 256), dtype=np.int64)
    for ty in range(TILES_Y):
        for tx in range(TILES_X):
            block = padded[ty * th:(ty + 1) * th, tx * tw:(tx + 1) * tw]
            hist = np.bincount(block.ravel(), minlength=256).astype(np.int64)
            excess = int(np.maximum(hist - limit, 0).sum())
            hist = np.minimum(hist, limit) + excess // 256
            hist[: excess % 256] += 1
            cdf = np.cumsum(hist)
            # round(255 * cdf / area), halves up, in exact arithmetic
            luts[ty, tx] = np.minimum((2 * 255 * cdf + area) // (2 * area), 255)
    return luts, tw, th


def taps(n, tile, tiles):
    """Neighbouring tile indices and the exact weight of the upper one."""
    out = []
    for p in range(n):
        pos = Fraction(2 * p + 1 - tile, 2 * tile)  # (centre - first tile centre) / tile
        i0 = pos.numerator // pos.denominator
        frac = pos - i0
        out.append((min(max(i0, 0), tiles - 1), min(max(i0 + 1, 0), tiles - 1), frac))
    return out


def clahe(img):
    luts, tw, th = tile_luts(img)
    xt, yt = taps(W, tw, TILES_X), taps(H, th, TILES_Y)
    out = np.zeros_like(img)
    for y, (y0, y1, fy) in enumerate(yt):
        for x, (x0, x1, fx) in enumerate(xt):
            v = img[y, x]
            val = (
                luts[y0, x0, v] * (1 - fx) * (1 - fy)
                + luts[y0, x1, v] * fx * (1 - fy)
                + luts[y1, x0, v] * (1 - fx) * fy
                + luts[y1, x1, v] * fx * fy
            )
            out[y, x] = min(255, int(np.floor(Fraction(val) + Fraction(1, 2))))
    return out


if __name__ == "__main__":
    src = make_input()
    Image.fromarray(src, mode="L").save(HERE / "clahe_input.png")
    Image.fromarray(clahe(src), mode="L").save(HERE / "clahe_golden.png")
