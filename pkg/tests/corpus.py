"""Synthetic piecewise-smooth test images.

Random ramps plus constant-offset ellipses and rectangles give the sharp
repeated structure that patch grouping thrives on, without shipping any
binary fixtures.  Everything is seeded and reproducible.
"""

import os

import numpy as np

from nldenoise.image import ImageTensor, save_image


def synthetic_plane(rng, height, width):
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    c = rng.uniform(40.0, 215.0, size=4)
    base = (
        c[0]
        + (c[1] - c[0]) * ii / max(1, height - 1)
        + (c[2] - c[0]) * jj / max(1, width - 1)
        + (c[3] - c[0]) * ii * jj / max(1, (height - 1) * (width - 1))
    )
    for _ in range(rng.integers(3, 7)):
        kind = rng.integers(0, 2)
        offset = rng.uniform(-90.0, 90.0)
        if kind == 0:
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            ry, rx = rng.uniform(height / 10, height / 3), rng.uniform(width / 10, width / 3)
            mask = ((ii - cy) / ry) ** 2 + ((jj - cx) / rx) ** 2 <= 1.0
        else:
            y0, x0 = rng.integers(0, height), rng.integers(0, width)
            y1 = min(height, y0 + int(rng.integers(height // 8, height // 2)))
            x1 = min(width, x0 + int(rng.integers(width // 8, width // 2)))
            mask = (ii >= y0) & (ii < y1) & (jj >= x0) & (jj < x1)
        base = np.where(mask, base + offset, base)
    return np.clip(base, 5.0, 250.0)


def synthetic_gray(seed, height, width):
    rng = np.random.default_rng(seed)
    return ImageTensor.from_planes(synthetic_plane(rng, height, width), 255.0)


def synthetic_color(seed, height, width):
    rng = np.random.default_rng(seed)
    base = synthetic_plane(rng, height, width) / 255.0
    tint = rng.uniform(0.6, 1.0, size=3)
    shift = rng.uniform(0.0, 0.15, size=3)
    planes = np.stack([np.clip(base * t + s, 0.0, 1.0) for t, s in zip(tint, shift)])
    return ImageTensor.from_planes(planes, 1.0)


def write_corpus(directory, count, height=96, width=96, mode="grayscale", seed=1000):
    os.makedirs(directory, exist_ok=True)
    names = []
    for i in range(count):
        if mode == "grayscale":
            img = synthetic_gray(seed + i, height, width)
            name = f"img{i:02d}.pgm"
        else:
            img = synthetic_color(seed + i, height, width)
            name = f"img{i:02d}.ppm"
        save_image(img, os.path.join(directory, name))
        names.append(name)
    return names
