"""Synthetic multi-object composites written in the dataset directory layout."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def _smooth_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    coarse = rng.random((cells, cells)).astype(np.float32)
    img = Image.fromarray((coarse * 255).astype(np.uint8)).resize((size, size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def _shape_mask(rng: np.random.Generator, size: int, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) + 0.5
    cy, cx = rng.uniform(radius, size - radius, 2)
    ry = radius * rng.uniform(0.6, 1.4)
    rx = radius * rng.uniform(0.6, 1.4)
    if rng.random() < 0.5:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)


def make_composite(rng: np.random.Generator, size: int = 32, max_objects: int = 3,
                   distractors: int = 2):
    """One RGB image with 1..max_objects salient shapes of varied scale.

    Salient shapes share a saturated hue that contrasts with a textured,
    desaturated background; ``distractors`` small background-coloured
    blobs of high local contrast are added as clutter.
    """
    bg_base = rng.uniform(0.25, 0.55, 3)
    texture = _smooth_noise(rng, size, max(2, size // 6))
    image = bg_base[None, None, :] * (0.7 + 0.6 * texture[..., None])
    for _ in range(distractors):
        blob = _shape_mask(rng, size, rng.uniform(1.0, 2.5))
        image[blob] = np.clip(bg_base * rng.uniform(0.3, 1.8), 0, 1)
    mask = np.zeros((size, size), dtype=bool)
    hue = np.zeros(3)
    hue[rng.integers(3)] = 1.0
    fg = np.clip(0.35 + 0.6 * hue + rng.uniform(-0.1, 0.1, 3), 0, 1)
    for _ in range(int(rng.integers(1, max_objects + 1))):
        radius = size * rng.uniform(0.08, 0.3)
        m = _shape_mask(rng, size, radius)
        mask |= m
    shade = 0.85 + 0.3 * _smooth_noise(rng, size, max(2, size // 8))
    image[mask] = np.clip(fg[None, :] * shade[mask][:, None], 0, 1)
    image = np.clip(image + rng.normal(0, 0.03, image.shape), 0, 1)
    return (image * 255).round().astype(np.uint8), mask.astype(np.uint8) * 255


PALETTE = np.array([[0.9, 0.2, 0.2], [0.2, 0.8, 0.2], [0.2, 0.3, 0.9],
                    [0.9, 0.8, 0.1], [0.8, 0.2, 0.8], [0.1, 0.8, 0.8]])


def make_oddball_composite(rng: np.random.Generator, size: int = 32, objects: tuple[int, int] = (4, 6),
                           odd: tuple[int, int] = (1, 2)):
    """Several shapes of varied scale; the salient ones are the colour minority.

    Two palette colours are drawn per image, so any colour is salient in some
    images and clutter in others: a pixel's label depends on what else is in
    the image, not on its local appearance.
    """
    bg_base = rng.uniform(0.3, 0.5, 3)
    texture = _smooth_noise(rng, size, max(2, size // 6))
    image = bg_base[None, None, :] * (0.7 + 0.6 * texture[..., None])
    common, rare = PALETTE[rng.choice(len(PALETTE), 2, replace=False)]
    total = int(rng.integers(objects[0], objects[1] + 1))
    # the minority must stay a strict minority
    n_odd = int(rng.integers(odd[0], min(odd[1], (total - 1) // 2) + 1))
    mask = np.zeros((size, size), dtype=bool)
    # clutter first so salient shapes stay fully visible on top
    for k in range(total):
        salient = k >= total - n_odd
        m = _shape_mask(rng, size, size * rng.uniform(0.07, 0.2))
        image[m] = (rare if salient else common) * rng.uniform(0.85, 1.1)
        mask[m] = salient
    image = np.clip(image + rng.normal(0, 0.03, image.shape), 0, 1)
    return (image * 255).round().astype(np.uint8), mask.astype(np.uint8) * 255


GENERATORS = {"composite": make_composite, "oddball": make_oddball_composite}


def write_dataset(root, split: str, count: int, size: int = 32, seed: int = 0,
                  kind: str = "composite", **kwargs) -> Path:
    """Write ``count`` images of ``kind`` to ``root/split/{images,GT}`` and return the split dir."""
    make = GENERATORS[kind]
    rng = np.random.default_rng(seed)
    base = Path(root) / split
    (base / "images").mkdir(parents=True, exist_ok=True)
    (base / "GT").mkdir(parents=True, exist_ok=True)
    for i in range(count):
        image, mask = make(rng, size, **kwargs)
        Image.fromarray(image).save(base / "images" / f"{i:04d}.png")
        Image.fromarray(mask).save(base / "GT" / f"{i:04d}.png")
    return base
