"""Dataset scanning, dihedral augmentation and sample preparation.

Layout is ``root/<split>/images/*.{png,jpg}`` with masks in
``root/<split>/GT/*.png`` sharing the image stem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torch.utils.data import Dataset

from .encoder import IMAGE_MEAN, IMAGE_STD
from .losses import edge_labels

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
NUM_AUGMENTATIONS = 8
MASK_THRESHOLD = 128


@dataclass
class DatasetManifest:
    root: Path
    split: str
    entries: list[tuple[Path, Path]]

    def __len__(self) -> int:
        return len(self.entries)

    def to_lines(self) -> str:
        return "".join(f"{img}\t{mask}\n" for img, mask in self.entries)

    def write(self, path) -> None:
        Path(path).write_text(self.to_lines())


def scan_dataset(root, split: str) -> DatasetManifest:
    root = Path(root)
    image_dir, mask_dir = root / split / "images", root / split / "GT"
    images = {p.stem: p for p in sorted(image_dir.glob("*")) if p.suffix.lower() in IMAGE_SUFFIXES}
    masks = {p.stem: p for p in sorted(mask_dir.glob("*.png"))}
    orphans = sorted(set(images) ^ set(masks))
    if orphans:
        raise ValueError(f"{len(orphans)} images/masks without a partner in {root / split}: {orphans}")
    if not images:
        log.warning("no samples found under %s", root / split)
    entries = [(images[s], masks[s]) for s in sorted(images)]
    return DatasetManifest(root, split, entries)


def augment(array: np.ndarray, augmentation_id: int) -> np.ndarray:
    """Apply one of the 8 flip/rotation transforms to the last two axes.

    0 identity, 1-3 counter-clockwise rotation by 90/180/270 degrees,
    4 horizontal flip, 5-7 horizontal flip followed by rotation 90/180/270.
    """
    if augmentation_id not in range(NUM_AUGMENTATIONS):
        raise ValueError(f"augmentation id must be in 0..7, got {augmentation_id}")
    x = np.asarray(array)
    if augmentation_id >= 4:
        x = np.flip(x, axis=-1)
    return np.ascontiguousarray(np.rot90(x, k=augmentation_id % 4, axes=(-2, -1)))


@dataclass
class Sample:
    image: np.ndarray  # float32 [3, H, W], standardized
    mask: np.ndarray  # uint8 [H, W]
    edge: np.ndarray  # uint8 [H, W]
    augmentation_id: int = 0


def standardize_image(image: np.ndarray) -> np.ndarray:
    mean = np.asarray(IMAGE_MEAN, dtype=np.float32)[:, None, None]
    std = np.asarray(IMAGE_STD, dtype=np.float32)[:, None, None]
    return ((image.astype(np.float32) - mean) / std).astype(np.float32)


def _open(path, mode: str) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert(mode)
    except (OSError, UnidentifiedImageError) as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc


def load_image(path, size: int) -> np.ndarray:
    """Decoded RGB image resized bilinearly, ``[3, size, size]`` floats in [0, 1]."""
    img = _open(path, "RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32).transpose(2, 0, 1) / 255.0


def load_mask(path, size: int) -> np.ndarray:
    img = _open(path, "L").resize((size, size), Image.NEAREST)
    return (np.asarray(img) >= MASK_THRESHOLD).astype(np.uint8)


def make_sample(image: np.ndarray, mask: np.ndarray, augmentation_id: int) -> Sample:
    image = augment(image, augmentation_id)
    mask = augment(mask, augmentation_id)
    return Sample(standardize_image(image), mask, edge_labels(mask), augmentation_id)


def prepare_sample(image_path, mask_path, augmentation_id: int = 0, size: int = 128) -> Sample:
    return make_sample(load_image(image_path, size), load_mask(mask_path, size), augmentation_id)


class SaliencyDataset(Dataset):
    """Manifest entries expanded by the augmentation set.

    Index ``i`` maps to entry ``i // 8`` under transform ``i % 8`` (or to
    entry ``i`` untransformed when ``augment=False``). Decoded, resized
    arrays are cached per entry when ``cache`` is set.
    """

    def __init__(self, manifest: DatasetManifest, size: int = 128, augment: bool = True,
                 cache: bool = True):
        self.manifest = manifest
        self.size = size
        self.augment = augment
        self.cache = cache
        self._decoded: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def factor(self) -> int:
        return NUM_AUGMENTATIONS if self.augment else 1

    def __len__(self) -> int:
        return len(self.manifest) * self.factor

    def decoded(self, entry: int):
        if entry in self._decoded:
            return self._decoded[entry]
        img_path, mask_path = self.manifest.entries[entry]
        pair = load_image(img_path, self.size), load_mask(mask_path, self.size)
        if self.cache:
            self._decoded[entry] = pair
        return pair

    def sample(self, index: int) -> Sample:
        entry, aug = divmod(index, self.factor)
        image, mask = self.decoded(entry)
        return make_sample(image, mask, aug)

    def __getitem__(self, index: int):
        s = self.sample(index)
        return (torch.from_numpy(s.image),
                torch.from_numpy(s.mask[None].astype(np.float32)),
                torch.from_numpy(s.edge[None].astype(np.float32)),
                index)
