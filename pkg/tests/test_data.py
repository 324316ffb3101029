import logging

import numpy as np
import pytest
import torch
from PIL import Image

import oracles
from dafnet.data import (
    DatasetManifest,
    SaliencyDataset,
    augment,
    load_image,
    load_mask,
    prepare_sample,
    scan_dataset,
    standardize_image,
)
from dafnet.encoder import IMAGE_MEAN, IMAGE_STD
from dafnet.synthetic import PALETTE, make_composite, make_oddball_composite, write_dataset

# (row, col) source pixel feeding output pixel (i, j) of an n x n image
INDEX_MAPS = {
    0: lambda i, j, n: (i, j),
    1: lambda i, j, n: (j, n - 1 - i),
    2: lambda i, j, n: (n - 1 - i, n - 1 - j),
    3: lambda i, j, n: (n - 1 - j, i),
    4: lambda i, j, n: (i, n - 1 - j),
    5: lambda i, j, n: (j, i),
    6: lambda i, j, n: (n - 1 - i, j),
    7: lambda i, j, n: (n - 1 - j, n - 1 - i),
}


def permute(x, aug):
    n = x.shape[-1]
    out = np.empty_like(x)
    for i in range(n):
        for j in range(n):
            out[..., i, j] = x[(...,) + INDEX_MAPS[aug](i, j, n)]
    return out


FIXTURE = np.arange(16).reshape(4, 4)


def write_pair(root, split, stem, image, mask, suffix=".png"):
    (root / split / "images").mkdir(parents=True, exist_ok=True)
    (root / split / "GT").mkdir(parents=True, exist_ok=True)
    Image.fromarray(image).save(root / split / "images" / f"{stem}{suffix}")
    Image.fromarray(mask).save(root / split / "GT" / f"{stem}.png")


class TestAugment:
    def test_identity(self):
        assert np.array_equal(augment(FIXTURE, 0), FIXTURE)

    def test_half_turn_involution(self):
        assert np.array_equal(augment(augment(FIXTURE, 2), 2), FIXTURE)

    @pytest.mark.parametrize("aug", range(8))
    def test_index_map_oracle(self, aug):
        assert np.array_equal(augment(FIXTURE, aug), permute(FIXTURE, aug))

    def test_all_distinct(self):
        outs = {augment(FIXTURE, a).tobytes() for a in range(8)}
        assert len(outs) == 8

    def test_group_closure(self):
        table = {augment(FIXTURE, a).tobytes(): a for a in range(8)}
        for a in range(8):
            for b in range(8):
                assert augment(augment(FIXTURE, a), b).tobytes() in table
        # every element has an inverse in the set
        for a in range(8):
            assert any(np.array_equal(augment(augment(FIXTURE, a), b), FIXTURE) for b in range(8))

    def test_channels_move_together(self):
        x = np.stack([FIXTURE, FIXTURE * 2, FIXTURE * 3])
        out = augment(x, 6)
        for c in range(3):
            assert np.array_equal(out[c], augment(x[c], 6))

    @pytest.mark.parametrize("bad", [-1, 8, 100])
    def test_invalid_id(self, bad):
        with pytest.raises(ValueError):
            augment(FIXTURE, bad)


class TestScanDataset:
    def test_empty(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            manifest = scan_dataset(tmp_path, "train")
        assert len(manifest) == 0
        assert "no samples" in caplog.text

    def test_sorted_pairs(self, tmp_path):
        img, mask = np.zeros((4, 4, 3), np.uint8), np.zeros((4, 4), np.uint8)
        for stem in ("c", "a", "b"):
            write_pair(tmp_path, "train", stem, img, mask, suffix=".jpg" if stem == "b" else ".png")
        manifest = scan_dataset(tmp_path, "train")
        assert [i.stem for i, _ in manifest.entries] == ["a", "b", "c"]
        assert all(i.stem == m.stem for i, m in manifest.entries)
        lines = manifest.to_lines().splitlines()
        assert len(lines) == 3 and lines[0].split("\t")[1].endswith("a.png")
        manifest.write(tmp_path / "manifest.tsv")
        assert (tmp_path / "manifest.tsv").read_text() == manifest.to_lines()

    def test_orphans_reported(self, tmp_path):
        write_pair(tmp_path, "test", "ok", np.zeros((4, 4, 3), np.uint8), np.zeros((4, 4), np.uint8))
        Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "test" / "images" / "lonely.png")
        Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "test" / "GT" / "stray.png")
        with pytest.raises(ValueError, match="lonely.*stray"):
            scan_dataset(tmp_path, "test")


class TestPrepareSample:
    def test_solid_white_mask(self, tmp_path):
        write_pair(tmp_path, "train", "w", np.full((8, 8, 3), 200, np.uint8), np.full((8, 8), 255, np.uint8))
        s = prepare_sample(tmp_path / "train/images/w.png", tmp_path / "train/GT/w.png", size=16)
        assert s.mask.shape == (16, 16) and np.all(s.mask == 1)
        frame = np.ones((16, 16), np.uint8)
        frame[2:-1, 2:-1] = 0
        assert np.array_equal(s.edge, frame)

    def test_solid_black_mask(self, tmp_path):
        write_pair(tmp_path, "train", "b", np.zeros((8, 8, 3), np.uint8), np.zeros((8, 8), np.uint8))
        s = prepare_sample(tmp_path / "train/images/b.png", tmp_path / "train/GT/b.png", size=16)
        assert not s.mask.any() and not s.edge.any()

    def test_checker_step_by_step(self, tmp_path):
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, (12, 12, 3), dtype=np.uint8)
        checker = ((np.indices((12, 12)) // 3).sum(axis=0) % 2 * 255).astype(np.uint8)
        checker[0, 0] = 100  # gray fringe resolves to background
        write_pair(tmp_path, "train", "c", image, checker)
        s = prepare_sample(tmp_path / "train/images/c.png", tmp_path / "train/GT/c.png", 5, size=16)

        img = np.asarray(Image.fromarray(image).resize((16, 16), Image.BILINEAR), np.float32) / 255
        img = permute(img.transpose(2, 0, 1), 5)
        mean = np.asarray(IMAGE_MEAN)[:, None, None]
        std = np.asarray(IMAGE_STD)[:, None, None]
        mask = (np.asarray(Image.fromarray(checker).resize((16, 16), Image.NEAREST)) >= 128).astype(np.uint8)
        mask = permute(mask, 5)
        np.testing.assert_allclose(s.image, (img - mean) / std, atol=1e-5)
        assert np.array_equal(s.mask, mask)
        assert np.array_equal(s.edge, oracles.dilate_2x2(oracles.boundary(mask)))
        assert s.image.dtype == np.float32 and s.image.shape == (3, 16, 16)

    def test_deterministic_bytes(self, tmp_path):
        write_dataset(tmp_path, "train", 1, size=32, seed=3)
        (img,), (mask,) = zip(*scan_dataset(tmp_path, "train").entries)
        a, b = prepare_sample(img, mask, 3, 32), prepare_sample(img, mask, 3, 32)
        assert a.image.tobytes() == b.image.tobytes() and a.edge.tobytes() == b.edge.tobytes()

    def test_unreadable_file(self, tmp_path):
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"not an image")
        with pytest.raises(ValueError, match="broken.png"):
            load_image(bad, 16)
        with pytest.raises(ValueError, match="missing.png"):
            load_mask(tmp_path / "missing.png", 16)

    def test_standardize(self):
        x = np.full((3, 2, 2), 0.5, np.float32)
        out = standardize_image(x)
        for c in range(3):
            assert np.allclose(out[c], (0.5 - IMAGE_MEAN[c]) / IMAGE_STD[c])


class TestSaliencyDataset:
    def test_eightfold_expansion(self):
        entries = [(f"i{k}.png", f"m{k}.png") for k in range(1400)]
        manifest = DatasetManifest("root", "train", entries)
        assert len(SaliencyDataset(manifest)) == 11200
        assert len(SaliencyDataset(manifest, augment=False)) == 1400

    def test_items(self, tmp_path):
        write_dataset(tmp_path, "train", 2, size=32, seed=4)
        ds = SaliencyDataset(scan_dataset(tmp_path, "train"), size=32)
        image, mask, edge, index = ds[13]
        assert index == 13
        assert image.shape == (3, 32, 32) and mask.shape == (1, 32, 32) and edge.shape == (1, 32, 32)
        base = ds.sample(8)
        assert np.array_equal(mask[0].numpy(), augment(base.mask, 5))
        assert set(torch.unique(mask).tolist()) <= {0.0, 1.0}


class TestSynthetic:
    def test_composite(self):
        image, mask = make_composite(np.random.default_rng(0), size=32)
        assert image.shape == (32, 32, 3) and image.dtype == np.uint8
        assert set(np.unique(mask)) <= {0, 255} and mask.any()

    def test_write_dataset_deterministic(self, tmp_path):
        write_dataset(tmp_path / "a", "train", 3, size=32, seed=5)
        write_dataset(tmp_path / "b", "train", 3, size=32, seed=5)
        for (ia, ma), (ib, mb) in zip(scan_dataset(tmp_path / "a", "train").entries,
                                      scan_dataset(tmp_path / "b", "train").entries):
            assert ia.read_bytes() == ib.read_bytes() and ma.read_bytes() == mb.read_bytes()

    @pytest.mark.parametrize("seed", range(20))
    def test_oddball_minority_is_salient(self, seed):
        image, mask = make_oddball_composite(np.random.default_rng(seed), size=32)
        fg = mask > 0
        assert fg.any() and not fg.all()
        # salient pixels all carry the single minority colour
        colours = image.reshape(-1, 3) / 255.0
        nearest = np.argmin(((colours[:, None, :] - PALETTE[None]) ** 2).sum(-1), axis=1).reshape(32, 32)
        rare = np.bincount(nearest[fg]).argmax()
        assert (nearest[fg] == rare).mean() > 0.9

    def test_oddball_kind(self, tmp_path):
        write_dataset(tmp_path, "test", 2, size=32, seed=7, kind="oddball")
        image, mask = make_oddball_composite(np.random.default_rng(7), size=32)
        first = np.asarray(Image.open(tmp_path / "test" / "GT" / "0000.png"))
        assert np.array_equal(first, mask)
        with pytest.raises(KeyError):
            write_dataset(tmp_path, "test", 1, kind="unknown")
