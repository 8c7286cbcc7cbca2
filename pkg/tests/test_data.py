import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pair.data import (
    CATEGORY_NAMES,
    PALETTE_NAMES,
    GeneratorConfig,
    generate_dataset,
    generate_sample,
    load_generator_meta,
    load_manifest,
    load_sample,
)
from pair.errors import PairError
from pair.imageio import png_read, png_write
from pair.representation import Image, segment
from pair.rle import mask_from_json, mask_to_json, rle_decode, rle_encode


class TestRle:
    def test_roundtrip_random_masks(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            h, w = rng.integers(1, 24, 2)
            mask = rng.random((h, w)) < rng.random()
            counts = rle_encode(mask)
            np.testing.assert_array_equal(rle_decode(counts, (h, w)), mask)

    def test_empty_mask_canonical(self):
        mask = np.zeros((5, 7), dtype=bool)
        assert rle_encode(mask) == [35]

    def test_full_mask(self):
        mask = np.ones((4, 4), dtype=bool)
        assert rle_encode(mask) == [0, 16]

    def test_decode_validates_total(self):
        with pytest.raises(ValueError):
            rle_decode([3, 2], (4, 4))
        with pytest.raises(ValueError):
            rle_decode([-1, 17], (4, 4))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_property(self, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((9, 13)) < 0.5
        np.testing.assert_array_equal(
            mask_from_json(mask_to_json(mask)), mask
        )


class TestPng:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        quantized = np.round(rng.random((16, 16, 3)) * 255) / 255
        image = Image(quantized.astype(np.float32))
        path = tmp_path / "x.png"
        png_write(image, path)
        back = png_read(path)
        np.testing.assert_array_equal(
            np.round(back.pixels * 255).astype(np.uint8),
            np.round(image.pixels * 255).astype(np.uint8),
        )

    def test_read_writes_are_stable(self, tmp_path):
        rng = np.random.default_rng(2)
        image = Image(rng.random((16, 16, 3)).astype(np.float32))
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        png_write(image, p1)
        png_write(png_read(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


def _tree_digest(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestGenerator:
    def test_empty_dataset(self, tmp_path):
        manifest = generate_dataset(GeneratorConfig(), 0, tmp_path / "empty", seed=3)
        assert manifest.count == 0
        assert not (tmp_path / "empty" / "images").exists()
        loaded = load_manifest(tmp_path / "empty")
        assert loaded.count == 0

    def test_same_seed_byte_identical(self, tmp_path):
        generate_dataset(GeneratorConfig(), 6, tmp_path / "a", seed=5)
        generate_dataset(GeneratorConfig(), 6, tmp_path / "b", seed=5)
        assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")

    def test_partition_invariant_all_samples(self, tiny_dataset):
        for idx in range(tiny_dataset.count):
            image, pmap, _ = load_sample(tiny_dataset, idx)
            # PanopticMap construction already validates; double-check coverage
            assert pmap.instance.min() == 0
            assert (pmap.instance >= 0).all()

    def test_instance_counts_match_generator_metadata(self, tiny_dataset):
        for idx in range(tiny_dataset.count):
            image, pmap, _ = load_sample(tiny_dataset, idx)
            meta = load_generator_meta(tiny_dataset, idx)
            counts = [int((pmap.instance == i).sum()) for i in range(pmap.num_instances)]
            assert counts == meta["areas"]

    def test_oracle_segmentation_matches_ground_truth(self, tiny_dataset):
        image, pmap, _ = load_sample(tiny_dataset, 0)
        out = segment(image, "oracle")
        np.testing.assert_array_equal(out.instance, pmap.instance)
        np.testing.assert_array_equal(out.category, pmap.category)

    def test_caption_names_colors_and_kinds(self, tiny_dataset):
        hits = 0
        for idx in range(tiny_dataset.count):
            _, pmap, caption = load_sample(tiny_dataset, idx)
            assert caption.startswith("A picture of ")
            words = set(caption.lower().split())
            if words & set(PALETTE_NAMES):
                hits += 1
            assert words & set(CATEGORY_NAMES[1:])
        assert hits == tiny_dataset.count

    def test_distinct_colors_within_scene(self, tiny_dataset):
        for idx in range(tiny_dataset.count):
            meta = load_generator_meta(tiny_dataset, idx)
            assert len(set(meta["colors"])) == len(meta["colors"])

    def test_split_disjoint_and_counted(self, tiny_dataset):
        train = set(tiny_dataset.train_indices)
        val = set(tiny_dataset.val_indices)
        assert not (train & val)
        assert len(train) + len(val) == tiny_dataset.count

    def test_manifest_count_mismatch_detected(self, tmp_path):
        generate_dataset(GeneratorConfig(), 3, tmp_path / "ds", seed=1)
        (tmp_path / "ds" / "images" / "00002.png").unlink()
        with pytest.raises(PairError):
            load_manifest(tmp_path / "ds")

    def test_sample_index_bounds(self, tiny_dataset):
        with pytest.raises(PairError):
            load_sample(tiny_dataset, tiny_dataset.count)

    def test_objects_within_canvas_and_occlusion(self):
        image, pmap, _, meta = generate_sample((21, 4), GeneratorConfig())
        # background always present as instance 0
        assert (pmap.instance == 0).any()
        assert pmap.instance_category(0) == 0
