import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pair.conditioning import (
    ConditioningBundle,
    DropoutConfig,
    apply_dropout,
    assemble_conditioning,
    build_structure_tensor,
    decode_structure_tensor,
    encode_bundle,
    encode_null_structure,
    encode_null_text,
    splat_appearance,
)
from pair.errors import LayerMismatchError
from pair.representation import (
    AppearanceVector,
    Image,
    ObjectStructure,
    SceneObject,
    scene_from_objects,
)
from tests.conftest import make_scene


def single_object_scene(vector=(1.0, 2.0, 2.0), h=8, w=8, caption=None):
    """One object covering the whole canvas, one category."""
    image = Image(np.full((h, w, 3), 0.5, dtype=np.float32))
    mask = np.ones((h, w), dtype=bool)
    appearance = (AppearanceVector(np.array(vector, dtype=np.float32), "identity", 0),)
    obj = SceneObject(ObjectStructure(0, mask), appearance)
    return scene_from_objects(image, [obj], caption=caption, category_names=("thing",))


class TestStructureTensor:
    def test_single_object_single_category(self):
        scene = single_object_scene()
        tensor = build_structure_tensor(scene)
        np.testing.assert_array_equal(tensor.values[0], 0.0)
        np.testing.assert_array_equal(tensor.values[1], 1.0)

    def test_two_objects_two_values_per_channel(self, stack):
        image, scene, _ = make_scene(6, stack=stack)
        tensor = build_structure_tensor(scene)
        for obj in scene.objects:
            for ch in range(2):
                region = tensor.values[ch][obj.structure.mask]
                assert np.unique(region).size == 1
        assert np.unique(tensor.values[1]).size == scene.num_objects

    def test_decode_roundtrip(self, stack):
        image, scene, _ = make_scene(7, stack=stack)
        tensor = build_structure_tensor(scene)
        category, instance = decode_structure_tensor(tensor)
        np.testing.assert_array_equal(category, scene.panoptic.category)
        np.testing.assert_array_equal(instance, scene.panoptic.instance)

    def test_decode_oracle_formula(self, stack):
        # independent inversion straight from the normalization formulas
        image, scene, _ = make_scene(8, stack=stack)
        t = build_structure_tensor(scene)
        k = max(scene.num_categories - 1, 1)
        n = scene.num_objects
        cat = np.rint(t.values[0] * k).astype(int)
        inst = np.rint(t.values[1] * n - 1).astype(int)
        np.testing.assert_array_equal(cat, scene.panoptic.category)
        np.testing.assert_array_equal(inst, scene.panoptic.instance)

    def test_determinism_bit_equal(self, stack):
        image, scene, _ = make_scene(9, stack=stack)
        a = build_structure_tensor(scene)
        b = build_structure_tensor(scene)
        np.testing.assert_array_equal(a.values, b.values)


class TestSplat:
    def test_full_image_object_unit_norm(self):
        scene = single_object_scene(vector=(3.0, 4.0, 0.0))
        tensor = splat_appearance(scene, "identity", 0)
        expected = np.array([0.6, 0.8, 0.0], dtype=np.float32)
        for ch in range(3):
            np.testing.assert_allclose(tensor.values[ch], expected[ch], atol=1e-6)
        norms = np.linalg.norm(tensor.appearance_part(), axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_zero_vector_stays_zero(self):
        scene = single_object_scene(vector=(0.0, 0.0, 0.0))
        tensor = splat_appearance(scene, "identity", 0)
        np.testing.assert_array_equal(tensor.appearance_part(), 0.0)

    def test_brute_force_lookup(self, stack):
        image, scene, _ = make_scene(10, stack=stack)
        eid, layer = scene.objects[0].slots()[0]
        tensor = splat_appearance(scene, eid, layer)
        h, w = tensor.spatial
        app = tensor.appearance_part()
        for j in range(h):
            for k in range(w):
                owner = scene.panoptic.instance[j, k]
                v64 = scene.object(owner).appearance[0].values.astype(np.float64)
                unit = (v64 / (np.linalg.norm(v64) + 1e-8)).astype(np.float32)
                np.testing.assert_array_equal(app[:, j, k], unit)

    def test_structure_channels_appended(self, stack):
        image, scene, _ = make_scene(11, stack=stack)
        tensor = splat_appearance(scene, "identity", 0)
        np.testing.assert_array_equal(
            tensor.structure_part(), build_structure_tensor(scene).values
        )

    def test_missing_layer_rejected(self, stack):
        image, scene, _ = make_scene(12, stack=stack)
        with pytest.raises(LayerMismatchError):
            splat_appearance(scene, "identity", 3)

    def test_splat_pool_idempotent(self, stack):
        from pair.representation import FeatureMap, pool_appearance

        image, scene, _ = make_scene(13, stack=stack)
        tensor = splat_appearance(scene, "identity", 0)
        for i, obj in enumerate(scene.objects):
            pooled = pool_appearance(
                FeatureMap(tensor.appearance_part(), "identity", 0), obj.structure.mask
            )
            vec = obj.appearance[0].values
            unit = vec / (np.linalg.norm(vec.astype(np.float64)) + 1e-8)
            np.testing.assert_allclose(pooled.values, unit, atol=1e-6)


class TestAssemble:
    def test_caption_passthrough(self, stack):
        image, scene, _ = make_scene(14, stack=stack, caption="a red circle")
        bundle = assemble_conditioning(scene)
        assert bundle.text == "a red circle"

    def test_auto_caption_largest_object(self):
        image = Image(np.full((16, 16, 3), 0.5, dtype=np.float32))
        big = np.zeros((16, 16), dtype=bool)
        big[:, :12] = True
        vec = (AppearanceVector(np.ones(3, dtype=np.float32), "identity", 0),)
        objects = [
            SceneObject(ObjectStructure(1, big), vec),
            SceneObject(ObjectStructure(0, ~big), vec),
        ]
        scene = scene_from_objects(
            image, objects, caption=None, category_names=("background", "circle")
        )
        bundle = assemble_conditioning(scene)
        assert bundle.text == "A picture of circle"

    def test_layer_order_matches_slots(self, stack):
        image, scene, _ = make_scene(15, stack=stack)
        bundle = assemble_conditioning(scene)
        got = tuple((t.encoder_id, t.layer) for t in bundle.appearance)
        assert got == scene.objects[0].slots()


class TestDropout:
    def test_zero_probability_is_identity(self, stack):
        image, scene, _ = make_scene(16, stack=stack)
        bundle = assemble_conditioning(scene)
        rng = np.random.default_rng(0)
        out = apply_dropout(bundle, DropoutConfig(0, 0, 0), rng)
        assert out.structure is bundle.structure
        assert out.appearance is bundle.appearance
        assert out.text == bundle.text

    def test_one_probability_is_fully_null(self, stack):
        image, scene, _ = make_scene(17, stack=stack)
        bundle = assemble_conditioning(scene)
        out = apply_dropout(bundle, DropoutConfig(1, 1, 1), np.random.default_rng(0))
        assert out.structure is None and out.appearance is None and out.text is None

    def test_rates_and_coupling(self, stack):
        image, scene, _ = make_scene(18, stack=stack)
        bundle = assemble_conditioning(scene)
        rng = np.random.default_rng(42)
        cfg = DropoutConfig(0.1, 0.1, 0.1)
        n = 2000
        drops = np.zeros(3)
        for _ in range(n):
            out = apply_dropout(bundle, cfg, rng)
            assert not (out.appearance is not None and out.structure is None)
            drops += [out.structure is None, out.appearance is None, out.text is None]
        rates = drops / n
        assert np.all(rates > 0.07) and np.all(rates < 0.13)

    @given(
        p_s=st.floats(0, 1), p_f=st.floats(0, 1), p_y=st.floats(0, 1),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_never_appearance_without_structure(self, p_s, p_f, p_y, seed):
        scene = single_object_scene()
        bundle = assemble_conditioning(scene)
        out = apply_dropout(
            bundle, DropoutConfig(p_s, p_f, p_y), np.random.default_rng(seed)
        )
        assert not (out.appearance is not None and out.structure is None)

    def test_structure_only_combination_reachable(self, stack):
        # with p_appearance > p_structure the model sees (S, null F) batches
        image, scene, _ = make_scene(19, stack=stack)
        bundle = assemble_conditioning(scene)
        rng = np.random.default_rng(3)
        cfg = DropoutConfig(0.1, 0.3, 0.1)
        seen = False
        for _ in range(300):
            out = apply_dropout(bundle, cfg, rng)
            if out.structure is not None and out.appearance is None:
                seen = True
                break
        assert seen


class TestNullEncoding:
    def test_null_structure_zero_grid_flag_zero(self):
        grid, flag = encode_null_structure(8, 8)
        assert grid.shape == (2, 8, 8) and not grid.any() and flag == 0.0

    def test_null_text(self):
        text, flag = encode_null_text()
        assert text == "" and flag == 0.0

    def test_presence_flags_roundtrip(self, stack):
        image, scene, _ = make_scene(20, stack=stack)
        bundle = assemble_conditioning(scene)
        channels = tuple(t.feature_channels for t in bundle.appearance)
        h, w = image.height, image.width

        full = encode_bundle(bundle, h, w, channels)
        assert (full.structure_flag, full.appearance_flag, full.text_flag) == (1, 1, 1)

        for s, f, y in [(1, 0, 0), (0, 0, 1), (0, 0, 0), (1, 1, 0)]:
            variant = ConditioningBundle(
                bundle.structure if s else None,
                bundle.appearance if f else None,
                bundle.text if y else None,
            )
            numeric = encode_bundle(variant, h, w, channels)
            assert (numeric.structure_flag, numeric.appearance_flag, numeric.text_flag) == (s, f, y)
            if not s:
                assert not numeric.structure_channels.any()
            if not f:
                assert not any(b.any() for b in numeric.appearance_channels)
            if not y:
                assert numeric.text == ""

    def test_appearance_requires_structure_at_type_level(self, stack):
        image, scene, _ = make_scene(21, stack=stack)
        bundle = assemble_conditioning(scene)
        with pytest.raises(ValueError):
            ConditioningBundle(None, bundle.appearance, None)


class TestNormInvariant:
    def test_per_position_norm_zero_or_one(self, stack):
        for idx in range(5):
            image, scene, _ = make_scene(30 + idx, stack=stack)
            for eid, layer in scene.objects[0].slots():
                tensor = splat_appearance(scene, eid, layer)
                norms = np.linalg.norm(
                    tensor.appearance_part().astype(np.float64), axis=0
                )
                near_zero = norms < 1e-6
                near_one = np.abs(norms - 1.0) < 1e-6
                assert np.all(near_zero | near_one)
