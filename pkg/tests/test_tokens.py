import numpy as np
import pytest

from revealtoy.images import BoundingBox, LayeredScene, RgbaImage, composite_layers
from revealtoy.tensor import Tensor
from revealtoy.tokens import (
    apply_rope,
    build_layout,
    build_sequence,
    patchify,
    rope_tables,
    token_crop_indices,
    unpatchify,
)


def random_image(rng, h, w):
    return RgbaImage(rng.uniform(-1, 1, (h, w, 4)).astype(np.float32))


class TestPatchify:
    def test_counts_and_round_trip(self):
        rng = np.random.default_rng(30)
        img = random_image(rng, 4, 4)
        tok = patchify(img, 2)
        assert tok.shape == (4, 16)
        np.testing.assert_array_equal(unpatchify(tok, 4, 2).data, img.data)

    def test_p1_tokens_are_pixels(self):
        rng = np.random.default_rng(31)
        img = random_image(rng, 3, 3)
        tok = patchify(img, 1)
        np.testing.assert_array_equal(tok.reshape(3, 3, 4), img.data)

    def test_channel_layout(self):
        img = RgbaImage.transparent(4, 4)
        img.data[1, 2, 1] = 0.25  # patch (0,1), dy=1, dx=0, channel 1
        tok = patchify(img, 2)
        assert tok[1, (1 * 2 + 0) * 4 + 1] == np.float32(0.25)

    def test_crop_commutes_with_patchify(self):
        rng = np.random.default_rng(32)
        img = random_image(rng, 8, 8)
        box = BoundingBox(2, 4, 4, 4)
        cropped = RgbaImage(img.data[box.y:box.y + box.h, box.x:box.x + box.w])
        direct = patchify(cropped, 2)
        selected = patchify(img, 2)[token_crop_indices(box, 8, 2)]
        np.testing.assert_array_equal(direct, selected)

    def test_indivisible_rejected(self):
        with pytest.raises(ValueError):
            patchify(RgbaImage.transparent(5, 4), 2)
        with pytest.raises(ValueError):
            token_crop_indices(BoundingBox(1, 0, 4, 4), 8, 2)


def layout_position_oracle(canvas, boxes, p, k_text):
    """Enumerate expected (layer, y, x) triples segment by segment."""
    g = canvas // p
    rows = [(0, 0, i) for i in range(k_text)]
    for layer in (1, 2):
        rows += [(layer, y, x) for y in range(g) for x in range(g)]
    for i, b in enumerate(boxes):
        rows += [(3 + i, y, x)
                 for y in range(b.y // p, (b.y + b.h) // p)
                 for x in range(b.x // p, (b.x + b.w) // p)]
    return np.array(rows, dtype=np.int32)


class TestLayout:
    def test_token_count(self):
        layout = build_layout(8, [BoundingBox(2, 2, 4, 4)], 2, 4)
        assert layout.L == 4 + 16 + 16 + 4
        assert layout.token_dim == 16

    def test_no_boxes_rejected(self):
        with pytest.raises(ValueError):
            build_layout(8, [], 2, 4)

    def test_segments_partition_in_order(self):
        boxes = [BoundingBox(0, 0, 4, 4), BoundingBox(4, 2, 4, 6)]
        layout = build_layout(8, boxes, 2, 4)
        roles = [(s.role, s.index) for s in layout.segments]
        assert roles == [("TEXT", -1), ("COND", -1), ("BG", -1), ("FG", 0), ("FG", 1)]
        cursor = 0
        for seg in layout.segments:
            assert seg.start == cursor
            cursor = seg.stop
        assert cursor == layout.L == len(layout.positions)

    def test_positions_match_enumeration_oracle(self):
        boxes = [BoundingBox(0, 2, 6, 4), BoundingBox(4, 4, 4, 4)]
        layout = build_layout(8, boxes, 2, 3)
        np.testing.assert_array_equal(
            layout.positions, layout_position_oracle(8, boxes, 2, 3))

    def test_fg_positions_align_with_cond(self):
        boxes = [BoundingBox(4, 0, 4, 8)]
        layout = build_layout(8, boxes, 2, 4)
        cond = layout.segment("COND")
        fg = layout.segment("FG", 0)
        cond_yx = {tuple(p[1:]) for p in layout.positions[cond.sl]}
        for pos in layout.positions[fg.sl]:
            assert tuple(pos[1:]) in cond_yx

    def test_unsnapped_box_rejected(self):
        with pytest.raises(ValueError):
            build_layout(8, [BoundingBox(1, 0, 4, 4)], 2, 4)


class TestBuildSequence:
    def test_segment_data_contents(self):
        rng = np.random.default_rng(33)
        bg = RgbaImage.opaque(rng.uniform(-1, 1, (8, 8, 3)).astype(np.float32))
        fg = RgbaImage.transparent(8, 8)
        fg.data[2:6, 2:6] = [0.6, -0.2, 0.1, 1.0]
        box = BoundingBox(2, 2, 4, 4)
        scene = LayeredScene(composite_layers(bg, [fg]), bg, (fg,), (box,))
        layout, data = build_sequence(scene, 2, 4)

        assert data["COND"].shape == (16, 16)
        np.testing.assert_array_equal(data["BG"], patchify(bg, 2))
        assert data["FG0"].shape == (4, 16)
        # Inside the box the foreground is opaque, so gray conversion is the
        # identity there and the crop equals the raw pixel values.
        np.testing.assert_allclose(
            unpatchify_crop(data["FG0"], box, 2), fg.data[2:6, 2:6], atol=1e-7)

    def test_cond_is_composite(self):
        rng = np.random.default_rng(34)
        bg = RgbaImage.opaque(rng.uniform(-1, 1, (8, 8, 3)).astype(np.float32))
        fg = RgbaImage.transparent(8, 8)
        fg.data[0:4, 0:4] = [0.3, 0.3, 0.3, 0.5]
        comp = composite_layers(bg, [fg])
        scene = LayeredScene(comp, bg, (fg,), (BoundingBox(0, 0, 4, 4),))
        _, data = build_sequence(scene, 2, 4)
        np.testing.assert_array_equal(data["COND"], patchify(comp, 2))


def unpatchify_crop(tokens, box, p):
    gh, gw = box.h // p, box.w // p
    arr = tokens.reshape(gh, gw, p, p, 4).transpose(0, 2, 1, 3, 4)
    return arr.reshape(box.h, box.w, 4)


class TestRope:
    def test_zero_position_is_identity(self):
        rng = np.random.default_rng(35)
        x = Tensor(rng.standard_normal((1, 12)).astype(np.float32))
        out = apply_rope(x, np.zeros((1, 3), dtype=np.int32), (4, 4, 4))
        np.testing.assert_allclose(out.data, x.data, atol=1e-7)

    def test_norm_preserved(self):
        rng = np.random.default_rng(36)
        x = Tensor(rng.standard_normal((10, 12)).astype(np.float32))
        pos = rng.integers(0, 16, (10, 3)).astype(np.int32)
        out = apply_rope(x, pos, (4, 4, 4))
        np.testing.assert_allclose(
            np.linalg.norm(out.data, axis=-1),
            np.linalg.norm(x.data, axis=-1), atol=1e-5)

    def test_dot_product_is_relative(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            q = Tensor(rng.standard_normal((1, 12)))
            k = Tensor(rng.standard_normal((1, 12)))
            a = rng.integers(0, 8, (1, 3))
            b = rng.integers(0, 8, (1, 3))
            shift = rng.integers(0, 8, (1, 3))
            dot1 = (apply_rope(q, a, (4, 4, 4)).data
                    @ apply_rope(k, b, (4, 4, 4)).data.T).item()
            dot2 = (apply_rope(q, a + shift, (4, 4, 4)).data
                    @ apply_rope(k, b + shift, (4, 4, 4)).data.T).item()
            assert abs(dot1 - dot2) < 1e-6

    def test_bad_split_rejected(self):
        with pytest.raises(ValueError):
            rope_tables(np.zeros((1, 3), dtype=np.int32), (3, 4, 5))
