import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

import segedit as se
from segedit.image import (
    ImageIOError,
    LabelMapError,
    MaskError,
    background_mask,
    erode,
    inner_boundary,
    quantize_to_bytes,
)
from helpers import brute_force_dilate, brute_force_disk_count


def write_png(path, array, mode):
    Image.fromarray(array, mode=mode).save(path, format="PNG")


# --- load_image / save_image ---------------------------------------------------


def test_load_scales_bytes(tmp_path):
    p = tmp_path / "px.png"
    write_png(p, np.array([[[255, 0, 0]]], dtype=np.uint8), "RGB")
    img = se.load_image(p)
    assert img.data.tolist() == [[[1.0, 0.0, 0.0]]]


def test_load_zero_image(tmp_path):
    p = tmp_path / "z.png"
    write_png(p, np.zeros((2, 2, 3), dtype=np.uint8), "RGB")
    assert not se.load_image(p).data.any()


def test_load_grayscale_replicates(tmp_path):
    p = tmp_path / "g.png"
    write_png(p, np.array([[51, 102]], dtype=np.uint8), "L")
    img = se.load_image(p)
    assert img.data.shape == (1, 2, 3)
    assert np.allclose(img.data[0, 0], 51 / 255)
    assert (img.data == img.data[:, :, :1]).all()


def test_load_unreadable_file(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"not a png")
    with pytest.raises(ImageIOError):
        se.load_image(p)


def test_load_unsupported_bit_depth(tmp_path):
    p = tmp_path / "deep.png"
    arr = np.ones((2, 2), dtype=np.uint16) * 40000
    Image.fromarray(arr).save(p, format="PNG", bits=16)
    with pytest.raises(ImageIOError):
        se.load_image(p)


def test_quantization_rule():
    # round-half-up after clamping
    assert quantize_to_bytes(np.array([[[0.5, 0.5, 0.5]]]))[0, 0, 0] == 128
    assert quantize_to_bytes(np.array([[[1.2, 0.0, 0.0]]]))[0, 0, 0] == 255
    assert quantize_to_bytes(np.array([[[-0.1, 0.0, 0.0]]]))[0, 0, 0] == 0


def test_save_load_save_byte_stable(tmp_path):
    rng = np.random.default_rng(16)
    img = se.ImageBuffer(rng.random((16, 16, 3)))
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    se.save_image(img, p1)
    loaded = se.load_image(p1)
    se.save_image(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.allclose(loaded.data, quantize_to_bytes(img.data) / 255.0)


def test_image_buffer_validation():
    with pytest.raises(ValueError):
        se.ImageBuffer(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        se.ImageBuffer(np.full((2, 2, 3), 1.5))
    with pytest.raises(ValueError):
        se.ImageBuffer(np.full((2, 2, 3), np.nan))


# --- label maps -----------------------------------------------------------------


def test_label_map_uniform(tmp_path):
    p = tmp_path / "lab.png"
    write_png(p, np.ones((4, 4), dtype=np.uint8), "L")
    lm = se.load_label_map(p, (4, 4))
    assert lm.segment_count == 1
    assert (lm.labels == 1).all()


def test_label_map_non_contiguous(tmp_path):
    p = tmp_path / "lab.png"
    arr = np.zeros((2, 2), dtype=np.uint8)
    arr[0, 0] = 1
    arr[1, 1] = 3
    write_png(p, arr, "L")
    with pytest.raises(LabelMapError, match="non-contiguous"):
        se.load_label_map(p, (2, 2))


def test_label_map_eleven_segments(tmp_path):
    # eleven stripes, one per segment id
    arr = np.repeat(np.arange(1, 12, dtype=np.uint8)[:, None], 11, axis=1)
    p = tmp_path / "lab.png"
    write_png(p, arr, "L")
    assert se.load_label_map(p, (11, 11)).segment_count == 11


def test_label_map_dim_mismatch(tmp_path):
    p = tmp_path / "lab.png"
    write_png(p, np.ones((4, 4), dtype=np.uint8), "L")
    with pytest.raises(LabelMapError, match="dims"):
        se.load_label_map(p, (8, 8))


def test_label_map_round_trip(tmp_path):
    lm = se.LabelMap(np.array([[0, 1], [2, 1]], dtype=np.int32))
    p = tmp_path / "lab.png"
    se.save_label_map(lm, p)
    again = se.load_label_map(p, (2, 2))
    assert np.array_equal(again.labels, lm.labels)


# --- masks ----------------------------------------------------------------------


def test_mask_of_uniform():
    lm = se.LabelMap(np.ones((3, 3), dtype=np.int32))
    assert se.mask_of(lm, 1).pixel_count == 9
    with pytest.raises(MaskError):
        se.mask_of(lm, 2)


def test_mask_of_checkerboard():
    yy, xx = np.mgrid[0:4, 0:4]
    lm = se.LabelMap(((yy + xx) % 2 + 1).astype(np.int32))
    m1, m2 = se.mask_of(lm, 1), se.mask_of(lm, 2)
    assert m1.pixel_count == 8 and m2.pixel_count == 8
    assert not (m1.bits & m2.bits).any()
    assert (m1.bits | m2.bits).all()


def test_mask_partition_with_background():
    lm = se.LabelMap(np.array([[0, 1, 1], [2, 2, 0], [1, 2, 1]], dtype=np.int32))
    masks = [background_mask(lm)] + [se.mask_of(lm, k) for k in (1, 2)]
    union = np.zeros((3, 3), dtype=bool)
    for a in masks:
        assert not (union & a.bits).any()
        union |= a.bits
    assert union.all()


# --- dilation -------------------------------------------------------------------


def test_dilate_radius_zero_identity():
    m = se.BinaryMask(np.eye(5, dtype=bool))
    assert se.dilate(m, 0) is m


def test_dilate_single_pixel_radius1():
    bits = np.zeros((7, 7), dtype=bool)
    bits[3, 3] = True
    out = se.dilate(se.BinaryMask(bits), 1)
    assert out.pixel_count == 5  # plus-shape: diagonals are sqrt(2) > 1 away


def test_dilate_single_pixel_radius2_matches_brute_force():
    bits = np.zeros((9, 9), dtype=bool)
    bits[4, 4] = True
    out = se.dilate(se.BinaryMask(bits), 2)
    assert out.pixel_count == brute_force_disk_count(2) == 13
    assert np.array_equal(out.bits, brute_force_dilate(bits, 2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.integers(0, 3))
def test_dilate_monotone(seed, r1, extra):
    rng = np.random.default_rng(seed)
    bits = rng.random((12, 12)) < 0.2
    m = se.BinaryMask(bits)
    r2 = r1 + extra
    d1, d2 = se.dilate(m, r1), se.dilate(m, r2)
    assert (bits <= d1.bits).all()
    assert (d1.bits <= d2.bits).all()
    assert np.array_equal(d1.bits, brute_force_dilate(bits, r1))


def test_erode_inverts_dilate_on_disk():
    bits = np.zeros((11, 11), dtype=bool)
    bits[5, 5] = True
    grown = se.dilate(se.BinaryMask(bits), 3)
    assert erode(grown, 0) is grown
    shrunk = erode(grown, 1)
    assert shrunk.pixel_count < grown.pixel_count
    assert (shrunk.bits <= grown.bits).all()


def test_inner_boundary_ignores_image_frame():
    bits = np.zeros((4, 6), dtype=bool)
    bits[:, :3] = True  # strip touching three image edges
    b = inner_boundary(se.BinaryMask(bits))
    assert np.array_equal(np.unique(np.nonzero(b.bits)[1]), [2])


# --- compose --------------------------------------------------------------------


def _rand_image(rng, shape):
    return se.ImageBuffer(rng.random((*shape, 3)))


def test_compose_identity():
    rng = np.random.default_rng(0)
    lm = se.LabelMap(np.array([[1, 2], [2, 1]], dtype=np.int32))
    orig = _rand_image(rng, (2, 2))
    out = se.compose([(1, orig), (2, orig)], lm, orig)
    assert np.array_equal(out.data, orig.data)


def test_compose_all_background():
    rng = np.random.default_rng(1)
    lm = se.LabelMap(np.zeros((3, 3), dtype=np.int32))
    orig = _rand_image(rng, (3, 3))
    assert np.array_equal(se.compose([], lm, orig).data, orig.data)


def test_compose_black_white_partition():
    lm = se.LabelMap(np.array([[1, 1, 2], [2, 1, 2]], dtype=np.int32))
    black = se.ImageBuffer(np.zeros((2, 3, 3)))
    white = se.ImageBuffer(np.ones((2, 3, 3)))
    orig = se.ImageBuffer(np.full((2, 3, 3), 0.5))
    out = se.compose([(1, black), (2, white)], lm, orig)
    for y in range(2):
        for x in range(3):
            expected = 0.0 if lm.labels[y, x] == 1 else 1.0
            assert (out.data[y, x] == expected).all()


def test_compose_preserves_background_and_idempotent():
    rng = np.random.default_rng(2)
    lab = rng.integers(0, 3, size=(6, 6)).astype(np.int32)
    lab[0, 0], lab[0, 1] = 1, 2  # both labels present
    lm = se.LabelMap(lab)
    orig = _rand_image(rng, (6, 6))
    pieces = [(1, _rand_image(rng, (6, 6))), (2, _rand_image(rng, (6, 6)))]
    out1 = se.compose(pieces, lm, orig)
    out2 = se.compose(pieces, lm, orig)
    assert np.array_equal(out1.data, out2.data)
    bg = lm.labels == 0
    assert np.array_equal(out1.data[bg], orig.data[bg])


def test_compose_rejects_bad_piece_sets():
    lm = se.LabelMap(np.array([[1, 2]], dtype=np.int32))
    img = se.ImageBuffer(np.zeros((1, 2, 3)))
    with pytest.raises(ValueError):
        se.compose([(1, img)], lm, img)
    with pytest.raises(ValueError):
        se.compose([(1, img), (1, img)], lm, img)
