"""Placement tuples, jitter sampling, and patch warping."""

import math

import cv2
import numpy as np
import pytest

import oracles
from conftest import ann_entry, blob_poly, textured_image
from instaboost import rle
from instaboost.annotations import parse_document
from instaboost.errors import EmptyResult, FullyClipped
from instaboost.maskops import AlphaInstancePatch, cut_instance, mask_to_bbox, rasterize
from instaboost.transform import (
    IDENTITY,
    AffineTuple,
    JitterConfig,
    affine_matrix,
    sample_jitter,
    transform_annotation,
    warp_patch,
)

W, H = 96, 80


def make_ann(poly):
    doc = {
        "images": [{"id": 1, "file_name": "x.png", "width": W, "height": H}],
        "annotations": [ann_entry(1, 1, poly)],
        "categories": [{"id": 1, "name": "thing"}],
    }
    return parse_document(doc).annotations[0]


def make_patch(seed=0, radius=11.0, feather=3):
    image = textured_image(W, H, seed=seed)
    ann = make_ann(blob_poly(46, 40, radius, seed=seed))
    patch, _ = cut_instance(image, ann, feather_radius=feather)
    return patch, ann, rasterize(ann, W, H)


def full_alpha(patch, width=W, height=H):
    out = np.zeros((height, width), dtype=np.float32)
    ox, oy = patch.origin
    ph, pw = patch.rgba.shape[:2]
    out[oy:oy + ph, ox:ox + pw] = patch.alpha
    return out


# --- matrix -------------------------------------------------------------


def test_matrix_identity():
    assert np.array_equal(affine_matrix(IDENTITY), np.eye(3))


def test_matrix_pure_translation():
    m = affine_matrix(AffineTuple(4.0, -2.5, 1.0, 0.0))
    want = np.array([[1, 0, 4.0], [0, 1, -2.5], [0, 0, 1]], dtype=float)
    assert np.allclose(m, want, atol=1e-12)


def test_matrix_quarter_turn_double_scale():
    m = affine_matrix(AffineTuple(0.0, 0.0, 2.0, 90.0))
    want = np.array([[0, 2, 0], [-2, 0, 0], [0, 0, 1]], dtype=float)
    assert np.allclose(m, want, atol=1e-9)


def test_matrix_rotation_block_composes():
    a = affine_matrix(AffineTuple(0, 0, 1.1, 3.0))
    b = affine_matrix(AffineTuple(0, 0, 0.9, -7.5))
    combined = affine_matrix(AffineTuple(0, 0, 1.1 * 0.9, 3.0 - 7.5))
    assert np.allclose((a @ b)[:2, :2], combined[:2, :2], atol=1e-9)


@pytest.mark.parametrize("s", [0.8, 1.0, 1.37])
def test_matrix_determinant_is_scale_squared(s):
    m = affine_matrix(AffineTuple(1.0, 2.0, s, 4.0))
    assert np.linalg.det(m[:2, :2]) == pytest.approx(s * s, rel=1e-12)


def test_tuple_validation():
    with pytest.raises(ValueError):
        AffineTuple(0, 0, 0.0, 0)
    with pytest.raises(ValueError):
        AffineTuple(0, 0, -1.0, 0)
    with pytest.raises(ValueError):
        AffineTuple(float("nan"), 0, 1.0, 0)


def test_jitter_config_validation():
    with pytest.raises(ValueError):
        JitterConfig(translation_ratio=-0.1)
    with pytest.raises(ValueError):
        JitterConfig(scale_range=(1.2, 0.8))
    with pytest.raises(ValueError):
        JitterConfig(scale_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        JitterConfig(rotation_range_deg=(5.0, -5.0))


# --- jitter sampling ----------------------------------------------------


def test_jitter_degenerate_config_is_identity():
    cfg = JitterConfig(translation_ratio=0.0, scale_range=(1.0, 1.0), rotation_range_deg=(0.0, 0.0))
    t = sample_jitter(np.random.default_rng(0), 150, 90, cfg)
    assert t == IDENTITY


def test_jitter_bounds_150x90():
    rng = np.random.default_rng(1)
    cfg = JitterConfig()
    for _ in range(2000):
        t = sample_jitter(rng, 150, 90, cfg)
        assert -10.0 <= t.t_x <= 10.0
        assert -6.0 <= t.t_y <= 6.0
        assert 0.8 <= t.s <= 1.2
        assert -5.0 <= t.r <= 5.0


def test_jitter_draw_order_pinned():
    # t_x, t_y, s, r in that order, one uniform each
    t = sample_jitter(np.random.default_rng(7), 150, 90, JitterConfig())
    ref = np.random.default_rng(7)
    assert t.t_x == ref.uniform(-10, 10)
    assert t.t_y == ref.uniform(-6, 6)
    assert t.s == ref.uniform(0.8, 1.2)
    assert t.r == ref.uniform(-5.0, 5.0)


def test_jitter_distribution_uniform():
    rng = np.random.default_rng(2)
    cfg = JitterConfig()
    n = 100_000
    draws = np.array([sample_jitter(rng, 150, 90, cfg).s for _ in range(n)])
    assert draws.mean() == pytest.approx(1.0, abs=0.01)
    # KS distance of the empirical CDF against uniform on [0.8, 1.2]
    xs = np.sort(draws)
    cdf = (xs - 0.8) / 0.4
    emp = np.arange(1, n + 1) / n
    ks = max(np.abs(emp - cdf).max(), np.abs(emp - 1 / n - cdf).max())
    assert ks < 0.01


def test_jitter_rejects_degenerate_object():
    with pytest.raises(ValueError):
        sample_jitter(np.random.default_rng(0), 0, 90, JitterConfig())


# --- warp_patch ---------------------------------------------------------


def test_warp_identity_is_exact():
    patch, _, mask = make_patch(seed=0)
    warped = warp_patch(patch, IDENTITY, W, H)
    assert np.array_equal(full_alpha(warped), full_alpha(patch))
    assert warped.center == patch.center
    # colors exact wherever visible
    ga = full_alpha(patch)
    rgb_in = np.zeros((H, W, 3), dtype=np.float32)
    ox, oy = patch.origin
    ph, pw = patch.rgba.shape[:2]
    rgb_in[oy:oy + ph, ox:ox + pw] = patch.rgba[:, :, :3]
    rgb_out = np.zeros_like(rgb_in)
    ox2, oy2 = warped.origin
    ph2, pw2 = warped.rgba.shape[:2]
    rgb_out[oy2:oy2 + ph2, ox2:ox2 + pw2] = warped.rgba[:, :, :3]
    assert np.array_equal(rgb_out[ga > 0], rgb_in[ga > 0])


def test_warp_integer_translation_shifts_exactly():
    patch, _, _ = make_patch(seed=1)
    t = AffineTuple(5.0, -3.0, 1.0, 0.0)
    warped = warp_patch(patch, t, W, H)
    src = full_alpha(patch)
    dst = full_alpha(warped)
    shifted = np.zeros_like(src)
    shifted[:H - 3, 5:] = src[3:, :W - 5]
    assert np.array_equal(dst, shifted)
    assert warped.center == (patch.center[0] + 5.0, patch.center[1] - 3.0)


def test_warp_double_scale_quadruples_area():
    patch, _, _ = make_patch(seed=2, radius=8.0)
    base = float((full_alpha(patch) > 0.5).sum())
    warped = warp_patch(patch, AffineTuple(0, 0, 2.0, 0.0), W, H)
    grown = float((full_alpha(warped) > 0.5).sum())
    assert 3.8 * base <= grown <= 4.2 * base


def test_warp_fully_clipped():
    patch, _, _ = make_patch(seed=3)
    with pytest.raises(FullyClipped):
        warp_patch(patch, AffineTuple(500.0, 0.0, 1.0, 0.0), W, H)


def test_warp_partial_clip_keeps_inside_part():
    patch, _, _ = make_patch(seed=4)
    shift = W - 2 - patch.center[0]  # center lands 2 px from the right edge
    warped = warp_patch(patch, AffineTuple(shift, 0.0, 1.0, 0.0), W, H)
    assert warped.origin[0] + warped.rgba.shape[1] <= W
    assert (warped.alpha > 0).any()


# --- transform_annotation ------------------------------------------------


def test_annotation_identity_roundtrip():
    patch, ann, mask = make_patch(seed=5)
    warped = warp_patch(patch, IDENTITY, W, H)
    new = transform_annotation(ann, warped, W, H, new_id=99)
    got = rle.decode(new.segmentation)
    assert oracles.iou(got, mask) == pytest.approx(1.0)
    assert new.id == 99
    assert new.image_id == ann.image_id
    assert new.category_id == ann.category_id
    assert new.iscrowd == 0
    assert new.area == float(mask.sum())


def test_annotation_translation_moves_bbox():
    patch, ann, mask = make_patch(seed=6)
    warped = warp_patch(patch, AffineTuple(7.0, 4.0, 1.0, 0.0), W, H)
    new = transform_annotation(ann, warped, W, H, new_id=2)
    x, y, bw, bh = mask_to_bbox(mask)  # pixel-space baseline, not the polygon bbox
    assert new.bbox == (x + 7, y + 4, bw, bh)
    assert new.area == float(mask.sum())


def test_annotation_scale_shrinks_area():
    patch, ann, mask = make_patch(seed=7)
    warped = warp_patch(patch, AffineTuple(0, 0, 0.8, 0.0), W, H)
    new = transform_annotation(ann, warped, W, H, new_id=2)
    ratio = new.area / float(mask.sum())
    assert 0.55 <= ratio <= 0.75  # 0.8^2 = 0.64 up to resampling


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
def test_annotation_agrees_with_reference_warp(seed):
    # independent path: warp the binary mask with cv2 under the same pivot
    rng = np.random.default_rng(seed)
    patch, ann, mask = make_patch(seed=seed)
    t = AffineTuple(
        float(rng.uniform(-6, 6)),
        float(rng.uniform(-4, 4)),
        float(rng.uniform(0.8, 1.2)),
        float(rng.uniform(-5, 5)),
    )
    warped = warp_patch(patch, t, W, H)
    new = transform_annotation(ann, warped, W, H, new_id=2)
    got = rle.decode(new.segmentation)

    rad = math.radians(t.r)
    a = t.s * math.cos(rad)
    b = t.s * math.sin(rad)
    cx, cy = patch.center
    m = np.array(
        [
            [a, b, cx + t.t_x - a * cx - b * cy],
            [-b, a, cy + t.t_y + b * cx - a * cy],
        ]
    )
    ref = cv2.warpAffine(mask.astype(np.float32), m, (W, H), flags=cv2.INTER_LINEAR) > 0.5
    assert oracles.iou(got, ref) >= 0.9


def test_annotation_empty_result():
    patch, ann, _ = make_patch(seed=8)
    faint = AlphaInstancePatch(
        rgba=np.concatenate(
            [patch.rgba[:, :, :3], np.full_like(patch.rgba[:, :, :1], 0.2)], axis=-1
        ),
        origin=patch.origin,
        center=patch.center,
        source_annotation_id=patch.source_annotation_id,
    )
    with pytest.raises(EmptyResult):
        transform_annotation(ann, faint, W, H, new_id=2)


def test_annotation_preserves_extra_fields():
    doc = {
        "images": [{"id": 1, "file_name": "x.png", "width": W, "height": H}],
        "annotations": [
            dict(ann_entry(1, 1, blob_poly(46, 40, 11, seed=9)), score=0.75, tag="keep")
        ],
        "categories": [{"id": 1, "name": "thing"}],
    }
    ann = parse_document(doc).annotations[0]
    image = textured_image(W, H, seed=9)
    patch, _ = cut_instance(image, ann, feather_radius=3)
    warped = warp_patch(patch, IDENTITY, W, H)
    new = transform_annotation(ann, warped, W, H, new_id=5)
    assert new.extra == {"score": 0.75, "tag": "keep"}
