"""Surface and contract tests for the dataloader binding."""

import copy
import hashlib
import importlib.metadata
import json
import re

import numpy as np
import pytest

from instaboost_binding import BoundImage, augment_one, version
from scene_helpers import blob_record, textured_image


def small_scene(seed=3, width=96, height=72):
    img = textured_image(width, height, seed)
    rec = blob_record(width * 0.4, height * 0.5, min(width, height) * 0.2,
                      seed=seed, ann_id=7, category_id=2)
    return BoundImage.from_array(img), [rec]


# ---------------------------------------------------------------- BoundImage

def test_bound_image_copies_and_roundtrips():
    arr = textured_image(32, 24, 0)
    bi = BoundImage.from_array(arr)
    assert bi.height == 24 and bi.width == 32 and bi.channels == 3
    assert len(bi.pixels) == 24 * 32 * 3
    back = bi.to_array()
    assert np.array_equal(back, arr)
    back[0, 0, 0] ^= 0xFF  # writable copy, original buffer untouched
    assert bi.to_array()[0, 0, 0] == arr[0, 0, 0]


def test_bound_image_accepts_bytearray_and_freezes_it():
    buf = bytearray(textured_image(8, 6, 1).tobytes())
    orig = buf[0]
    bi = BoundImage(height=6, width=8, pixels=buf)
    assert isinstance(bi.pixels, bytes)
    buf[0] = orig ^ 0xFF
    assert bi.pixels[0] == orig


def test_bound_image_rejects_bad_shape_and_buffer():
    good = bytes(6 * 8 * 3)
    with pytest.raises(ValueError, match="channels"):
        BoundImage(height=6, width=8, channels=4, pixels=bytes(6 * 8 * 4))
    with pytest.raises(ValueError, match="144"):
        BoundImage(height=6, width=8, pixels=good[:-1])
    with pytest.raises(ValueError):
        BoundImage(height=0, width=8, pixels=b"")
    with pytest.raises(ValueError, match="bytes-like"):
        BoundImage(height=6, width=8, pixels=42)
    with pytest.raises(ValueError, match="HxWx3"):
        BoundImage.from_array(np.zeros((6, 8), dtype=np.uint8))


# ------------------------------------------------------------------- version

def test_version_is_semver_and_matches_pipeline():
    v = version()
    assert re.fullmatch(r"\d+\.\d+\.\d+", v)
    assert v == importlib.metadata.version("instaboost")
    assert version() == v


# ------------------------------------------------------------- input checks

def test_rejects_non_bound_image_and_bad_config():
    bi, recs = small_scene()
    with pytest.raises(ValueError, match="BoundImage"):
        augment_one(bi.to_array(), recs, {}, seed=0)
    with pytest.raises(ValueError, match="mapping"):
        augment_one(bi, recs, [("seed", 1)], seed=0)
    with pytest.raises(ValueError, match="list of records"):
        augment_one(bi, recs[0], {}, seed=0)


def test_record_missing_field_is_named():
    bi, recs = small_scene()
    broken = dict(recs[0])
    del broken["bbox"]
    with pytest.raises(ValueError, match="missing field 'bbox'"):
        augment_one(bi, [broken], {}, seed=0)


def test_unknown_config_key_raises_value_error_naming_it():
    bi, recs = small_scene()
    with pytest.raises(ValueError, match="frobnicate"):
        augment_one(bi, recs, {"frobnicate": 1}, seed=0)
    with pytest.raises(ValueError, match=r"jitter\.wobble"):
        augment_one(bi, recs, {"jitter.wobble": 0.5}, seed=0)


def test_pipeline_failure_carries_primary_error_name():
    bi, recs = small_scene()
    twin = copy.deepcopy(recs[0])  # same id twice
    with pytest.raises(RuntimeError, match="MalformedDocument"):
        augment_one(bi, recs + [twin], {}, seed=0)


# ------------------------------------------------------------------- no-ops

def test_apply_probability_zero_returns_byte_equal_buffer():
    bi, recs = small_scene(seed=11)
    out_img, out_anns, prov = augment_one(bi, recs, {"apply_probability": 0.0}, seed=4)
    assert out_img.pixels == bi.pixels
    assert out_img.pixels is not bi.pixels
    assert prov == {"applied": False, "instances": []}
    assert len(out_anns) == 1
    for key in ("category_id", "bbox", "area", "segmentation"):
        assert out_anns[0][key] == recs[0][key]


def test_sequential_ids_assigned_when_caller_omits_them():
    bi, _ = small_scene(seed=2)
    recs = [
        blob_record(30, 30, 10, seed=2, category_id=1),
        blob_record(66, 40, 10, seed=9, category_id=1),
    ]
    _, out_anns, _ = augment_one(bi, recs, {"apply_probability": 0.0}, seed=0)
    assert [a["id"] for a in out_anns] == [1, 2]


# --------------------------------------------------------------- provenance

def test_provenance_reports_moves_with_new_ids():
    bi, recs = small_scene(seed=5)
    cfg = {"apply_probability": 1.0, "mode": "map_guided"}
    out_img, out_anns, prov = augment_one(bi, recs, cfg, seed=5)
    assert prov["applied"] is True
    assert len(prov["instances"]) == 1
    inst = prov["instances"][0]
    assert inst["id"] == 7
    if inst["moved"]:
        assert inst["new_id"] != 7
        assert {"translation", "scale", "rotation"} <= set(inst)
        assert any(a["id"] == inst["new_id"] for a in out_anns)
    else:
        assert "failure" in inst
    assert out_img.pixels != bi.pixels


def test_explicit_seed_argument_beats_config_seed():
    bi, recs = small_scene(seed=8)
    cfg = {"apply_probability": 1.0}
    ref, _, _ = augment_one(bi, recs, cfg, seed=6)
    mixed, _, _ = augment_one(bi, recs, {**cfg, "seed": 99}, seed=6)
    assert mixed.pixels == ref.pixels


# ----------------------------------------------------------------- mutation

def test_inputs_never_mutated():
    arr = textured_image(96, 72, 13)
    before_pixels = hashlib.sha256(arr.tobytes()).hexdigest()
    recs = [blob_record(40, 36, 14, seed=13, ann_id=3)]
    cfg = {"apply_probability": 1.0, "mode": "map_guided", "jitter.scale_range": [0.9, 1.1]}
    recs_snapshot = copy.deepcopy(recs)
    cfg_snapshot = copy.deepcopy(cfg)

    bi = BoundImage.from_array(arr)
    out_img, out_anns, _ = augment_one(bi, recs, cfg, seed=21)

    assert hashlib.sha256(arr.tobytes()).hexdigest() == before_pixels
    assert recs == recs_snapshot
    assert cfg == cfg_snapshot
    # outputs are fresh objects, not views of the inputs
    assert out_img is not bi and out_img.pixels is not bi.pixels
    assert all(out is not rec for out in out_anns for rec in recs)
