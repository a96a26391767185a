"""Diffusion hole-filling behavior: harmonic limits, range bounds, convergence."""

import numpy as np
import pytest

from instaboost.errors import EmptyMask, HoleCoversImage
from instaboost.inpaint import InpaintConfig, InpaintResult, inpaint


def checker_image(width=48, height=40, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


def center_hole(width=48, height=40, side=10):
    hole = np.zeros((height, width), dtype=bool)
    y0 = (height - side) // 2
    x0 = (width - side) // 2
    hole[y0:y0 + side, x0:x0 + side] = True
    return hole


def test_uniform_image_stays_uniform():
    image = np.full((40, 48, 3), (77, 130, 9), dtype=np.uint8)
    res = inpaint(image, center_hole())
    assert np.array_equal(res.image, image)
    assert res.converged


def test_single_pixel_hole_is_mean_of_neighbors():
    image = np.zeros((16, 16, 3), dtype=np.uint8)
    image[4, 5] = 10
    image[6, 5] = 20
    image[5, 4] = 30
    image[5, 6] = 40
    hole = np.zeros((16, 16), dtype=bool)
    hole[5, 5] = True
    res = inpaint(image, hole)
    assert tuple(res.image[5, 5]) == (25, 25, 25)


def test_linear_ramp_is_reproduced():
    # harmonic filling must reproduce a plane up to rounding/tolerance
    width, height = 64, 48
    ramp = np.tile((np.arange(width) * 2).astype(np.uint8), (height, 1))
    image = np.stack([ramp, ramp[:, ::-1], np.full_like(ramp, 60)], axis=-1)
    hole = center_hole(width, height, side=14)
    res = inpaint(image, hole)
    diff = np.abs(res.image.astype(np.int32) - image.astype(np.int32))
    assert diff[hole].max() <= 2
    assert diff[~hole].max() == 0


def test_pixels_outside_hole_untouched():
    image = checker_image()
    hole = center_hole()
    res = inpaint(image, hole)
    assert np.array_equal(res.image[~hole], image[~hole])


def test_input_not_mutated():
    image = checker_image(seed=3)
    before = image.copy()
    inpaint(image, center_hole())
    assert np.array_equal(image, before)


def test_fill_respects_boundary_range():
    image = checker_image(seed=1)
    hole = center_hole(side=12)
    res = inpaint(image, hole)
    # 4-neighbor shell of known pixels around the hole
    grown = np.zeros_like(hole)
    grown[1:, :] |= hole[:-1, :]
    grown[:-1, :] |= hole[1:, :]
    grown[:, 1:] |= hole[:, :-1]
    grown[:, :-1] |= hole[:, 1:]
    boundary = grown & ~hole
    for c in range(3):
        lo = int(image[:, :, c][boundary].min())
        hi = int(image[:, :, c][boundary].max())
        assert res.image[:, :, c][hole].min() >= lo
        assert res.image[:, :, c][hole].max() <= hi


def test_change_history_monotone_nonincreasing():
    image = checker_image(seed=2)
    res = inpaint(image, center_hole(side=16))
    hist = np.asarray(res.change_history)
    assert len(hist) == res.iterations
    assert (np.diff(hist) <= 1e-12).all()
    assert res.final_change == pytest.approx(hist[-1])


def test_nonconvergence_reported():
    image = checker_image(seed=4)
    cfg = InpaintConfig(max_iterations=2, convergence_epsilon=1e-9)
    res = inpaint(image, center_hole(side=20), cfg)
    assert not res.converged
    assert res.iterations == 2
    assert len(res.change_history) == 2


def test_deterministic():
    image = checker_image(seed=5)
    hole = center_hole(side=18)
    a = inpaint(image, hole)
    b = inpaint(image, hole)
    assert np.array_equal(a.image, b.image)
    assert a.iterations == b.iterations
    assert a.change_history == b.change_history


def test_empty_hole_raises():
    with pytest.raises(EmptyMask):
        inpaint(checker_image(), np.zeros((40, 48), dtype=bool))


def test_full_hole_raises():
    with pytest.raises(HoleCoversImage):
        inpaint(checker_image(), np.ones((40, 48), dtype=bool))


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        inpaint(checker_image(), center_hole(width=32, height=32))


def test_config_validation():
    with pytest.raises(ValueError):
        InpaintConfig(max_iterations=0)
    with pytest.raises(ValueError):
        InpaintConfig(convergence_epsilon=-0.1)


def test_border_touching_hole():
    image = checker_image(seed=6)
    hole = np.zeros((40, 48), dtype=bool)
    hole[0:8, 0:8] = True  # corner hole, window clipped at the image edge
    res = inpaint(image, hole)
    assert isinstance(res, InpaintResult)
    assert np.array_equal(res.image[~hole], image[~hole])
