import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splicegan.core import (
    DetectionResult,
    ForgeryMask,
    ImageMaskPair,
    ImageRGB,
    Label,
    SizeClass,
    SoftMask,
    mask_forged_pixel_count,
)


def test_forged_pixel_count_pristine():
    assert mask_forged_pixel_count(ForgeryMask.zeros(650, 650)) == 0


def test_forged_pixel_count_full():
    assert mask_forged_pixel_count(ForgeryMask(np.full((650, 650), 255, np.uint8))) == 422500


def test_forged_pixel_count_block():
    data = np.zeros((650, 650), np.uint8)
    data[300:428, 17:145] = 255
    assert mask_forged_pixel_count(ForgeryMask(data)) == 16384


def test_mask_rejects_intermediate_values():
    data = np.zeros((4, 4), np.uint8)
    data[0, 0] = 128
    with pytest.raises(ValueError):
        ForgeryMask(data)


def test_image_shape_checked():
    with pytest.raises(ValueError):
        ImageRGB(np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        ImageRGB(np.zeros((4, 4, 3), np.float32))


def test_values_are_immutable():
    image = ImageRGB(np.zeros((4, 4, 3), np.uint8))
    with pytest.raises(ValueError):
        image.data[0, 0, 0] = 1


def test_pair_size_class_must_agree_with_mask():
    image = ImageRGB(np.zeros((8, 8, 3), np.uint8))
    with pytest.raises(ValueError):
        ImageMaskPair("x", image, ForgeryMask.zeros(8, 8), SizeClass.SMALL)
    forged = np.zeros((8, 8), np.uint8)
    forged[1, 1] = 255
    with pytest.raises(ValueError):
        ImageMaskPair("x", image, ForgeryMask(forged), SizeClass.PRISTINE)


def test_pair_dimensions_must_match():
    with pytest.raises(ValueError):
        ImageMaskPair("x", ImageRGB(np.zeros((8, 8, 3), np.uint8)), ForgeryMask.zeros(8, 9), SizeClass.PRISTINE)


def test_soft_mask_range():
    with pytest.raises(ValueError):
        SoftMask(np.array([[1.5]]))
    with pytest.raises(ValueError):
        SoftMask(np.array([[np.nan]]))


@pytest.mark.parametrize(
    "score, threshold, label",
    [(0.0, 0.5, Label.PRISTINE), (9.888, 0.5, Label.FORGED), (2.0, 2.0, Label.FORGED)],
)
def test_detection_result_label(score, threshold, label):
    assert DetectionResult(score, threshold).label is label


@settings(max_examples=25, deadline=None)
@given(
    image=arrays(np.uint8, (13, 17, 3)),
    mask=arrays(np.bool_, (13, 17)),
)
def test_pair_png_roundtrip_is_bit_exact(tmp_path_factory, image, mask):
    tmp = tmp_path_factory.mktemp("png")
    size_class = SizeClass.SMALL if mask.any() else SizeClass.PRISTINE
    pair = ImageMaskPair("p", ImageRGB(image), ForgeryMask(mask), size_class)
    pair.save(tmp / "i.png", tmp / "m.png")
    loaded = ImageMaskPair.load("p", tmp / "i.png", tmp / "m.png", size_class)
    assert loaded.image == pair.image
    assert loaded.mask == pair.mask
    assert set(np.unique(loaded.mask.data)) <= {0, 255}


def test_soft_mask_png_scaling(tmp_path):
    soft = SoftMask(np.array([[0.0, 0.5, 1.0, 0.2]], dtype=np.float32))
    assert soft.to_png_array().tolist() == [[0, 128, 255, 51]]
