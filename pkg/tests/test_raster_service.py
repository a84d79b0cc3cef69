"""
图像几何服务测试
"""
import math

import numpy as np
import pytest

from app.core.exceptions import (
    DataIOError,
    DegenerateGeometryError,
    InvalidArgumentError,
    SchemaError,
)
from app.schemas.raster import LandmarkSet, RasterImage, SimilarityTransform
from app.services.raster_service import CANONICAL_TEMPLATE, RasterService
from tests.helpers import blob_centroid, dot_face, rotate_points


def constant_image(value, size: int = 256) -> RasterImage:
    return RasterImage(pixels=np.full((size, size, 3), value, dtype=np.uint8))


def smooth_image(size: int = 256) -> RasterImage:
    y, x = np.mgrid[0:size, 0:size]
    pixels = np.stack([x, y, np.full_like(x, 128)], axis=-1).astype(np.uint8)
    return RasterImage(pixels=pixels)


class TestFitSimilarity:
    def test_identity(self):
        t = RasterService.fit_similarity(CANONICAL_TEMPLATE, CANONICAL_TEMPLATE)
        assert t.scale == pytest.approx(1.0, abs=1e-9)
        assert t.rotation == pytest.approx(0.0, abs=1e-9)
        assert (t.tx, t.ty) == pytest.approx((0.0, 0.0), abs=1e-9)

    def test_quarter_turn(self):
        src = CANONICAL_TEMPLATE.as_array()
        dst = src @ np.array([[0.0, 1.0], [-1.0, 0.0]])
        t = RasterService.fit_similarity(CANONICAL_TEMPLATE, LandmarkSet.from_array(dst))
        assert t.rotation == pytest.approx(math.pi / 2, abs=1e-9)
        assert t.scale == pytest.approx(1.0, abs=1e-9)

    def test_known_transform(self):
        rng = np.random.default_rng(7)
        src = LandmarkSet.from_array(rng.uniform(0, 200, (5, 2)))
        known = SimilarityTransform(scale=2.0, rotation=0.3, tx=5.0, ty=-3.0)
        t = RasterService.fit_similarity(src, LandmarkSet.from_array(known.apply(src.as_array())))
        assert (t.scale, t.rotation, t.tx, t.ty) == pytest.approx((2.0, 0.3, 5.0, -3.0), abs=1e-9)

    def test_recovers_random_transforms(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            src = LandmarkSet.from_array(rng.uniform(-100, 300, (5, 2)))
            known = SimilarityTransform(
                scale=float(rng.uniform(0.2, 5.0)),
                rotation=float(rng.uniform(-3.0, 3.0)),
                tx=float(rng.uniform(-50, 50)),
                ty=float(rng.uniform(-50, 50)),
            )
            t = RasterService.fit_similarity(src, LandmarkSet.from_array(known.apply(src.as_array())))
            assert abs(t.scale - known.scale) <= 1e-9
            assert abs(t.rotation - known.rotation) <= 1e-9
            assert abs(t.tx - known.tx) <= 1e-9
            assert abs(t.ty - known.ty) <= 1e-9

    def test_degenerate(self):
        coincident = LandmarkSet(points=((10.0, 10.0),) * 5)
        with pytest.raises(DegenerateGeometryError):
            RasterService.fit_similarity(coincident, CANONICAL_TEMPLATE)

    def test_inverse_round_trip(self):
        t = SimilarityTransform(scale=1.7, rotation=-0.4, tx=12.0, ty=3.5)
        pts = CANONICAL_TEMPLATE.as_array()
        np.testing.assert_allclose(t.inverse().apply(t.apply(pts)), pts, atol=1e-9)


class TestWarp:
    def test_identity(self, gradient_image):
        out = RasterService.warp(gradient_image, SimilarityTransform.identity(), 256, 256)
        np.testing.assert_array_equal(out.pixels, gradient_image.pixels)

    def test_translation_fills_black(self):
        a, b = (10, 20, 30), (200, 150, 100)
        img = RasterImage(pixels=np.array([[a, b]], dtype=np.uint8))
        out = RasterService.warp(img, SimilarityTransform(tx=1.0), 2, 1)
        np.testing.assert_array_equal(out.pixels, np.array([[(0, 0, 0), a]], dtype=np.uint8))

    def test_half_turn_reverses_both_axes(self):
        rng = np.random.default_rng(9)
        img = RasterImage(pixels=rng.integers(0, 256, (6, 8, 3), dtype=np.uint8))
        t = RasterService._about_center(img, 1.0, math.pi)
        out = RasterService.warp(img, t, img.width, img.height)
        np.testing.assert_array_equal(out.pixels, img.pixels[::-1, ::-1])

    def test_rejects_empty_output(self, gradient_image):
        with pytest.raises(InvalidArgumentError):
            RasterService.warp(gradient_image, SimilarityTransform.identity(), 0, 10)


class TestAlignFace:
    def test_template_landmarks_are_identity(self, gradient_image):
        out = RasterService.align_face(gradient_image, CANONICAL_TEMPLATE)
        np.testing.assert_array_equal(out.pixels, gradient_image.pixels)

    def test_scaled_landmarks_downsample(self):
        rng = np.random.default_rng(10)
        big = RasterImage(pixels=rng.integers(0, 256, (512, 512, 3), dtype=np.uint8))
        lm = LandmarkSet.from_array(CANONICAL_TEMPLATE.as_array() * 2)
        out = RasterService.align_face(big, lm)
        assert (out.width, out.height) == (256, 256)
        np.testing.assert_array_equal(out.pixels, big.pixels[::2, ::2])

    def test_rotated_dot_face(self):
        rotated = rotate_points(CANONICAL_TEMPLATE.as_array(), 10.0)
        face = dot_face(rotated)
        out = RasterService.align_face(face, LandmarkSet.from_array(rotated))
        for template_point in CANONICAL_TEMPLATE.points[:2]:
            cx, cy = blob_centroid(out, template_point)
            assert math.hypot(cx - template_point[0], cy - template_point[1]) <= 0.5


class TestAugmentTransforms:
    def test_rotate_zero_is_identity(self, gradient_image):
        assert RasterService.rotate(gradient_image, 0).pixels.tobytes() == gradient_image.pixels.tobytes()

    def test_rotate_round_trip_interior(self):
        img = smooth_image()
        theta = 10.0
        back = RasterService.rotate(RasterService.rotate(img, theta), -theta)
        margin = math.ceil(math.radians(theta) * math.hypot(256, 256) / 2)
        inner = (slice(margin, 256 - margin), slice(margin, 256 - margin))
        diff = np.abs(back.pixels[inner].astype(int) - img.pixels[inner].astype(int))
        assert diff.max() <= 2

    def test_rotate_keeps_size_and_limits_angle(self, gradient_image):
        out = RasterService.rotate(gradient_image, 7.5)
        assert (out.width, out.height) == (256, 256)
        with pytest.raises(InvalidArgumentError):
            RasterService.rotate(gradient_image, 50)

    def test_zoom_in_magnifies_about_center(self):
        out = RasterService.zoom(smooth_image(), 2.0)
        # 输出像素 x 取自源图 127.5 + (x − 127.5) / 2
        expected = 127.5 + (np.arange(256) - 127.5) / 2
        np.testing.assert_allclose(out.pixels[128, :, 0], expected, atol=1.0)

    def test_zoom_out_pads_black(self):
        out = RasterService.zoom(constant_image(200), 0.5)
        assert out.pixels[0, 0].tolist() == [0, 0, 0]
        assert out.pixels[128, 128].tolist() == [200, 200, 200]

    @pytest.mark.parametrize("factor", [0, -1.5])
    def test_zoom_rejects_non_positive(self, gradient_image, factor):
        with pytest.raises(InvalidArgumentError):
            RasterService.zoom(gradient_image, factor)

    def test_channel_shift(self):
        out = RasterService.channel_shift(constant_image(128, 4), (10, 0, -10))
        assert out.pixels[0, 0].tolist() == [138, 128, 118]
        saturated = RasterService.channel_shift(constant_image(250, 4), (10, 0, 0))
        assert saturated.pixels[..., 0].max() == 255
        assert RasterService.channel_shift(constant_image(3, 4), (-10, 0, 0)).pixels[..., 0].min() == 0

    def test_channel_shift_zero_is_identity(self, gradient_image):
        out = RasterService.channel_shift(gradient_image, (0, 0, 0))
        np.testing.assert_array_equal(out.pixels, gradient_image.pixels)

    @pytest.mark.parametrize("deltas", [(40000, 0, 0), (0, -256, 0), (0, 0)])
    def test_channel_shift_rejects_bad_deltas(self, deltas):
        with pytest.raises(InvalidArgumentError):
            RasterService.channel_shift(constant_image(128, 4), deltas)

    def test_channel_shift_full_range(self):
        out = RasterService.channel_shift(constant_image(128, 4), (255, -255, 0))
        assert out.pixels[0, 0].tolist() == [255, 0, 128]


class TestFiveCrop:
    def test_offsets(self):
        assert RasterService.crop_offsets(256, 224) == [(0, 0), (32, 0), (0, 32), (32, 32), (16, 16)]

    def test_constant_image(self):
        crops = RasterService.five_crop(constant_image(77))
        assert len(crops) == 5
        for crop in crops:
            assert (crop.width, crop.height) == (224, 224)
            assert np.all(crop.pixels == 77)

    def test_crops_are_exact_subgrids(self, gradient_image):
        crops = RasterService.five_crop(gradient_image)
        np.testing.assert_array_equal(crops[0].pixels[0, 0], gradient_image.pixels[0, 0])
        np.testing.assert_array_equal(crops[4].pixels[0, 0], gradient_image.pixels[16, 16])
        for crop, (x, y) in zip(crops, RasterService.crop_offsets(256, 224)):
            np.testing.assert_array_equal(crop.pixels, gradient_image.pixels[y:y + 224, x:x + 224])

    def test_wrong_size(self):
        with pytest.raises(InvalidArgumentError):
            RasterService.five_crop(constant_image(0, 200))


class TestResize:
    def test_constant_stays_constant(self):
        out = RasterService.resize(constant_image(90, 100), 256, 256)
        assert (out.width, out.height) == (256, 256)
        assert np.all(out.pixels == 90)

    def test_same_size_is_noop(self, gradient_image):
        assert RasterService.resize(gradient_image, 256, 256) is gradient_image


class TestFiles:
    @pytest.mark.parametrize("name", ["face.png", "face.ppm"])
    def test_round_trip(self, tmp_path, gradient_image, name):
        path = RasterService.save_image(gradient_image, tmp_path / name)
        np.testing.assert_array_equal(RasterService.load_image(path).pixels, gradient_image.pixels)

    def test_ppm_is_binary_p6(self, tmp_path, gradient_image):
        path = RasterService.save_image(gradient_image, tmp_path / "face.ppm")
        assert path.read_bytes().startswith(b"P6")

    def test_missing_and_corrupt(self, tmp_path):
        with pytest.raises(DataIOError):
            RasterService.load_image(tmp_path / "missing.png")
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not an image")
        with pytest.raises(DataIOError):
            RasterService.load_image(bad)

    def test_load_landmarks_with_and_without_header(self, tmp_path):
        row = "img1,88,102,168,102,128,144,96,184,160,184"
        with_header = tmp_path / "a.csv"
        with_header.write_text("image_id,lx,ly,rx,ry,nx,ny,lmx,lmy,rmx,rmy\n" + row + "\n")
        without = tmp_path / "b.csv"
        without.write_text(row + "\n")
        for path in (with_header, without):
            landmarks = RasterService.load_landmarks(path)
            assert landmarks == {"img1": CANONICAL_TEMPLATE}

    def test_load_landmarks_errors(self, tmp_path):
        with pytest.raises(DataIOError):
            RasterService.load_landmarks(tmp_path / "missing.csv")
        short = tmp_path / "short.csv"
        short.write_text("img1,1,2,3\n")
        with pytest.raises(SchemaError):
            RasterService.load_landmarks(short)
        dup = tmp_path / "dup.csv"
        dup.write_text("img1,88,102,168,102,128,144,96,184,160,184\nimg1,88,102,168,102,128,144,96,184,160,184\n")
        with pytest.raises(SchemaError, match="row 2"):
            RasterService.load_landmarks(dup)

    def test_load_landmarks_blank_lines(self, tmp_path):
        row = "img1,88,102,168,102,128,144,96,184,160,184"
        path = tmp_path / "l.csv"
        path.write_text("image_id,lx,ly,rx,ry,nx,ny,lmx,lmy,rmx,rmy\n\n" + row + "\n\n" + row + "\n")
        with pytest.raises(SchemaError, match="row 5"):
            RasterService.load_landmarks(path)
        path.write_text(row + "\n\n")
        assert RasterService.load_landmarks(path) == {"img1": CANONICAL_TEMPLATE}
