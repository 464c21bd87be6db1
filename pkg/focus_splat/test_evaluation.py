import math

import imageio.v2 as imageio
import numpy as np
import pytest

from focus_splat.colmap_io import parse_model
from focus_splat.evaluation import (
    EvaluationRow, RasterImage, RoiMask, evaluate_images, improvement_summary, load_png, mask_from_aabb,
    masked_psnr, masked_ssim, polygon_mask, results_table,
)
from focus_splat.geometry import Aabb, projected_aabb


def full_mask(width, height):
    return RoiMask(np.ones((height, width), dtype=bool))


def constant(value, width=32, height=32):
    return RasterImage(np.full((height, width, 3), value))


def brute_force_ssim(x, y, mask, sigma=1.5, radius=5):
    """SSIM fenêtre par fenêtre, bords en miroir, moyenné sur les centres masqués"""
    offsets = np.arange(-radius, radius + 1)
    g = np.exp(-offsets ** 2 / (2 * sigma ** 2))
    window = np.outer(g, g) / np.outer(g, g).sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    channels = []
    for c in range(3):
        px = np.pad(x[..., c], radius, mode="symmetric")
        py = np.pad(y[..., c], radius, mode="symmetric")
        values = []
        for r, col in zip(*np.nonzero(mask)):
            wx = px[r:r + 2 * radius + 1, col:col + 2 * radius + 1]
            wy = py[r:r + 2 * radius + 1, col:col + 2 * radius + 1]
            mx, my = (window * wx).sum(), (window * wy).sum()
            vx = (window * (wx - mx) ** 2).sum()
            vy = (window * (wy - my) ** 2).sum()
            cov = (window * (wx - mx) * (wy - my)).sum()
            values.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
        channels.append(np.mean(values))
    return float(np.mean(channels))


def test_psnr_uniform_error():
    assert masked_psnr(constant(0.0), constant(0.1), full_mask(32, 32)) == pytest.approx(20.0)


def test_psnr_identical_images_capped():
    image = RasterImage(np.random.default_rng(5).uniform(size=(16, 16, 3)))
    assert masked_psnr(image, image, full_mask(16, 16)) == 100.0


def test_psnr_ignores_unmasked_pixels():
    a = np.zeros((20, 20, 3))
    b = a.copy()
    b[:, 10:] = 1.0
    bits = np.zeros((20, 20), dtype=bool)
    bits[:, :10] = True
    assert masked_psnr(RasterImage(a), RasterImage(b), RoiMask(bits)) == 100.0


def test_metrics_reject_empty_mask():
    empty = RoiMask(np.zeros((32, 32), dtype=bool))
    with pytest.raises(ValueError):
        masked_psnr(constant(0.0), constant(0.1), empty)
    with pytest.raises(ValueError):
        masked_ssim(constant(0.0), constant(0.1), empty)


def test_metrics_reject_size_mismatch():
    with pytest.raises(ValueError):
        masked_psnr(constant(0.0, 32, 32), constant(0.0, 32, 31), full_mask(32, 32))
    with pytest.raises(ValueError):
        masked_ssim(constant(0.0), constant(0.0), full_mask(16, 16))


def test_raster_image_range():
    with pytest.raises(ValueError):
        RasterImage(np.full((4, 4, 3), 1.5))
    with pytest.raises(ValueError):
        RasterImage(np.zeros((4, 4)))


def test_ssim_identical_is_one():
    image = RasterImage(np.random.default_rng(6).uniform(size=(24, 24, 3)))
    assert masked_ssim(image, image, full_mask(24, 24)) == pytest.approx(1.0, abs=1e-9)


def test_ssim_constant_images():
    # Variances nulles : (2·0.5·0.6 + C1) / (0.5² + 0.6² + C1)
    expected = (0.6 + 1e-4) / (0.61 + 1e-4)
    assert expected == pytest.approx(0.98361, abs=1e-5)
    assert masked_ssim(constant(0.5), constant(0.6), full_mask(32, 32)) == pytest.approx(expected, abs=1e-6)


def test_ssim_matches_window_by_window():
    rng = np.random.default_rng(7)
    x = rng.uniform(size=(32, 32, 3))
    y = np.clip(x + rng.normal(0.0, 0.1, size=x.shape), 0.0, 1.0)
    bits = np.zeros((32, 32), dtype=bool)
    bits[2:30:3, 0:32:2] = True
    bits[0, 31] = True
    expected = brute_force_ssim(x, y, bits)
    assert masked_ssim(RasterImage(x), RasterImage(y), RoiMask(bits)) == pytest.approx(expected, abs=1e-6)


def test_ssim_image_smaller_than_window():
    with pytest.raises(ValueError):
        masked_ssim(constant(0.2, 8, 8), constant(0.3, 8, 8), full_mask(8, 8))


def test_polygon_mask_square():
    square = np.array([[10.0, 10.0], [20.0, 10.0], [20.0, 20.0], [10.0, 20.0]])
    bits = polygon_mask(square, 64, 48)
    assert bits.sum() == 100
    assert bits[10, 10] and bits[19, 19]
    assert not bits[20, 20]


def test_polygon_mask_outside_image():
    square = np.array([[100.0, 100.0], [120.0, 100.0], [120.0, 120.0], [100.0, 120.0]])
    assert polygon_mask(square, 64, 48).sum() == 0


def test_mask_from_aabb(pinhole_100, identity_pose, unit_box_depth_10):
    # Carré de demi-côté 5.263 autour de (50, 50) : centres 45.5 à 54.5
    assert mask_from_aabb(pinhole_100, identity_pose, unit_box_depth_10, 100, 100).count() == 100
    # Paramètres internes mis à l'échelle : demi-côté 10.53 autour de (100, 100)
    assert mask_from_aabb(pinhole_100, identity_pose, unit_box_depth_10, 200, 200).count() == 484


def test_mask_from_aabb_not_visible(pinhole_100, identity_pose):
    behind = Aabb((-0.5, -0.5, -10.5), (0.5, 0.5, -9.5))
    assert mask_from_aabb(pinhole_100, identity_pose, behind, 100, 100).count() == 0


def test_load_png_gray_and_rgba(tmp_path):
    imageio.imwrite(tmp_path / "gray.png", np.full((4, 5), 255, dtype=np.uint8))
    rgba = np.zeros((4, 5, 4), dtype=np.uint8)
    rgba[..., 1] = 51
    imageio.imwrite(tmp_path / "rgba.png", rgba)

    gray = load_png(tmp_path / "gray.png")
    assert gray.samples.shape == (4, 5, 3)
    assert np.all(gray.samples == 1.0)
    assert np.allclose(load_png(tmp_path / "rgba.png").samples[0, 0], [0.0, 0.2, 0.0])


def write_pair(folder, name, value):
    folder.mkdir(exist_ok=True)
    imageio.imwrite(folder / name, np.full((100, 100, 3), value, dtype=np.uint8))


def test_evaluate_images(tmp_path, fixture_streams, unit_box_depth_10):
    model = parse_model(*fixture_streams)
    for name in ("a.png", "b.png"):
        write_pair(tmp_path / "truth", name, 100)
    write_pair(tmp_path / "rendered", "a.png", 110)
    write_pair(tmp_path / "rendered", "b.png", 100)

    rows = evaluate_images(model, unit_box_depth_10, ["a.png", "b.png"], tmp_path / "rendered", tmp_path / "truth")

    assert [r.image for r in rows] == ["a.png", "b.png"]
    assert rows[0].psnr_db == pytest.approx(20.0 * math.log10(25.5))
    assert rows[1].psnr_db == 100.0
    assert rows[0].masked_pixel_count == 100
    assert rows[1].masked_pixel_count == 100
    parallel = evaluate_images(model, unit_box_depth_10, ["a.png", "b.png"], tmp_path / "rendered",
                               tmp_path / "truth", workers=2)
    assert parallel == rows


def test_evaluate_images_missing_render(tmp_path, fixture_streams, unit_box_depth_10):
    model = parse_model(*fixture_streams)
    write_pair(tmp_path / "truth", "a.png", 100)
    (tmp_path / "rendered").mkdir()
    with pytest.raises(ValueError, match="absente"):
        evaluate_images(model, unit_box_depth_10, ["a.png"], tmp_path / "rendered", tmp_path / "truth")
    with pytest.raises(ValueError, match="inconnue"):
        evaluate_images(model, unit_box_depth_10, ["zzz.png"], tmp_path / "rendered", tmp_path / "truth")


def test_results_table():
    rows = [EvaluationRow("a.png", 30.0, 0.9, 100), EvaluationRow("b.png", 32.0, 0.8, 50)]
    lines = results_table(rows).splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "image,psnr_db,ssim,masked_pixel_count"
    assert lines[2] == "a.png,30,0.9,100"
    assert lines[-1] == "mean,31,0.85,150"


def test_improvement_summary():
    baseline = [EvaluationRow("a.png", 20.0, 0.5, 10), EvaluationRow("b.png", 25.0, 0.5, 10)]
    method = [EvaluationRow("b.png", 26.0, 0.6, 10), EvaluationRow("a.png", 23.0, 0.6, 10)]
    summary = improvement_summary(baseline, method)
    assert summary.mean_delta_db == pytest.approx(2.0)
    assert summary.peak_delta_db == pytest.approx(3.0)
    assert summary.peak_image == "a.png"
    assert "peak_image: a.png\n" in summary.to_text()


def test_improvement_summary_unpaired():
    with pytest.raises(ValueError):
        improvement_summary([EvaluationRow("a.png", 20.0, 0.5, 10)], [EvaluationRow("b.png", 20.0, 0.5, 10)])


def brute_force_psnr(x, y, mask):
    total, count = 0.0, 0
    for r, col in zip(*np.nonzero(mask)):
        for c in range(3):
            total += (x[r, col, c] - y[r, col, c]) ** 2
            count += 1
    mse = total / count
    return 100.0 if mse == 0 else min(10 * math.log10(1 / mse), 100.0)


def test_psnr_matches_per_pixel_loop():
    rng = np.random.default_rng(21)
    for _ in range(50):
        width, height = rng.integers(16, 65, size=2)
        x = rng.uniform(size=(height, width, 3))
        y = rng.uniform(size=(height, width, 3))
        bits = rng.uniform(size=(height, width)) < 0.3
        bits[0, 0] = True
        score = masked_psnr(RasterImage(x), RasterImage(y), RoiMask(bits))
        assert score == pytest.approx(brute_force_psnr(x, y, bits), abs=1e-9)


def test_metrics_symmetric_and_restricted_to_mask():
    rng = np.random.default_rng(8)
    x = rng.uniform(size=(24, 24, 3))
    y = np.clip(x + rng.normal(scale=0.05, size=x.shape), 0.0, 1.0)
    bits = np.zeros((24, 24), dtype=bool)
    bits[6:18, 4:16] = True
    a, b, mask = RasterImage(x), RasterImage(y), RoiMask(bits)
    assert masked_psnr(a, b, mask) == masked_psnr(b, a, mask)
    assert masked_ssim(a, b, mask) == pytest.approx(masked_ssim(b, a, mask), abs=1e-12)

    # pixels hors du masque et hors de toute fenêtre centrée dans le masque
    far = y.copy()
    far[:, 21:] = 0.0
    assert masked_psnr(a, RasterImage(far), mask) == masked_psnr(a, b, mask)
    assert masked_ssim(a, RasterImage(far), mask) == pytest.approx(masked_ssim(a, b, mask), abs=1e-12)


def test_mask_from_aabb_subpixel_box(pinhole_100, identity_pose):
    tiny = Aabb((0.2, 0.2, 999.9), (0.2001, 0.2001, 1000.0))
    assert projected_aabb(pinhole_100, identity_pose, tiny) is not None
    assert mask_from_aabb(pinhole_100, identity_pose, tiny, 100, 100).count() == 0


def test_evaluate_images_skips_unseen_box(tmp_path, fixture_streams):
    model = parse_model(*fixture_streams)
    write_pair(tmp_path / "truth", "a.png", 100)
    write_pair(tmp_path / "rendered", "a.png", 120)
    tiny = Aabb((0.2, 0.2, 999.9), (0.2001, 0.2001, 1000.0))
    assert evaluate_images(model, tiny, ["a.png"], tmp_path / "rendered", tmp_path / "truth") == []
