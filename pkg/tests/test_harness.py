import math

import numpy as np
import pytest
from PIL import Image

from flow_inverse_solver.datasets import center_crop, gaussian_mixture_2d, ingest, synthetic_shapes
from flow_inverse_solver.imaging import load_grid, save_comparison_strip, save_grid, to_display, to_uint8
from flow_inverse_solver.models import ResultRow
from flow_inverse_solver.results import RESULT_FIELDS, aggregate, read_results, write_results


def row(image_id: str, psnr: float, ssim: float = 0.5, task: str = "denoise", method: str = "ours") -> ResultRow:
    return ResultRow(task=task, method=method, image_id=image_id, psnr=psnr, ssim=ssim,
                     data_loss=1.0, reg_loss=2.0, seed=0, wall_time_ms=3.0)


@pytest.fixture
def image_dir(tmp_path, rng):
    folder = tmp_path / "images"
    folder.mkdir()
    Image.fromarray(rng.integers(0, 256, (218, 178, 3), dtype=np.uint8)).save(folder / "b_face.jpg")
    Image.fromarray(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)).save(folder / "a_small.png")
    (folder / "c_broken.png").write_bytes(b"not an image")
    (folder / "notes.txt").write_text("ignorado")
    return folder


class TestIngest:
    def test_resizes_orders_and_skips(self, image_dir):
        result = ingest(image_dir)
        assert result.names == ["a_small.png", "b_face.jpg"]
        assert result.images.shape == (2, 3, 32, 32)
        assert result.images.dtype == np.uint8
        assert result.skipped == 1
        assert len(result) == 2

    def test_square_image_untouched(self, image_dir):
        expected = np.asarray(Image.open(image_dir / "a_small.png")).transpose(2, 0, 1)
        np.testing.assert_array_equal(ingest(image_dir).images[0], expected)

    def test_grayscale(self, image_dir):
        assert ingest(image_dir, target=(16, 16), channels=1).images.shape == (2, 1, 16, 16)

    def test_center_crop(self):
        cropped = center_crop(Image.new("RGB", (178, 218)))
        assert cropped.size == (178, 178)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest(tmp_path / "nada")


class TestSyntheticData:
    def test_shapes_dataset(self):
        images = synthetic_shapes(10, size=8, channels=1, seed=0)
        assert images.shape == (10, 1, 8, 8)
        assert images.dtype == np.uint8
        assert images.max() >= 150
        np.testing.assert_array_equal(images, synthetic_shapes(10, size=8, channels=1, seed=0))

    def test_mixture(self):
        points = gaussian_mixture_2d(2000, seed=0).reshape(-1, 2)
        assert abs(points[:, 0]).mean() == pytest.approx(2.0, abs=0.1)
        assert points[:, 1].std() == pytest.approx(0.5, abs=0.05)


class TestImaging:
    def test_to_uint8_rounds_and_clips(self):
        np.testing.assert_array_equal(to_uint8(np.array([-0.2, 0.5, 1.3])), [0, 128, 255])

    def test_grid_round_trip(self, tmp_path, rng):
        grid = to_uint8(rng.random((3, 4, 1, 8, 8))) / 255.0
        path = save_grid(grid, tmp_path / "grid.png")
        assert Image.open(path).size == (32, 24)
        np.testing.assert_allclose(load_grid(path, rows=3, cols=4), grid)

    def test_comparison_strip(self, tmp_path, rng):
        target = rng.random((3, 8, 8))
        path = save_comparison_strip(target, rng.random((1, 8, 8)), target, tmp_path / "strip.png")
        with Image.open(path) as image:
            assert image.size == (24, 8)
            assert image.mode == "RGB"

    def test_display_centers_smaller_measurement(self):
        canvas = to_display(np.ones((3, 6, 6)), (3, 8, 8))
        assert canvas.sum() == 3 * 36
        assert canvas[:, 0].sum() == 0.0
        assert to_display(np.ones(5), (1, 4, 4)).sum() == 0.0


class TestResults:
    def test_write_and_read(self, tmp_path):
        rows = [row("a", 30.5), row("b", math.inf, ssim=1.0)]
        path = write_results(rows, tmp_path / "results.csv")
        raw = path.read_bytes()
        assert b"\r\n" not in raw
        assert raw.decode("utf-8").splitlines()[0] == ",".join(RESULT_FIELDS)
        back = read_results(path)
        assert back[0] == rows[0]
        assert math.isinf(back[1].psnr)

    def test_header_checked(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_results(path)

    def test_negative_psnr_rejected(self):
        with pytest.raises(ValueError):
            row("a", -1.0)

    def test_singleton_mean(self):
        (entry,) = aggregate([row("a", 20.0)])
        assert entry["psnr_mean"] == 20.0
        assert entry["count"] == 1

    def test_aggregate_excludes_infinite_and_aborted(self):
        table = aggregate([
            row("a", 30.0, ssim=0.8),
            row("b", 20.0, ssim=0.6),
            row("c", math.inf, ssim=1.0),
            row("d", math.nan, ssim=math.nan),
            row("e", 10.0, method="csgm"),
        ])
        assert [(t["task"], t["method"]) for t in table] == [("denoise", "csgm"), ("denoise", "ours")]
        ours = table[1]
        assert ours["psnr_mean"] == pytest.approx(25.0)
        assert ours["ssim_mean"] == pytest.approx(0.7)
        assert ours["count"] == 2
        assert ours["excluded_infinite"] == 1
