import numpy as np
import pytest
from PIL import Image

from ghostgan.errors import InvalidArgumentError
from ghostgan.plots import plot_metric_curves, save_image_grid, smooth


class TestSmooth:
    def test_first_value_passes_through(self):
        assert smooth([3.0, 3.0, 3.0]) == [3.0, 3.0, 3.0]

    def test_exponential_blend(self):
        out = smooth([0.0, 1.0], weight=0.6)
        assert out == [0.0, pytest.approx(0.4)]

    def test_empty(self):
        assert smooth([]) == []


class TestImageGrid:
    def test_writes_lossless_grayscale(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [rng.random((4, 28, 28)), rng.random((4, 28, 28))]
        path = save_image_grid(rows, tmp_path / "grid.png")
        img = Image.open(path)
        assert img.format == "PNG"
        assert img.mode == "L"
        assert img.size == (4 * 30 + 2, 2 * 30 + 2)

    def test_values_clipped_not_wrapped(self, tmp_path):
        path = save_image_grid([np.full((1, 2, 2), 2.0)], tmp_path / "hot.png")
        arr = np.asarray(Image.open(path))
        assert arr.max() == 255

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            save_image_grid([], tmp_path / "x.png")


class TestCurves:
    def test_writes_four_panels(self, tmp_path):
        records = [
            dict(
                epoch=e,
                generator_loss=-float(e),
                critic_loss=float(e) / 2,
                mse1=0.1,
                mse2=0.1,
                inception_score=1.0 + e,
                regularized_inception_score=0.8 + e,
                macro_f1=None,
                wall_time=float(e),
            )
            for e in range(1, 4)
        ]
        written = plot_metric_curves(records, tmp_path)
        assert len(written) == 4
        assert all(p.exists() for p in written)
        names = {p.stem for p in written}
        assert names == {
            "generator_loss",
            "critic_loss",
            "inception_score",
            "regularized_inception_score",
        }
