"""Lossless sample grids and per-epoch metric curves."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError

_PAD = 2


def save_image_grid(rows: Sequence[np.ndarray], path: Union[str, Path]) -> Path:
    """Tile image rows into one grayscale PNG.

    Each entry of `rows` is an array (count, H, W) of values in [0, 1];
    row k of the grid shows its images left to right.
    """
    if not rows:
        raise InvalidArgumentError("image grid needs at least one row")
    arrays = [np.asarray(r, dtype=np.float64) for r in rows]
    n_cols = max(a.shape[0] for a in arrays)
    height, width = arrays[0].shape[1:]
    canvas = np.full(
        (len(arrays) * (height + _PAD) + _PAD, n_cols * (width + _PAD) + _PAD), 1.0
    )
    for r, a in enumerate(arrays):
        for c in range(a.shape[0]):
            top = _PAD + r * (height + _PAD)
            left = _PAD + c * (width + _PAD)
            canvas[top : top + height, left : left + width] = np.clip(a[c], 0.0, 1.0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((canvas * 255).round().astype(np.uint8), mode="L").save(path)
    return path


def smooth(values: Sequence[float], weight: float = 0.6) -> list[float]:
    """Exponential smoothing of a metric trace (weight on the running value)."""
    out: list[float] = []
    running = None
    for v in values:
        running = v if running is None else weight * running + (1 - weight) * v
        out.append(running)
    return out


def plot_metric_curves(metrics: Sequence[dict], out_dir: Union[str, Path]) -> list[Path]:
    """Write the four training curves (raw plus smoothed) as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panels = [
        ("generator_loss", "generator loss"),
        ("critic_loss", "critic loss"),
        ("inception_score", "inception score"),
        ("regularized_inception_score", "regularized inception score"),
    ]
    epochs = [m["epoch"] for m in metrics]
    written = []
    for key, title in panels:
        values = [m[key] for m in metrics]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(epochs, values, color="#7f7f7f", lw=0.8, ls=":", label="raw")
        ax.plot(epochs, smooth(values), color="#1f77b4", lw=1.6, label="smoothed (0.6)")
        ax.set_xlabel("epoch")
        ax.set_ylabel(title)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        target = out_dir / f"{key}.png"
        fig.savefig(target, dpi=150)
        plt.close(fig)
        written.append(target)
    return written
