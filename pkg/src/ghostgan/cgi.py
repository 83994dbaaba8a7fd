"""Computational ghost imaging forward chain.

Simulates the acquisition numerically: a bank of random speckle patterns
stands in for the SLM masks, a bucket detector integrates the object lit by
each pattern into one scalar, and the ghost image is the per-pixel sample
covariance between the bucket series and the pattern stack. The quality knob
is the SNR coefficient beta = M/N (pattern count over pixel count).

All arithmetic runs in float64. Ensemble averages divide by M (no bias
correction), which is the convention the test oracles pin down.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError

NORMALIZATION_RULE = "minmax_per_image"


@dataclass(frozen=True)
class SpeckleBank:
    """M random intensity patterns of shape (H, W), values in [0, 1)."""

    patterns: np.ndarray
    seed: int

    @property
    def count(self) -> int:
        return self.patterns.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.patterns.shape[1], self.patterns.shape[2]

    def first(self, m: int) -> "SpeckleBank":
        """The leading-m sub-bank.

        Slicing a master bank is bit-identical to regenerating with the same
        seed at count m, because patterns are drawn sequentially from one
        stream. Datasets built at different M from one master bank are
        therefore nested.
        """
        if not 1 <= m <= self.count:
            raise InvalidArgumentError(f"sub-bank size {m} outside [1, {self.count}]")
        return SpeckleBank(patterns=self.patterns[:m], seed=self.seed)


@dataclass(frozen=True)
class ObjectImage:
    """A ground-truth object: (H, W) pixels in [0, 1], optional class label."""

    pixels: np.ndarray
    label: Optional[int] = None


@dataclass(frozen=True)
class BucketSeries:
    """Bucket detector outputs, one scalar per speckle pattern."""

    values: np.ndarray


@dataclass(frozen=True)
class GhostImage:
    """Signed correlation image with its SNR coefficient and provenance."""

    pixels: np.ndarray
    beta: float
    source_index: int = -1
    label: Optional[int] = None


@dataclass(frozen=True)
class GhostDataset:
    """Normalized ghost images plus labels and source indices.

    ghosts is float32 (count, H, W) in [0, 1]; labels uses -1 for unlabeled.
    """

    ghosts: np.ndarray
    labels: np.ndarray
    source_indices: np.ndarray
    m_patterns: int
    pixel_count: int
    beta: float
    bank_seed: int
    normalization: str = NORMALIZATION_RULE

    def __post_init__(self):
        if len(self.ghosts) != len(self.labels) or len(self.ghosts) != len(self.source_indices):
            raise InvalidArgumentError("ghosts, labels and source_indices must have equal length")

    def __len__(self) -> int:
        return len(self.ghosts)

    def take(self, n: int) -> "GhostDataset":
        """The leading-n slice, metadata preserved."""
        return GhostDataset(
            ghosts=self.ghosts[:n],
            labels=self.labels[:n],
            source_indices=self.source_indices[:n],
            m_patterns=self.m_patterns,
            pixel_count=self.pixel_count,
            beta=self.beta,
            bank_seed=self.bank_seed,
            normalization=self.normalization,
        )


def generate_speckle_bank(m: int, height: int, width: int, seed: int) -> SpeckleBank:
    """Draw m i.i.d. uniform-[0,1) intensity patterns, deterministic in seed."""
    if m < 1:
        raise InvalidArgumentError(f"pattern count must be >= 1, got {m}")
    if height < 1 or width < 1:
        raise InvalidArgumentError(f"pattern shape must be positive, got {height}x{width}")
    rng = np.random.default_rng(seed)
    patterns = rng.random((m, height, width), dtype=np.float64)
    return SpeckleBank(patterns=patterns, seed=seed)


def bucket_measure(obj: ObjectImage, bank: SpeckleBank) -> BucketSeries:
    """Integrate the object against every pattern: B_m = sum_ij O[i,j] * S_m[i,j]."""
    pixels = np.asarray(obj.pixels, dtype=np.float64)
    if pixels.shape != bank.shape:
        raise InvalidArgumentError(
            f"object shape {pixels.shape} does not match bank shape {bank.shape}"
        )
    values = np.einsum("ij,mij->m", pixels, bank.patterns)
    return BucketSeries(values=values)


def reconstruct_ghost(
    buckets: BucketSeries,
    bank: SpeckleBank,
    source_index: int = -1,
    label: Optional[int] = None,
) -> GhostImage:
    """Per-pixel sample covariance between the bucket series and the patterns.

    GI[i,j] = mean_m( (B_m - mean(B)) * (S_m[i,j] - mean_m S[i,j]) ), with all
    means taken over the M realizations (divide by M).
    """
    values = np.asarray(buckets.values, dtype=np.float64)
    m = bank.count
    if values.shape != (m,):
        raise InvalidArgumentError(
            f"bucket series length {values.shape} does not match bank count {m}"
        )
    centered_b = values - values.mean()
    centered_s = bank.patterns - bank.patterns.mean(axis=0)
    pixels = np.einsum("m,mij->ij", centered_b, centered_s) / m
    height, width = bank.shape
    return GhostImage(
        pixels=pixels,
        beta=snr_coefficient(m, height * width),
        source_index=source_index,
        label=label,
    )


def snr_coefficient(m: int, n: int) -> float:
    """beta = M/N: pattern count over pixel count."""
    if n < 1:
        raise InvalidArgumentError(f"pixel count must be >= 1, got {n}")
    if m < 0:
        raise InvalidArgumentError(f"pattern count must be >= 0, got {m}")
    return m / n


def normalize_ghost(ghost: GhostImage) -> np.ndarray:
    """Min-max map of the signed ghost to [0, 1]; a constant image maps to zeros."""
    pixels = np.asarray(ghost.pixels, dtype=np.float64)
    if not np.all(np.isfinite(pixels)):
        raise InvalidArgumentError("ghost pixels must be finite")
    lo = pixels.min()
    hi = pixels.max()
    if hi == lo:
        return np.zeros_like(pixels)
    return (pixels - lo) / (hi - lo)


def build_ghost_dataset(
    images: Sequence[ObjectImage],
    bank: SpeckleBank,
    source_indices: Optional[Sequence[int]] = None,
) -> GhostDataset:
    """Run the full chain (bucket, reconstruct, normalize) over a set of objects.

    One shared bank is used for all images. Source indices default to the
    position of each image in `images`.
    """
    height, width = bank.shape
    if source_indices is None:
        source_indices = range(len(images))
    indices = np.asarray(list(source_indices), dtype=np.int64)
    if len(indices) != len(images):
        raise InvalidArgumentError("source_indices length must match images length")

    ghosts = np.empty((len(images), height, width), dtype=np.float32)
    labels = np.empty(len(images), dtype=np.int64)
    for k, obj in enumerate(images):
        buckets = bucket_measure(obj, bank)
        ghost = reconstruct_ghost(buckets, bank)
        ghosts[k] = normalize_ghost(ghost).astype(np.float32)
        labels[k] = -1 if obj.label is None else int(obj.label)

    return GhostDataset(
        ghosts=ghosts,
        labels=labels,
        source_indices=indices,
        m_patterns=bank.count,
        pixel_count=height * width,
        beta=snr_coefficient(bank.count, height * width),
        bank_seed=bank.seed,
    )
