"""MNIST ingestion, unpaired splitting, and on-disk caching.

The training protocol needs two mutually exclusive halves of the training
set: one half is pushed through the ghost-imaging chain (so its originals are
never seen), the other is served as unpaired ground truth. Caches are plain
.npz containers with a JSON metadata record and a format version.
"""

from __future__ import annotations

import gzip
import json
import struct
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .cgi import GhostDataset, ObjectImage
from .errors import IncompatibleCacheError, IngestionError, InvalidArgumentError

CACHE_FORMAT_VERSION = 1

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

_IDX_IMAGE_MAGIC = 2051
_IDX_LABEL_MAGIC = 2049


@dataclass(frozen=True)
class LabeledImageSet:
    """Images (count, H, W) scaled to [0, 1] with integer class labels.

    source_indices, when present, are positions in the full training set a
    subset was drawn from; they let the trainer verify unpairedness.
    """

    images: np.ndarray
    labels: np.ndarray
    split_tag: str = "full"
    source_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise InvalidArgumentError("images and labels must have equal length")
        if self.source_indices is not None and len(self.source_indices) != len(self.images):
            raise InvalidArgumentError("source_indices must match images length")

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices: np.ndarray, split_tag: str) -> "LabeledImageSet":
        indices = np.asarray(indices)
        return LabeledImageSet(
            images=self.images[indices],
            labels=self.labels[indices],
            split_tag=split_tag,
            source_indices=indices.astype(np.int64),
        )

    def take(self, n: int) -> "LabeledImageSet":
        return LabeledImageSet(
            images=self.images[:n],
            labels=self.labels[:n],
            split_tag=self.split_tag,
            source_indices=None if self.source_indices is None else self.source_indices[:n],
        )

    def as_object_images(self) -> list[ObjectImage]:
        return [
            ObjectImage(pixels=img, label=int(lab))
            for img, lab in zip(self.images.astype(np.float64), self.labels)
        ]


@dataclass(frozen=True)
class UnpairedSplit:
    """Two disjoint index sets covering the training set, plus the split seed."""

    ghost_source_indices: np.ndarray
    ground_truth_indices: np.ndarray
    seed: int


def _open_maybe_gzip(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _find_idx_file(directory: Path, stem: str) -> Path:
    for candidate in (directory / f"{stem}.gz", directory / stem):
        if candidate.exists():
            return candidate
    raise IngestionError(f"missing MNIST file {stem}[.gz] in {directory}")


def _read_idx_images(path: Path) -> np.ndarray:
    try:
        with _open_maybe_gzip(path) as f:
            header = f.read(16)
            if len(header) != 16:
                raise IngestionError(f"truncated IDX header in {path}")
            magic, count, rows, cols = struct.unpack(">IIII", header)
            if magic != _IDX_IMAGE_MAGIC:
                raise IngestionError(f"bad image magic {magic} in {path}")
            raw = np.frombuffer(f.read(), dtype=np.uint8)
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if raw.size != count * rows * cols:
        raise IngestionError(f"pixel payload size mismatch in {path}")
    return raw.reshape(count, rows, cols)


def _read_idx_labels(path: Path) -> np.ndarray:
    try:
        with _open_maybe_gzip(path) as f:
            header = f.read(8)
            if len(header) != 8:
                raise IngestionError(f"truncated IDX header in {path}")
            magic, count = struct.unpack(">II", header)
            if magic != _IDX_LABEL_MAGIC:
                raise IngestionError(f"bad label magic {magic} in {path}")
            raw = np.frombuffer(f.read(), dtype=np.uint8)
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if raw.size != count:
        raise IngestionError(f"label payload size mismatch in {path}")
    return raw.astype(np.int64)


def load_mnist(path: Union[str, Path]) -> tuple[LabeledImageSet, LabeledImageSet]:
    """Load the canonical IDX files from `path`, scaling pixels to [0, 1].

    Accepts gzipped or raw files under their standard names. Returns the
    (train, test) partition exactly as stored.
    """
    directory = Path(path)
    train_images = _read_idx_images(_find_idx_file(directory, TRAIN_IMAGES))
    train_labels = _read_idx_labels(_find_idx_file(directory, TRAIN_LABELS))
    test_images = _read_idx_images(_find_idx_file(directory, TEST_IMAGES))
    test_labels = _read_idx_labels(_find_idx_file(directory, TEST_LABELS))
    if len(train_images) != len(train_labels):
        raise IngestionError(f"train image/label counts differ in {directory}")
    if len(test_images) != len(test_labels):
        raise IngestionError(f"test image/label counts differ in {directory}")
    train = LabeledImageSet(
        images=train_images.astype(np.float32) / 255.0,
        labels=train_labels,
        split_tag="full",
    )
    test = LabeledImageSet(
        images=test_images.astype(np.float32) / 255.0,
        labels=test_labels,
        split_tag="test",
    )
    return train, test


def unpaired_split(train: LabeledImageSet, seed: int) -> UnpairedSplit:
    """Seeded permutation split into two disjoint halves.

    The first half becomes ghost sources (their originals are excluded from
    training), the second half is served as unpaired ground truth.
    """
    count = len(train)
    if count % 2 != 0:
        raise InvalidArgumentError(f"training set size must be even, got {count}")
    perm = np.random.default_rng(seed).permutation(count)
    half = count // 2
    return UnpairedSplit(
        ghost_source_indices=np.sort(perm[:half]),
        ground_truth_indices=np.sort(perm[half:]),
        seed=seed,
    )


def cache_dataset(dataset: Union[GhostDataset, LabeledImageSet], path: Union[str, Path]) -> Path:
    """Persist a ghost dataset or labeled image set as an .npz container."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(dataset, GhostDataset):
        meta = {
            "format_version": CACHE_FORMAT_VERSION,
            "kind": "ghost_dataset",
            "M": dataset.m_patterns,
            "N": dataset.pixel_count,
            "beta": dataset.beta,
            "seed": dataset.bank_seed,
            "normalization": dataset.normalization,
        }
        np.savez(
            path,
            ghosts=dataset.ghosts,
            labels=dataset.labels,
            source_indices=dataset.source_indices,
            meta=np.array(json.dumps(meta)),
        )
    elif isinstance(dataset, LabeledImageSet):
        meta = {
            "format_version": CACHE_FORMAT_VERSION,
            "kind": "labeled_image_set",
            "split_tag": dataset.split_tag,
        }
        arrays = {"images": dataset.images, "labels": dataset.labels}
        if dataset.source_indices is not None:
            arrays["source_indices"] = dataset.source_indices
        np.savez(path, meta=np.array(json.dumps(meta)), **arrays)
    else:
        raise InvalidArgumentError(f"cannot cache object of type {type(dataset).__name__}")
    return path


def load_cache(path: Union[str, Path]) -> Union[GhostDataset, LabeledImageSet]:
    """Load a cache written by cache_dataset, checking the format version."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            if "meta" not in archive:
                raise IncompatibleCacheError(f"{path} has no metadata record")
            meta = json.loads(str(archive["meta"]))
            version = meta.get("format_version")
            if version != CACHE_FORMAT_VERSION:
                raise IncompatibleCacheError(
                    f"{path} has format version {version}, expected {CACHE_FORMAT_VERSION}"
                )
            if meta["kind"] == "ghost_dataset":
                return GhostDataset(
                    ghosts=archive["ghosts"],
                    labels=archive["labels"],
                    source_indices=archive["source_indices"],
                    m_patterns=int(meta["M"]),
                    pixel_count=int(meta["N"]),
                    beta=float(meta["beta"]),
                    bank_seed=int(meta["seed"]),
                    normalization=str(meta["normalization"]),
                )
            if meta["kind"] == "labeled_image_set":
                return LabeledImageSet(
                    images=archive["images"],
                    labels=archive["labels"],
                    split_tag=str(meta["split_tag"]),
                    source_indices=archive["source_indices"]
                    if "source_indices" in archive
                    else None,
                )
            raise IncompatibleCacheError(f"{path} has unknown kind {meta['kind']!r}")
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as exc:
        raise IncompatibleCacheError(f"{path} is not a readable cache: {exc}") from exc
