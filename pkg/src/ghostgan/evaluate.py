"""Digit classifier and reconstruction quality metrics.

The classifier is a small 2-conv + 2-dense network trained on labeled digits.
It backs three numbers: the inception score (diversity and confidence of the
class conditionals), the macro F1 against the labels of each ghost image's
source object (class fidelity), and the regularized inception score, which
subtracts both mean-squared anchors from the inception score so that
diversity gained by ignoring the input costs points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .data import LabeledImageSet
from .errors import InvalidArgumentError, TrainingQualityError

N_CLASSES = 10


class DigitClassifier(nn.Module):
    """2 convolutional + 2 dense blocks; forward returns class probabilities."""

    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 32, 3, padding=1)
        self.conv2 = nn.Conv2d(32, 64, 3, padding=1)
        self.fc1 = nn.Linear(64 * 7 * 7, 128)
        self.fc2 = nn.Linear(128, N_CLASSES)
        self.dropout = nn.Dropout(0.25)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = F.relu(self.fc1(x.flatten(1)))
        return self.fc2(self.dropout(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.logits(x), dim=1)


def _as_image_tensor(images) -> torch.Tensor:
    if isinstance(images, np.ndarray):
        images = torch.from_numpy(images)
    images = images.float()
    if images.dim() == 3:
        images = images.unsqueeze(1)
    if images.dim() != 4 or images.shape[1] != 1:
        raise InvalidArgumentError(f"expected (N, 28, 28) or (N, 1, 28, 28), got {tuple(images.shape)}")
    return images


@torch.no_grad()
def class_probabilities(
    classifier: DigitClassifier, images, batch_size: int = 512
) -> np.ndarray:
    """Evaluation-mode class conditionals p(c|x), one row per image."""
    x = _as_image_tensor(images)
    classifier.eval()
    chunks = [
        classifier(x[i : i + batch_size]).double().cpu().numpy()
        for i in range(0, len(x), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def predict_labels(classifier: DigitClassifier, images, batch_size: int = 512) -> np.ndarray:
    return class_probabilities(classifier, images, batch_size).argmax(axis=1)


def train_classifier(
    train: LabeledImageSet,
    seed: int,
    epochs: int = 8,
    batch_size: int = 128,
    learning_rate: float = 1e-3,
    heldout: Optional[LabeledImageSet] = None,
    min_accuracy: Optional[float] = 0.98,
    min_inception: Optional[float] = 9.5,
) -> DigitClassifier:
    """Train the metric classifier, deterministic in `seed`.

    When a held-out set is given, the classifier must reach the accuracy and
    inception-score floors on it, otherwise a TrainingQualityError reports
    the achieved values.
    """
    images = torch.from_numpy(np.asarray(train.images, dtype=np.float32)).unsqueeze(1)
    labels = torch.from_numpy(np.asarray(train.labels, dtype=np.int64))
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        classifier = DigitClassifier()
        optimizer = torch.optim.Adam(classifier.parameters(), lr=learning_rate)
        sampler_rng = np.random.default_rng(seed)
        n = len(images)
        classifier.train()
        for _ in range(epochs):
            order = sampler_rng.permutation(n)
            for start in range(0, n - batch_size + 1, batch_size):
                idx = order[start : start + batch_size]
                optimizer.zero_grad()
                loss = F.cross_entropy(classifier.logits(images[idx]), labels[idx])
                loss.backward()
                optimizer.step()
    classifier.eval()

    if heldout is not None and (min_accuracy is not None or min_inception is not None):
        accuracy = float(
            (predict_labels(classifier, heldout.images) == heldout.labels).mean()
        )
        score = inception_score(classifier, heldout.images)
        if (min_accuracy is not None and accuracy < min_accuracy) or (
            min_inception is not None and score < min_inception
        ):
            raise TrainingQualityError(
                f"classifier reached accuracy {accuracy:.4f} and inception score "
                f"{score:.3f}, required >= {min_accuracy} and >= {min_inception}"
            )
    return classifier


def _split_bounds(n: int, n_splits: int) -> list[int]:
    return [round(k * n / n_splits) for k in range(n_splits + 1)]


def inception_score(classifier: DigitClassifier, images, n_splits: int = 10) -> float:
    """exp of the mean KL between class conditionals and the split marginal.

    The image set is cut into n_splits contiguous chunks (the last may be
    smaller); the score is the mean over chunks.
    """
    if n_splits < 1:
        raise InvalidArgumentError(f"n_splits must be >= 1, got {n_splits}")
    probs = class_probabilities(classifier, images)
    return inception_score_from_probabilities(probs, n_splits)


def inception_score_from_probabilities(probs: np.ndarray, n_splits: int = 10) -> float:
    """Inception score of precomputed conditional rows p(c|x)."""
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    if n == 0:
        raise InvalidArgumentError("inception score of an empty batch is undefined")
    if n_splits < 1 or n_splits > n:
        raise InvalidArgumentError(f"n_splits must be in [1, {n}], got {n_splits}")
    bounds = _split_bounds(n, n_splits)
    scores = []
    for k in range(n_splits):
        part = probs[bounds[k] : bounds[k + 1]]
        marginal = part.mean(axis=0, keepdims=True)
        log_part = np.zeros_like(part)
        np.log(part, out=log_part, where=part > 0)
        # Classes with zero mass everywhere only appear where part == 0, and
        # those positions are masked out of the sum.
        with np.errstate(divide="ignore", invalid="ignore"):
            kl = np.where(part > 0, part * (log_part - np.log(marginal)), 0.0)
        scores.append(np.exp(kl.sum(axis=1).mean()))
    return float(np.mean(scores))


def macro_f1(classifier: DigitClassifier, generated, true_labels) -> float:
    """Unweighted mean of per-class F1 over the 10 digit classes.

    true_labels are the labels of the ghost images' source objects. A class
    absent from both predictions and truth contributes F1 = 0.
    """
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predictions = predict_labels(classifier, generated)
    if len(predictions) != len(true_labels):
        raise InvalidArgumentError(
            f"{len(predictions)} predictions vs {len(true_labels)} labels"
        )
    return macro_f1_from_predictions(true_labels, predictions)


def macro_f1_from_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    scores = []
    for c in range(N_CLASSES):
        tp = int(np.sum((y_true == c) & (y_pred == c)))
        fp = int(np.sum((y_true != c) & (y_pred == c)))
        fn = int(np.sum((y_true == c) & (y_pred != c)))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def regularized_inception_score(is_value: float, mse1: float, mse2: float) -> float:
    """Inception score minus both mean-squared anchors."""
    if mse1 < 0 or mse2 < 0:
        raise InvalidArgumentError(f"mse terms must be nonnegative, got {mse1}, {mse2}")
    return is_value - mse1 - mse2


@dataclass(frozen=True)
class EvaluationCell:
    """One grid cell: a model (row) evaluated on one test SNR level."""

    row_key: str
    test_beta: float
    inception_score: float
    macro_f1: float
    mse1: float
    mse2: float
    regularized_inception_score: float
    sample_grid: Optional[str] = None

    def __post_init__(self):
        if not 1.0 - 1e-9 <= self.inception_score <= N_CLASSES + 1e-9:
            raise InvalidArgumentError(
                f"inception score {self.inception_score} outside [1, {N_CLASSES}]"
            )
        if not 0.0 <= self.macro_f1 <= 1.0:
            raise InvalidArgumentError(f"macro F1 {self.macro_f1} outside [0, 1]")


@dataclass
class EvaluationReport:
    cells: list[EvaluationCell] = field(default_factory=list)

    def row_keys(self) -> list[str]:
        seen = []
        for cell in self.cells:
            if cell.row_key not in seen:
                seen.append(cell.row_key)
        return seen

    def cell(self, row_key: str, test_beta: float) -> EvaluationCell:
        for c in self.cells:
            if c.row_key == row_key and c.test_beta == test_beta:
                return c
        raise KeyError((row_key, test_beta))

    def to_text_table(self) -> str:
        header = f"{'model':24s} {'test beta':>9s} {'IS':>6s} {'F1':>6s} {'MSE1':>8s} {'MSE2':>8s} {'reg IS':>7s}"
        lines = [header, "-" * len(header)]
        for c in self.cells:
            lines.append(
                f"{c.row_key:24s} {c.test_beta:9.2f} {c.inception_score:6.2f} "
                f"{c.macro_f1:6.2f} {c.mse1:8.4f} {c.mse2:8.4f} "
                f"{c.regularized_inception_score:7.2f}"
            )
        return "\n".join(lines)

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        payload = [c.__dict__ for c in self.cells]
        (directory / "report.json").write_text(json.dumps(payload, indent=2))
        (directory / "report.txt").write_text(self.to_text_table() + "\n")
        return directory / "report.json"

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvaluationReport":
        payload = json.loads(Path(path).read_text())
        return cls(cells=[EvaluationCell(**entry) for entry in payload])
