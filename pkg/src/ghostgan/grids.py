"""Cross-SNR and regularization-ablation evaluation grids.

Every grid cell evaluates one trained model on one test ghost set: the model
reconstructs the ghosts, the classifier scores the reconstructions, and the
cell records inception score, macro F1 against the source labels, both
mean-squared anchors, the regularized inception score, and a sample grid.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import torch

from .cgi import GhostDataset
from .errors import InvalidArgumentError
from .evaluate import (
    DigitClassifier,
    EvaluationCell,
    EvaluationReport,
    inception_score,
    macro_f1,
    regularized_inception_score,
)
from .models import Generator, ShadowGenerator
from .plots import save_image_grid
from .train import load_models

CheckpointLike = Union[str, Path, tuple[Generator, ShadowGenerator]]


def _resolve_model(entry: CheckpointLike, cell_name: str) -> tuple[Generator, ShadowGenerator]:
    if isinstance(entry, (str, Path)):
        path = Path(entry)
        if not path.exists():
            raise InvalidArgumentError(f"missing checkpoint for cell {cell_name}: {path}")
        generator, shadow, _ = load_models(path)
        return generator, shadow
    generator, shadow = entry
    return generator, shadow


def evaluate_model_on_set(
    generator: Generator,
    shadow: ShadowGenerator,
    test_set: GhostDataset,
    classifier: DigitClassifier,
    row_key: str,
    n_splits: int = 10,
    max_images: Optional[int] = None,
    sample_grid_path: Optional[Union[str, Path]] = None,
    batch_size: int = 512,
) -> EvaluationCell:
    """Reconstruct a ghost test set and score the reconstructions."""
    if len(test_set) == 0:
        raise InvalidArgumentError("cannot evaluate on an empty ghost set")
    count = len(test_set) if max_images is None else min(max_images, len(test_set))
    ghosts = torch.from_numpy(test_set.ghosts[:count]).unsqueeze(1).float()
    labels = test_set.labels[:count]

    generator.eval()
    with torch.no_grad():
        generated = torch.cat(
            [generator(ghosts[i : i + batch_size]) for i in range(0, count, batch_size)]
        )
        shadow_gen = torch.cat(
            [shadow(generated[i : i + batch_size]) for i in range(0, count, batch_size)]
        )
        shadow_ghost = torch.cat(
            [shadow(ghosts[i : i + batch_size]) for i in range(0, count, batch_size)]
        )
    m1 = (generated - ghosts).pow(2).mean().item()
    m2 = (shadow_gen - shadow_ghost).pow(2).mean().item()
    score = inception_score(classifier, generated.squeeze(1), n_splits)
    f1 = macro_f1(classifier, generated.squeeze(1), labels)

    grid_path = None
    if sample_grid_path is not None:
        k = min(8, count)
        save_image_grid(
            [ghosts[:k, 0].numpy(), generated[:k, 0].numpy()], sample_grid_path
        )
        grid_path = str(sample_grid_path)

    return EvaluationCell(
        row_key=row_key,
        test_beta=test_set.beta,
        inception_score=score,
        macro_f1=f1,
        mse1=m1,
        mse2=m2,
        regularized_inception_score=regularized_inception_score(score, m1, m2),
        sample_grid=grid_path,
    )


def _run_grid(
    rows: Sequence[tuple[str, CheckpointLike]],
    test_sets: Mapping[float, GhostDataset],
    classifier: DigitClassifier,
    out_dir: Optional[Union[str, Path]],
    n_splits: int,
    max_images: Optional[int],
) -> EvaluationReport:
    report = EvaluationReport()
    for row_key, entry in rows:
        generator = shadow = None
        for test_beta in sorted(test_sets):
            cell_name = f"{row_key} / test beta={test_beta:g}"
            if generator is None:
                generator, shadow = _resolve_model(entry, cell_name)
            grid_path = None
            if out_dir is not None:
                safe_key = row_key.replace("=", "").replace(",", "_").replace(" ", "")
                grid_path = Path(out_dir) / "grids" / f"{safe_key}__beta{test_beta:g}.png"
            report.cells.append(
                evaluate_model_on_set(
                    generator,
                    shadow,
                    test_sets[test_beta],
                    classifier,
                    row_key,
                    n_splits=n_splits,
                    max_images=max_images,
                    sample_grid_path=grid_path,
                )
            )
    if out_dir is not None and report.cells:
        report.save(out_dir)
    return report


def cross_beta_evaluation(
    checkpoints: Mapping[float, CheckpointLike],
    test_sets: Mapping[float, GhostDataset],
    classifier: DigitClassifier,
    out_dir: Optional[Union[str, Path]] = None,
    n_splits: int = 10,
    max_images: Optional[int] = None,
) -> EvaluationReport:
    """Models trained at different SNR levels, each scored on every test level."""
    rows = [(f"train beta={beta:g}", entry) for beta, entry in sorted(checkpoints.items())]
    return _run_grid(rows, test_sets, classifier, out_dir, n_splits, max_images)


def ablation_grid(
    checkpoints: Mapping[tuple[float, float], CheckpointLike],
    test_sets: Mapping[float, GhostDataset],
    classifier: DigitClassifier,
    out_dir: Optional[Union[str, Path]] = None,
    n_splits: int = 10,
    max_images: Optional[int] = None,
) -> EvaluationReport:
    """Models trained with different (lambda1, lambda2) pairs, scored per test level."""
    rows = [
        (f"l1={l1:g}, l2={l2:g}", entry)
        for (l1, l2), entry in sorted(checkpoints.items())
    ]
    return _run_grid(rows, test_sets, classifier, out_dir, n_splits, max_images)
