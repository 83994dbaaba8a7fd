"""Command-line entry point.

Pipeline order: prepare-data -> simulate -> train -> eval / ablate / plot.
Each command validates its inputs up front and names the producing command
when a required artifact is missing. All randomness comes from the named
seeds in the configuration, so reruns are deterministic on one platform.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Optional

import click
import numpy as np
import torch

from . import cgi, data, grids
from .config import RunConfig, load_run_config
from .errors import (
    ConfigurationError,
    DependencyError,
    IncompatibleCacheError,
    IngestionError,
    InvalidArgumentError,
    NonFiniteLossError,
    TrainingQualityError,
)
from .evaluate import DigitClassifier, EvaluationReport, train_classifier
from .plots import plot_metric_curves
from .train import MetricsRecord, TrainingConfig, train

_ERRORS = (
    ConfigurationError,
    DependencyError,
    IncompatibleCacheError,
    IngestionError,
    InvalidArgumentError,
    NonFiniteLossError,
    TrainingQualityError,
)


class Paths:
    """Workspace layout shared by every command."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.workspace = Path(config.workspace)
        self.prepared = self.workspace / "prepared"
        self.ghosts = self.workspace / "ghosts"
        self.runs = self.workspace / "runs"
        self.reports = self.workspace / "reports"
        self.classifier = self.workspace / "classifier.pt"

    def split_meta(self) -> Path:
        return self.prepared / "split.json"

    def ghost_cache(self, m: int, split: str) -> Path:
        return self.ghosts / f"{split}_m{m}.npz"

    def run_dir(self, name: str) -> Path:
        return self.runs / name

    def train_run_name(self) -> str:
        section = self.config.train
        if section.run_name:
            return section.run_name
        return f"m{section.m}_l1{section.lambda1:g}_l2{section.lambda2:g}"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DependencyError(f"{path} is missing; run `ghostgan {producer}` first")
    return path


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML overrides applied on top of the profile.")
@click.option("--profile", type=click.Choice(["smoke", "paper"]), default="smoke",
              show_default=True, help="Base configuration profile.")
@click.option("--seed", type=int, default=None, help="Override every named seed.")
@click.option("--out", type=click.Path(), default=None, help="Workspace root override.")
@click.pass_context
def main(ctx, config_path, profile, seed, out):
    """Ghost-image simulation, unpaired adversarial training, and evaluation."""
    try:
        config = load_run_config(profile, config_path, seed, out)
    except _ERRORS as exc:
        raise click.ClickException(str(exc))
    ctx.obj = Paths(config)


def _command(func):
    """Map package errors onto clean CLI failures (exit code 1)."""

    def wrapper(paths: Paths, **kwargs):
        try:
            func(paths, **kwargs)
        except _ERRORS as exc:
            raise click.ClickException(str(exc))

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return click.pass_obj(wrapper)


@main.command("prepare-data")
@_command
def cmd_prepare_data(paths: Paths):
    """Load MNIST, make the unpaired split, and cache all pieces."""
    config = paths.config
    expected_meta = {"format_version": 1, "seed": config.data.seed}
    outputs = [
        paths.prepared / "full_train.npz",
        paths.prepared / "test.npz",
        paths.prepared / "subset_a.npz",
        paths.prepared / "subset_b.npz",
    ]
    if all(p.exists() for p in outputs) and paths.split_meta().exists():
        stored = json.loads(paths.split_meta().read_text())
        if {k: stored.get(k) for k in expected_meta} == expected_meta:
            click.echo("prepared data is up to date")
            return

    train_set, test_set = data.load_mnist(config.data.path)
    split = data.unpaired_split(train_set, seed=config.data.seed)
    subset_a = train_set.subset(split.ghost_source_indices, "subset_A")
    subset_b = train_set.subset(split.ground_truth_indices, "subset_B")

    data.cache_dataset(train_set, paths.prepared / "full_train.npz")
    data.cache_dataset(test_set, paths.prepared / "test.npz")
    data.cache_dataset(subset_a, paths.prepared / "subset_a.npz")
    data.cache_dataset(subset_b, paths.prepared / "subset_b.npz")
    paths.split_meta().write_text(
        json.dumps({**expected_meta, "train_count": len(train_set), "test_count": len(test_set)})
    )
    click.echo(
        f"prepared {len(train_set)} train / {len(test_set)} test images; "
        f"subsets A/B of {len(subset_a)}/{len(subset_b)}"
    )


def _ghost_cache_is_current(path: Path, m: int, bank_seed: int) -> bool:
    if not path.exists():
        return False
    try:
        cached = data.load_cache(path)
    except IncompatibleCacheError:
        return False
    return cached.m_patterns == m and cached.bank_seed == bank_seed


@main.command("simulate")
@_command
def cmd_simulate(paths: Paths):
    """Produce ghost-image caches for every configured pattern count."""
    config = paths.config
    section = config.simulate
    if not section.m_values:
        click.echo("no pattern counts requested; nothing to simulate")
        return
    subset_a = data.load_cache(_require(paths.prepared / "subset_a.npz", "prepare-data"))
    test_set = data.load_cache(_require(paths.prepared / "test.npz", "prepare-data"))
    master = cgi.generate_speckle_bank(section.master_m, 28, 28, seed=section.bank_seed)

    jobs = [
        ("train", subset_a, section.max_train_ghosts),
        ("test", test_set, section.max_test_ghosts),
    ]
    for m in section.m_values:
        bank = master.first(m)
        for split, image_set, cap in jobs:
            target = paths.ghost_cache(m, split)
            if _ghost_cache_is_current(target, m, section.bank_seed):
                click.echo(f"{target} is up to date")
                continue
            capped = image_set if cap is None else image_set.take(cap)
            sources = (
                capped.source_indices
                if capped.source_indices is not None
                else np.arange(len(capped))
            )
            dataset = cgi.build_ghost_dataset(
                capped.as_object_images(), bank, source_indices=sources
            )
            data.cache_dataset(dataset, target)
            click.echo(
                f"wrote {target} ({len(dataset)} ghosts, beta={dataset.beta:g})"
            )


def _load_classifier(path: Path) -> DigitClassifier:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    classifier = DigitClassifier()
    classifier.load_state_dict(payload["state_dict"])
    classifier.eval()
    return classifier


def ensure_classifier(paths: Paths) -> DigitClassifier:
    """Load the cached metric classifier, training it on first use."""
    if paths.classifier.exists():
        return _load_classifier(paths.classifier)
    config = paths.config.eval
    full_train = data.load_cache(_require(paths.prepared / "full_train.npz", "prepare-data"))
    test_set = data.load_cache(_require(paths.prepared / "test.npz", "prepare-data"))
    if config.classifier_max_images is not None:
        full_train = full_train.take(config.classifier_max_images)
    click.echo(
        f"training metric classifier on {len(full_train)} images "
        f"({config.classifier_epochs} epochs)"
    )
    classifier = train_classifier(
        full_train,
        seed=config.classifier_seed,
        epochs=config.classifier_epochs,
        heldout=test_set,
        min_accuracy=config.min_accuracy,
        min_inception=config.min_inception,
    )
    torch.save(
        {
            "state_dict": classifier.state_dict(),
            "meta": {
                "seed": config.classifier_seed,
                "epochs": config.classifier_epochs,
                "train_count": len(full_train),
            },
        },
        paths.classifier,
    )
    return classifier


def _training_config(paths: Paths, **overrides) -> TrainingConfig:
    section = paths.config.train
    fields = dict(
        lambda1=section.lambda1,
        lambda2=section.lambda2,
        alpha=section.alpha,
        gp_weight=section.gp_weight,
        critic_iters=section.critic_iters,
        learning_rate=section.learning_rate,
        batch_size=section.batch_size,
        epochs=section.epochs,
        seed=section.seed,
        beta_train=cgi.snr_coefficient(section.m, 784),
        checkpoint_interval=section.checkpoint_interval,
        eval_subset_size=section.eval_subset_size,
        n_splits=section.n_splits,
        log_macro_f1=section.log_macro_f1,
        sample_grid_size=section.sample_grid_size,
    )
    fields.update(overrides)
    return TrainingConfig(**fields)


def _run_training(
    paths: Paths,
    run_name: str,
    config: TrainingConfig,
    m: int,
    max_train_images: Optional[int],
    resume: bool,
) -> tuple[Path, list[MetricsRecord]]:
    ghosts = data.load_cache(_require(paths.ghost_cache(m, "train"), "simulate"))
    reals = data.load_cache(_require(paths.prepared / "subset_b.npz", "prepare-data"))
    if max_train_images is not None:
        ghosts = ghosts.take(max_train_images)
        reals = reals.take(max_train_images)
    classifier = ensure_classifier(paths)
    run_dir = paths.run_dir(run_name)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(paths.config.to_yaml())
    return train(
        config, ghosts, reals, classifier, run_dir, resume=resume, log=click.echo
    )


@main.command("train")
@click.option("--resume", is_flag=True, help="Continue from the latest checkpoint.")
@_command
def cmd_train(paths: Paths, resume: bool):
    """Train the reconstruction network on the configured ghost cache."""
    section = paths.config.train
    ckpt, records = _run_training(
        paths,
        paths.train_run_name(),
        _training_config(paths),
        section.m,
        section.max_train_images,
        resume,
    )
    final = records[-1]
    click.echo(f"final checkpoint: {ckpt}")
    click.echo(json.dumps(dataclasses.asdict(final), indent=2))


def _load_test_sets(paths: Paths, test_betas) -> dict[float, cgi.GhostDataset]:
    out = {}
    for beta in test_betas:
        m = round(beta * 784)
        out[beta] = data.load_cache(_require(paths.ghost_cache(m, "test"), "simulate"))
    return out


@main.command("eval")
@_command
def cmd_eval(paths: Paths):
    """Evaluate configured checkpoints on every requested test SNR level."""
    section = paths.config.eval
    out_dir = paths.reports / "cross_beta"
    if not section.checkpoints:
        report = EvaluationReport()
        report.save(out_dir)
        click.echo(f"no checkpoints configured; empty report at {out_dir}")
        return
    checkpoints = {
        float(beta): _require(Path(path), "train")
        for beta, path in section.checkpoints.items()
    }
    test_sets = _load_test_sets(paths, section.test_betas)
    classifier = ensure_classifier(paths)
    report = grids.cross_beta_evaluation(
        checkpoints,
        test_sets,
        classifier,
        out_dir=out_dir,
        n_splits=section.n_splits,
        max_images=section.max_images,
    )
    click.echo(report.to_text_table())
    click.echo(f"report written to {out_dir}")


@main.command("ablate")
@click.option("--resume", is_flag=True, help="Resume interrupted ablation trainings.")
@_command
def cmd_ablate(paths: Paths, resume: bool):
    """Train one model per regularizer pair, then tabulate all of them."""
    section = paths.config.ablate
    epochs = section.epochs or paths.config.train.epochs
    checkpoints = {}
    for l1, l2 in section.lambda_pairs:
        run_name = f"ablate_m{section.m}_l1{l1:g}_l2{l2:g}"
        config = _training_config(
            paths,
            lambda1=float(l1),
            lambda2=float(l2),
            epochs=epochs,
            beta_train=cgi.snr_coefficient(section.m, 784),
        )
        final_ckpt = paths.run_dir(run_name) / "checkpoints" / f"epoch_{epochs:04d}.pt"
        if not final_ckpt.exists():
            click.echo(f"training ablation cell l1={l1:g} l2={l2:g}")
            final_ckpt, _ = _run_training(
                paths, run_name, config, section.m, section.max_train_images,
                resume and (paths.run_dir(run_name) / "checkpoints" / "latest.pt").exists(),
            )
        checkpoints[(float(l1), float(l2))] = final_ckpt
    test_sets = _load_test_sets(paths, paths.config.eval.test_betas)
    classifier = ensure_classifier(paths)
    out_dir = paths.reports / "ablation"
    report = grids.ablation_grid(
        checkpoints,
        test_sets,
        classifier,
        out_dir=out_dir,
        n_splits=paths.config.eval.n_splits,
        max_images=paths.config.eval.max_images,
    )
    click.echo(report.to_text_table())
    click.echo(f"report written to {out_dir}")


@main.command("plot")
@_command
def cmd_plot(paths: Paths):
    """Render the four metric curves for a finished run."""
    section = paths.config.plot
    run_dir = Path(section.run_dir) if section.run_dir else paths.run_dir(paths.train_run_name())
    metrics_path = run_dir / "metrics.jsonl"
    _require(metrics_path, "train")
    records = [json.loads(line) for line in metrics_path.read_text().splitlines() if line]
    if not records:
        raise DependencyError(f"{metrics_path} is empty; run `ghostgan train` first")
    out_dir = Path(section.out) if section.out else paths.workspace / "plots" / run_dir.name
    written = plot_metric_curves(records, out_dir)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
