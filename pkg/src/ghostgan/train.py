"""Adversarial training loop with checkpointing and metric logging.

Each generator step runs `critic_iters` critic updates, one generator update,
then one shadow EMA update. Batches are drawn uniformly with replacement; an
epoch is one nominal pass over the ghost set (count // batch_size generator
steps). All randomness flows through two explicit streams (a numpy generator
for batch indices, a torch generator for interpolation draws) whose states
are checkpointed, so resuming reproduces the uninterrupted run bit for bit
on the same platform.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .cgi import GhostDataset
from .data import LabeledImageSet
from .errors import (
    IncompatibleCacheError,
    InvalidArgumentError,
    NonFiniteLossError,
)
from .evaluate import (
    DigitClassifier,
    inception_score,
    macro_f1,
    regularized_inception_score,
)
from .losses import generator_loss_terms, gradient_penalty
from .models import (
    Generator,
    GeneratorConfig,
    ShadowGenerator,
    init_critic,
    init_generator,
)
from .plots import save_image_grid

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingConfig:
    lambda1: float = 10.0
    lambda2: float = 10.0
    alpha: float = 0.1
    gp_weight: float = 10.0
    critic_iters: int = 5
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0
    beta_train: float = 0.5
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9
    checkpoint_interval: int = 10
    eval_subset_size: int = 2048
    n_splits: int = 10
    log_macro_f1: bool = False
    sample_grid_size: int = 8

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidArgumentError("lambda weights must be nonnegative")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidArgumentError("alpha must be in (0, 1]")
        if self.gp_weight < 0:
            raise InvalidArgumentError("gp_weight must be nonnegative")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning rate must be positive")
        if self.batch_size < 2:
            raise InvalidArgumentError("batch_size must be >= 2 (penalty interpolates pairs)")
        if self.epochs < 1 or self.critic_iters < 1:
            raise InvalidArgumentError("epochs and critic_iters must be >= 1")
        if self.checkpoint_interval < 1:
            raise InvalidArgumentError("checkpoint_interval must be >= 1")


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    generator_loss: float
    critic_loss: float
    mse1: float
    mse2: float
    inception_score: float
    regularized_inception_score: float
    macro_f1: Optional[float]
    wall_time: float

    def __post_init__(self):
        if self.mse1 < 0 or self.mse2 < 0:
            raise InvalidArgumentError("mse terms must be nonnegative")
        values = [
            self.generator_loss,
            self.critic_loss,
            self.mse1,
            self.mse2,
            self.inception_score,
            self.regularized_inception_score,
            self.wall_time,
        ]
        if self.macro_f1 is not None:
            values.append(self.macro_f1)
        if not all(math.isfinite(v) for v in values):
            raise InvalidArgumentError(f"metrics record contains non-finite entries: {values}")


def _ensure_finite(value: torch.Tensor, term: str, epoch: int, step: int) -> None:
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(
            f"{term} became {value.item()} at epoch {epoch}, step {step}"
        )


def _forward_batched(module, x: torch.Tensor, batch_size: int = 512) -> torch.Tensor:
    with torch.no_grad():
        return torch.cat(
            [module(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        )


class Trainer:
    """Owns the networks, optimizers, RNG streams, and the run directory."""

    def __init__(
        self,
        config: TrainingConfig,
        ghosts: GhostDataset,
        reals: LabeledImageSet,
        classifier: DigitClassifier,
        run_dir: Union[str, Path],
    ):
        if len(ghosts) == 0 or len(reals) == 0:
            raise InvalidArgumentError("training needs nonempty ghost and real sets")
        if ghosts.ghosts.shape[1:] != reals.images.shape[1:]:
            raise InvalidArgumentError(
                f"ghost images {ghosts.ghosts.shape[1:]} and real images "
                f"{reals.images.shape[1:]} have mismatched sizes"
            )
        if reals.source_indices is not None:
            overlap = np.intersect1d(ghosts.source_indices, reals.source_indices)
            if overlap.size:
                raise InvalidArgumentError(
                    f"ghost and real sets share {overlap.size} source images; "
                    "training must be unpaired"
                )
        if len(ghosts) < config.batch_size:
            raise InvalidArgumentError(
                f"batch size {config.batch_size} exceeds ghost set size {len(ghosts)}"
            )

        self.config = config
        self.classifier = classifier
        self.run_dir = Path(run_dir)
        self.checkpoint_dir = self.run_dir / "checkpoints"
        self.samples_dir = self.run_dir / "samples"
        self.metrics_path = self.run_dir / "metrics.jsonl"
        for d in (self.run_dir, self.checkpoint_dir, self.samples_dir):
            d.mkdir(parents=True, exist_ok=True)

        self.ghost_images = torch.from_numpy(ghosts.ghosts).unsqueeze(1).float()
        self.ghost_labels = ghosts.labels
        self.real_images = torch.from_numpy(np.asarray(reals.images, dtype=np.float32)).unsqueeze(1)

        self.generator = init_generator(seed=config.seed)
        self.critic = init_critic(seed=config.seed + 1)
        self.shadow = ShadowGenerator(self.generator)
        self.opt_g = torch.optim.Adam(
            self.generator.parameters(),
            lr=config.learning_rate,
            betas=(config.adam_beta1, config.adam_beta2),
        )
        self.opt_d = torch.optim.Adam(
            self.critic.parameters(),
            lr=config.learning_rate,
            betas=(config.adam_beta1, config.adam_beta2),
        )
        self.batch_rng = np.random.default_rng([config.seed, 0])
        self.gp_rng = torch.Generator().manual_seed(config.seed + 1_000_003)
        # Fixed evaluation subset, independent of the training streams.
        eval_rng = np.random.default_rng([config.seed, 1])
        subset = min(config.eval_subset_size, len(ghosts))
        self.eval_indices = np.sort(eval_rng.choice(len(ghosts), size=subset, replace=False))
        self.epoch = 0
        self.records: list[MetricsRecord] = []
        self.total_wall_time = 0.0

    @property
    def steps_per_epoch(self) -> int:
        return len(self.ghost_images) // self.config.batch_size

    def _ghost_batch(self) -> torch.Tensor:
        idx = self.batch_rng.integers(0, len(self.ghost_images), size=self.config.batch_size)
        return self.ghost_images[idx]

    def _real_batch(self) -> torch.Tensor:
        idx = self.batch_rng.integers(0, len(self.real_images), size=self.config.batch_size)
        return self.real_images[idx]

    def _critic_step(self, epoch: int, step: int) -> float:
        cfg = self.config
        self.opt_d.zero_grad(set_to_none=True)
        real = self._real_batch()
        with torch.no_grad():
            fake = self.generator(self._ghost_batch())
        # Same term order as losses.critic_loss, kept separate for diagnostics.
        wasserstein = self.critic(fake).mean() - self.critic(real).mean()
        _ensure_finite(wasserstein, "critic Wasserstein term", epoch, step)
        penalty = gradient_penalty(self.critic, real, fake, rng=self.gp_rng)
        _ensure_finite(penalty, "gradient penalty", epoch, step)
        loss = wasserstein + cfg.gp_weight * penalty
        loss.backward()
        self.opt_d.step()
        return loss.item()

    def _generator_step(self, epoch: int, step: int) -> tuple[float, float, float]:
        cfg = self.config
        for p in self.critic.parameters():
            p.requires_grad_(False)
        try:
            self.opt_g.zero_grad(set_to_none=True)
            terms = generator_loss_terms(
                self.critic, self.generator, self.shadow,
                self._ghost_batch(), cfg.lambda1, cfg.lambda2,
            )
            _ensure_finite(terms.adversarial, "generator adversarial term", epoch, step)
            _ensure_finite(terms.mse1, "mse1", epoch, step)
            _ensure_finite(terms.mse2, "mse2", epoch, step)
            terms.total.backward()
            self.opt_g.step()
        finally:
            for p in self.critic.parameters():
                p.requires_grad_(True)
        return terms.total.item(), terms.mse1.item(), terms.mse2.item()

    def _epoch_metrics(self, gen_loss: float, critic_loss: float) -> MetricsRecord:
        cfg = self.config
        self.generator.eval()
        try:
            ghosts = self.ghost_images[self.eval_indices]
            generated = _forward_batched(self.generator, ghosts)
            shadow_gen = _forward_batched(self.shadow, generated)
            shadow_ghost = _forward_batched(self.shadow, ghosts)
            m1 = (generated - ghosts).pow(2).mean().item()
            m2 = (shadow_gen - shadow_ghost).pow(2).mean().item()
            n_splits = min(cfg.n_splits, len(self.eval_indices))
            score = inception_score(self.classifier, generated.squeeze(1), n_splits)
            f1: Optional[float] = None
            labels = self.ghost_labels[self.eval_indices]
            if cfg.log_macro_f1 and np.all(labels >= 0):
                f1 = macro_f1(self.classifier, generated.squeeze(1), labels)
            self._save_samples(ghosts, generated)
        finally:
            self.generator.train()
        return MetricsRecord(
            epoch=self.epoch,
            generator_loss=gen_loss,
            critic_loss=critic_loss,
            mse1=m1,
            mse2=m2,
            inception_score=score,
            regularized_inception_score=regularized_inception_score(score, m1, m2),
            macro_f1=f1,
            wall_time=self.total_wall_time,
        )

    def _save_samples(self, ghosts: torch.Tensor, generated: torch.Tensor) -> None:
        k = min(self.config.sample_grid_size, len(ghosts))
        save_image_grid(
            [ghosts[:k, 0].numpy(), generated[:k, 0].numpy()],
            self.samples_dir / f"epoch_{self.epoch:04d}.png",
        )

    def _rewrite_metrics_log(self) -> None:
        with open(self.metrics_path, "w") as f:
            for record in self.records:
                f.write(json.dumps(dataclasses.asdict(record)) + "\n")

    def _append_metrics_log(self, record: MetricsRecord) -> None:
        with open(self.metrics_path, "a") as f:
            f.write(json.dumps(dataclasses.asdict(record)) + "\n")

    def checkpoint_path(self, epoch: int) -> Path:
        return self.checkpoint_dir / f"epoch_{epoch:04d}.pt"

    @property
    def latest_path(self) -> Path:
        return self.checkpoint_dir / "latest.pt"

    def save_checkpoint(self) -> Path:
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "epoch": self.epoch,
            "generator": self.generator.state_dict(),
            "critic": self.critic.state_dict(),
            "shadow": self.shadow.net.state_dict(),
            "opt_generator": self.opt_g.state_dict(),
            "opt_critic": self.opt_d.state_dict(),
            "batch_rng_state": self.batch_rng.bit_generator.state,
            "gp_rng_state": self.gp_rng.get_state(),
            "config": dataclasses.asdict(self.config),
            "generator_config": dataclasses.asdict(self.generator.config),
            "critic_config": dataclasses.asdict(self.critic.config),
            "records": [dataclasses.asdict(r) for r in self.records],
            "total_wall_time": self.total_wall_time,
        }
        path = self.checkpoint_path(self.epoch)
        torch.save(payload, path)
        torch.save(payload, self.latest_path)
        return path

    def restore(self, path: Union[str, Path]) -> None:
        payload = load_checkpoint(path)
        stored = TrainingConfig(**payload["config"])
        current = dataclasses.replace(self.config, epochs=stored.epochs)
        if stored != current:
            raise InvalidArgumentError(
                "checkpoint was produced by a different configuration; "
                "only the epoch budget may change on resume"
            )
        self.generator.load_state_dict(payload["generator"])
        self.critic.load_state_dict(payload["critic"])
        self.shadow.net.load_state_dict(payload["shadow"])
        self.opt_g.load_state_dict(payload["opt_generator"])
        self.opt_d.load_state_dict(payload["opt_critic"])
        self.batch_rng.bit_generator.state = payload["batch_rng_state"]
        self.gp_rng.set_state(payload["gp_rng_state"])
        self.epoch = payload["epoch"]
        self.records = [MetricsRecord(**r) for r in payload["records"]]
        self.total_wall_time = payload["total_wall_time"]
        self._rewrite_metrics_log()

    def run(self, log=print) -> tuple[Path, list[MetricsRecord]]:
        cfg = self.config
        if self.epoch == 0:
            self._rewrite_metrics_log()
        self.generator.train()
        self.critic.train()
        while self.epoch < cfg.epochs:
            started = time.perf_counter()
            epoch = self.epoch + 1
            gen_losses, critic_losses = [], []
            for step in range(self.steps_per_epoch):
                for _ in range(cfg.critic_iters):
                    critic_losses.append(self._critic_step(epoch, step))
                total, _, _ = self._generator_step(epoch, step)
                gen_losses.append(total)
                self.shadow.update(self.generator, cfg.alpha)
            self.epoch = epoch
            self.total_wall_time += time.perf_counter() - started
            record = self._epoch_metrics(
                float(np.mean(gen_losses)), float(np.mean(critic_losses))
            )
            self.records.append(record)
            self._append_metrics_log(record)
            if log is not None:
                log(
                    f"epoch {record.epoch}/{cfg.epochs} "
                    f"g={record.generator_loss:+.3f} d={record.critic_loss:+.3f} "
                    f"mse1={record.mse1:.4f} mse2={record.mse2:.4f} "
                    f"IS={record.inception_score:.2f} "
                    f"regIS={record.regularized_inception_score:.2f}"
                )
            if self.epoch % cfg.checkpoint_interval == 0 or self.epoch == cfg.epochs:
                self.save_checkpoint()
        if not self.checkpoint_path(self.epoch).exists():
            self.save_checkpoint()
        return self.checkpoint_path(self.epoch), self.records


def train(
    config: TrainingConfig,
    ghosts: GhostDataset,
    reals: LabeledImageSet,
    classifier: DigitClassifier,
    run_dir: Union[str, Path],
    resume: bool = False,
    log=print,
) -> tuple[Path, list[MetricsRecord]]:
    """Train on unpaired ghost/real sets; returns (final checkpoint, records).

    With resume=True, restores the latest checkpoint in run_dir and continues
    to the configured epoch budget, reproducing the uninterrupted run.
    """
    trainer = Trainer(config, ghosts, reals, classifier, run_dir)
    if resume:
        if not trainer.latest_path.exists():
            raise InvalidArgumentError(f"no checkpoint to resume from in {trainer.checkpoint_dir}")
        trainer.restore(trainer.latest_path)
    return trainer.run(log=log)


def load_checkpoint(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"checkpoint {path} does not exist")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise IncompatibleCacheError(
            f"{path} has checkpoint format {version}, expected {CHECKPOINT_FORMAT_VERSION}"
        )
    return payload


def load_models(path: Union[str, Path]) -> tuple[Generator, ShadowGenerator, TrainingConfig]:
    """Rebuild the generator and shadow network from a checkpoint, eval-ready."""
    payload = load_checkpoint(path)
    gen_config = GeneratorConfig(**payload["generator_config"])
    generator = Generator(gen_config)
    generator.load_state_dict(payload["generator"])
    generator.eval()
    shadow = ShadowGenerator(generator)
    shadow.net.load_state_dict(payload["shadow"])
    return generator, shadow, TrainingConfig(**payload["config"])
