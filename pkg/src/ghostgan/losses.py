"""Adversarial objective and its two similarity regularizers.

The critic maximizes the score gap between real images and reconstructions
while a gradient penalty keeps it near 1-Lipschitz; in code both appear
negated, as quantities the optimizers minimize. The generator pays for the
critic score of its outputs plus two mean-squared anchors to its input: one
in pixel space (mse1) and one in the manifold spanned by the shadow network
(mse2). All mean-squared terms use the per-pixel mean convention so the
lambda weights do not depend on image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import torch

from .errors import InvalidArgumentError

RngLike = Optional[Union[int, torch.Generator]]


def _as_generator(rng: RngLike, device) -> Optional[torch.Generator]:
    if rng is None or isinstance(rng, torch.Generator):
        return rng
    g = torch.Generator(device=device)
    g.manual_seed(int(rng))
    return g


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


def mse1(generated: torch.Tensor, ghosts: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of the per-image mean squared pixel difference."""
    _check_same_shape(generated, ghosts, "mse1")
    return (generated - ghosts).pow(2).mean()


def mse2(shadow, generated: torch.Tensor, ghosts: torch.Tensor) -> torch.Tensor:
    """mse1 evaluated after pushing both batches through the shadow network.

    The shadow's parameters receive no gradient, but gradients flow through
    its forward pass into `generated`.
    """
    _check_same_shape(generated, ghosts, "mse2")
    return (shadow(generated) - shadow(ghosts)).pow(2).mean()


def gradient_penalty(
    critic,
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    rng: RngLike = None,
) -> torch.Tensor:
    """Mean of (||grad_x critic(x_hat)||_2 - 1)^2 on random interpolates.

    x_hat = t * real + (1 - t) * fake with one uniform t per image.
    """
    _check_same_shape(real_batch, fake_batch, "gradient_penalty")
    if real_batch.shape[0] < 1:
        raise InvalidArgumentError("gradient_penalty needs at least one image")
    n = real_batch.shape[0]
    t_shape = (n,) + (1,) * (real_batch.dim() - 1)
    t = torch.rand(
        t_shape,
        generator=_as_generator(rng, real_batch.device),
        device=real_batch.device,
        dtype=real_batch.dtype,
    )
    if not torch.is_grad_enabled():
        raise InvalidArgumentError(
            "gradient_penalty differentiates the critic w.r.t. its input and "
            "cannot run inside torch.no_grad()"
        )
    interp = (t * real_batch + (1.0 - t) * fake_batch).detach().requires_grad_(True)
    scores = critic(interp)
    if scores.grad_fn is None:
        # Critic ignores its input entirely: zero gradient, penalty (0 - 1)^2.
        return torch.full((), 1.0, dtype=real_batch.dtype, device=real_batch.device)
    grads = torch.autograd.grad(
        outputs=scores,
        inputs=interp,
        grad_outputs=torch.ones_like(scores),
        create_graph=True,
        allow_unused=True,
    )[0]
    if grads is None:
        return torch.full((), 1.0, dtype=real_batch.dtype, device=real_batch.device)
    norms = grads.flatten(1).norm(2, dim=1)
    return (norms - 1.0).pow(2).mean()


def critic_loss(
    critic,
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    gp_weight: float,
    rng: RngLike = None,
) -> torch.Tensor:
    """-mean D(real) + mean D(fake) + gp_weight * gradient penalty."""
    _check_same_shape(real_batch, fake_batch, "critic_loss")
    fake_batch = fake_batch.detach()
    wasserstein = critic(fake_batch).mean() - critic(real_batch).mean()
    return wasserstein + gp_weight * gradient_penalty(critic, real_batch, fake_batch, rng)


@dataclass(frozen=True)
class GeneratorLossTerms:
    total: torch.Tensor
    adversarial: torch.Tensor
    mse1: torch.Tensor
    mse2: torch.Tensor


def generator_loss_terms(
    critic,
    generator,
    shadow,
    ghost_batch: torch.Tensor,
    lambda1: float,
    lambda2: float,
) -> GeneratorLossTerms:
    """-mean D(G(y)) + lambda1 * mse1 + lambda2 * mse2, with the parts kept.

    Gradients flow through the critic's and the shadow's forward passes into
    the generator only; freezing their parameters is the training loop's job.
    """
    generated = generator(ghost_batch)
    adversarial = -critic(generated).mean()
    m1 = mse1(generated, ghost_batch)
    m2 = mse2(shadow, generated, ghost_batch)
    total = adversarial + lambda1 * m1 + lambda2 * m2
    return GeneratorLossTerms(total=total, adversarial=adversarial, mse1=m1, mse2=m2)


def generator_loss(
    critic,
    generator,
    shadow,
    ghost_batch: torch.Tensor,
    lambda1: float,
    lambda2: float,
) -> torch.Tensor:
    return generator_loss_terms(critic, generator, shadow, ghost_batch, lambda1, lambda2).total
