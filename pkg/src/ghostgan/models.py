"""Generator, critic, and the EMA-tracked shadow generator.

The generator is an encoder-decoder mapping (batch, 1, 28, 28) images in
[0, 1] to same-shaped images in [0, 1]: 5 convolutional blocks down
(conv + batch norm + LeakyReLU), 8 transposed-convolution blocks back up,
and a sigmoid output map. The critic is 4 conv + LeakyReLU blocks flattening
to exactly 2048 features, then one linear unit producing an unbounded score.
The critic carries no normalization layers: its Lipschitz constraint comes
from a per-sample gradient penalty, which batch-coupled normalization would
corrupt.

The shadow generator is a non-trainable copy of the generator that tracks it
by exponential moving average: sh <- (1 - alpha) * sh + alpha * g.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigurationError, InvalidArgumentError

IMAGE_SIZE = 28


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 1
    encoder_channels: tuple[int, ...] = (32, 64, 128, 128, 128)
    encoder_strides: tuple[int, ...] = (2, 2, 2, 1, 1)
    decoder_channels: tuple[int, ...] = (128, 128, 64, 64, 32, 32, 16, 16)
    decoder_strides: tuple[int, ...] = (1, 2, 1, 2, 1, 2, 1, 1)
    # Output paddings for the stride-2 blocks so 4 -> 7 -> 14 -> 28 lands exactly.
    decoder_output_paddings: tuple[int, ...] = (0, 0, 0, 1, 0, 1, 0, 0)
    kernel_size: int = 3
    negative_slope: float = 0.2


@dataclass(frozen=True)
class CriticConfig:
    in_channels: int = 1
    channels: tuple[int, ...] = (32, 64, 128, 128)
    strides: tuple[int, ...] = (2, 2, 2, 1)
    flatten_width: int = 2048
    kernel_size: int = 3
    negative_slope: float = 0.2


def _check_image_batch(x: torch.Tensor, in_channels: int) -> None:
    if x.dim() != 4 or x.shape[1] != in_channels or x.shape[2:] != (IMAGE_SIZE, IMAGE_SIZE):
        raise InvalidArgumentError(
            f"expected batch of shape (N, {in_channels}, {IMAGE_SIZE}, {IMAGE_SIZE}), "
            f"got {tuple(x.shape)}"
        )


class Generator(nn.Module):
    """Encoder-decoder reconstruction network, sigmoid output in [0, 1]."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        if len(config.encoder_channels) != len(config.encoder_strides):
            raise ConfigurationError("encoder channels and strides must align")
        if not (
            len(config.decoder_channels)
            == len(config.decoder_strides)
            == len(config.decoder_output_paddings)
        ):
            raise ConfigurationError("decoder channels, strides and paddings must align")
        self.config = config
        k = config.kernel_size
        pad = k // 2

        encoder = []
        c_in = config.in_channels
        for c_out, stride in zip(config.encoder_channels, config.encoder_strides):
            encoder += [
                nn.Conv2d(c_in, c_out, k, stride=stride, padding=pad),
                nn.BatchNorm2d(c_out),
                nn.LeakyReLU(config.negative_slope),
            ]
            c_in = c_out
        self.encoder = nn.Sequential(*encoder)

        decoder = []
        for c_out, stride, out_pad in zip(
            config.decoder_channels, config.decoder_strides, config.decoder_output_paddings
        ):
            decoder += [
                nn.ConvTranspose2d(
                    c_in, c_out, k, stride=stride, padding=pad, output_padding=out_pad
                ),
                nn.BatchNorm2d(c_out),
                nn.LeakyReLU(config.negative_slope),
            ]
            c_in = c_out
        decoder += [nn.Conv2d(c_in, config.in_channels, k, padding=pad), nn.Sigmoid()]
        self.decoder = nn.Sequential(*decoder)

        _probe(self, config.in_channels, expect=(config.in_channels, IMAGE_SIZE, IMAGE_SIZE))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_image_batch(x, self.config.in_channels)
        return self.decoder(self.encoder(x))


class Critic(nn.Module):
    """Convolutional critic producing one unbounded real score per image."""

    def __init__(self, config: CriticConfig = CriticConfig()):
        super().__init__()
        if len(config.channels) != len(config.strides):
            raise ConfigurationError("critic channels and strides must align")
        self.config = config
        k = config.kernel_size
        pad = k // 2

        blocks = []
        c_in = config.in_channels
        size = IMAGE_SIZE
        for c_out, stride in zip(config.channels, config.strides):
            blocks += [
                nn.Conv2d(c_in, c_out, k, stride=stride, padding=pad),
                nn.LeakyReLU(config.negative_slope),
            ]
            c_in = c_out
            size = (size + 2 * pad - k) // stride + 1
        self.features = nn.Sequential(*blocks)

        if c_in * size * size != config.flatten_width:
            raise ConfigurationError(
                f"feature map {c_in}x{size}x{size} flattens to {c_in * size * size}, "
                f"config requires {config.flatten_width}"
            )
        self.head = nn.Linear(config.flatten_width, 1)
        _probe(self, config.in_channels, expect=None)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_image_batch(x, self.config.in_channels)
        feats = self.features(x)
        return self.head(feats.flatten(1)).squeeze(1)


def _probe(module: nn.Module, in_channels: int, expect):
    """Run a probe batch through a freshly built net to verify its contract."""
    was_training = module.training
    module.eval()
    try:
        with torch.no_grad():
            out = module(torch.zeros(2, in_channels, IMAGE_SIZE, IMAGE_SIZE))
    except RuntimeError as exc:
        raise ConfigurationError(f"probe batch failed: {exc}") from exc
    finally:
        module.train(was_training)
    if expect is not None and tuple(out.shape[1:]) != expect:
        raise ConfigurationError(
            f"configuration produces output shape {tuple(out.shape[1:])}, expected {expect}"
        )
    if expect is None and out.shape != (2,):
        raise ConfigurationError(f"critic probe produced shape {tuple(out.shape)}, expected (2,)")


def init_generator(config: GeneratorConfig = GeneratorConfig(), seed: int = 0) -> Generator:
    """Build a generator with weights deterministic in `seed`."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return Generator(config)


def init_critic(config: CriticConfig = CriticConfig(), seed: int = 0) -> Critic:
    """Build a critic with weights deterministic in `seed`."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return Critic(config)


class ShadowGenerator(nn.Module):
    """Non-trainable EMA copy of a generator.

    Starts as an exact copy. update() blends every parameter (and floating
    buffer) toward the tracked generator: sh <- (1 - alpha) * sh + alpha * g.
    Gradients flow through its forward pass into the input, never into its
    own parameters. Forward always runs in evaluation mode so outputs are
    batch-size independent.
    """

    def __init__(self, generator: Generator):
        super().__init__()
        self.net = copy.deepcopy(generator)
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.net.eval()
        return self.net(x)

    def train(self, mode: bool = True):
        # The shadow never trains; keep the wrapped net in eval permanently.
        super().train(mode)
        self.net.eval()
        return self

    @torch.no_grad()
    def update(self, generator: Generator, alpha: float) -> None:
        if not 0.0 < alpha <= 1.0:
            raise InvalidArgumentError(f"update rate must be in (0, 1], got {alpha}")
        shadow_params = dict(self.net.named_parameters())
        gen_params = dict(generator.named_parameters())
        if shadow_params.keys() != gen_params.keys():
            raise InvalidArgumentError("shadow and generator parameter sets differ")
        for name, p_sh in shadow_params.items():
            p = gen_params[name]
            if p_sh.shape != p.shape:
                raise InvalidArgumentError(f"shape mismatch for parameter {name}")
            p_sh.mul_(1.0 - alpha).add_(p, alpha=alpha)
        for (name, b_sh), b in zip(self.net.named_buffers(), generator.buffers()):
            if b_sh.dtype.is_floating_point:
                b_sh.mul_(1.0 - alpha).add_(b, alpha=alpha)
            else:
                b_sh.copy_(b)


def shadow_update(shadow: ShadowGenerator, generator: Generator, alpha: float) -> ShadowGenerator:
    shadow.update(generator, alpha)
    return shadow
