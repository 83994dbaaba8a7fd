import math

import pytest
import torch
from torch import nn

from ghostgan.errors import InvalidArgumentError
from ghostgan.losses import (
    critic_loss,
    generator_loss,
    generator_loss_terms,
    gradient_penalty,
    mse1,
    mse2,
)
from ghostgan.models import (
    CriticConfig,
    GeneratorConfig,
    ShadowGenerator,
    init_critic,
    init_generator,
)

MICRO_GEN = GeneratorConfig(encoder_channels=(2, 2, 2, 2, 2), decoder_channels=(2, 2, 2, 2, 2, 2, 2, 2))
MICRO_CRITIC = CriticConfig(channels=(2, 2, 2, 2), flatten_width=32)


class LinearCritic(nn.Module):
    """D(x) = <w, x> + b for a fixed weight image."""

    def __init__(self, weight, bias=0.0):
        super().__init__()
        self.weight = weight
        self.bias = bias

    def forward(self, x):
        return (x.flatten(1) * self.weight.flatten()).sum(dim=1) + self.bias


class ConstantCritic(nn.Module):
    def __init__(self, value):
        super().__init__()
        self.value = value

    def forward(self, x):
        return torch.full((x.shape[0],), self.value, dtype=x.dtype)


class LinearShadow(nn.Module):
    """Fixed linear map on flattened 2-pixel inputs."""

    def __init__(self, matrix):
        super().__init__()
        self.matrix = matrix

    def forward(self, x):
        return (x.flatten(1) @ self.matrix.T).reshape(x.shape)


class Identity(nn.Module):
    def forward(self, x):
        return x


class TestMse1:
    def test_identity_is_zero(self):
        y = torch.rand(4, 1, 3, 3)
        assert mse1(y, y).item() == 0.0

    def test_two_pixel_hand_value(self):
        a = torch.tensor([[0.0, 0.0]])
        b = torch.tensor([[1.0, 1.0]])
        assert mse1(a, b).item() == pytest.approx(1.0)

    def test_nonnegative(self):
        g = torch.Generator().manual_seed(0)
        for _ in range(20):
            a, b = torch.randn(3, 5, generator=g), torch.randn(3, 5, generator=g)
            assert mse1(a, b).item() >= 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            mse1(torch.zeros(2, 3), torch.zeros(2, 4))


class TestMse2:
    def test_identical_inputs_zero_for_any_shadow(self):
        y = torch.rand(3, 1, 28, 28)
        shadow = ShadowGenerator(init_generator(seed=0))
        assert mse2(shadow, y, y).item() == 0.0

    def test_linear_shadow_hand_value(self):
        # W = [[1, 2], [0, 1]], g = (1, 0), y = (0, 1):
        # Wg = (1, 0), Wy = (2, 1), mean squared difference = (1 + 1) / 2 = 1.
        shadow = LinearShadow(torch.tensor([[1.0, 2.0], [0.0, 1.0]]))
        g = torch.tensor([[1.0, 0.0]])
        y = torch.tensor([[0.0, 1.0]])
        assert mse2(shadow, g, y).item() == pytest.approx(1.0)

    def test_nonnegative(self):
        shadow = LinearShadow(torch.tensor([[2.0, -1.0], [0.5, 3.0]]))
        g = torch.Generator().manual_seed(1)
        for _ in range(10):
            a, b = torch.randn(4, 2, generator=g), torch.randn(4, 2, generator=g)
            assert mse2(shadow, a, b).item() >= 0.0

    def test_gradient_reaches_generated_not_shadow(self):
        shadow = ShadowGenerator(init_generator(seed=0))
        generated = torch.rand(2, 1, 28, 28, requires_grad=True)
        ghosts = torch.rand(2, 1, 28, 28)
        mse2(shadow, generated, ghosts).backward()
        assert generated.grad is not None
        for p in shadow.net.parameters():
            assert p.grad is None


class TestGradientPenalty:
    def test_unit_norm_linear_critic_zero_penalty(self):
        w = torch.randn(1, 4, 4, generator=torch.Generator().manual_seed(2))
        w = w / w.norm()
        critic = LinearCritic(w)
        real = torch.rand(8, 1, 4, 4)
        fake = torch.rand(8, 1, 4, 4)
        assert gradient_penalty(critic, real, fake, rng=0).item() == pytest.approx(0.0, abs=1e-12)

    def test_constant_critic_unit_penalty(self):
        critic = ConstantCritic(3.0)
        real = torch.rand(4, 1, 4, 4)
        fake = torch.rand(4, 1, 4, 4)
        assert gradient_penalty(critic, real, fake, rng=0).item() == pytest.approx(1.0)

    def test_double_norm_linear_critic(self):
        # D(x) = 2 * sum(x) / sqrt(N) has gradient norm 2 everywhere.
        n_pixels = 16
        w = torch.full((1, 4, 4), 2.0 / math.sqrt(n_pixels))
        critic = LinearCritic(w)
        real = torch.rand(8, 1, 4, 4)
        fake = torch.rand(8, 1, 4, 4)
        assert gradient_penalty(critic, real, fake, rng=1).item() == pytest.approx(1.0, abs=1e-6)

    def test_deterministic_in_rng_seed(self):
        critic = init_critic(seed=0)
        real = torch.rand(4, 1, 28, 28)
        fake = torch.rand(4, 1, 28, 28)
        a = gradient_penalty(critic, real, fake, rng=7)
        b = gradient_penalty(critic, real, fake, rng=7)
        assert torch.equal(a, b)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            gradient_penalty(ConstantCritic(0.0), torch.zeros(2, 1, 4, 4), torch.zeros(2, 1, 5, 5))

    def test_empty_batch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            gradient_penalty(ConstantCritic(0.0), torch.zeros(0, 1, 4, 4), torch.zeros(0, 1, 4, 4))


class TestCriticLoss:
    def test_constant_critic_reduces_to_weighted_penalty(self):
        critic = ConstantCritic(5.0)
        real = torch.rand(4, 1, 4, 4)
        fake = torch.rand(4, 1, 4, 4)
        loss = critic_loss(critic, real, fake, gp_weight=10.0, rng=0)
        assert loss.item() == pytest.approx(10.0)

    def test_identical_batches_zero_wasserstein_term(self):
        critic = init_critic(seed=1)
        x = torch.rand(4, 1, 28, 28)
        loss = critic_loss(critic, x, x, gp_weight=0.0, rng=0)
        assert loss.item() == pytest.approx(0.0, abs=1e-6)

    def test_one_pixel_hand_value(self):
        # Unit-norm linear critic on 1-pixel images: D(x) = x.
        critic = LinearCritic(torch.ones(1, 1, 1))
        real = torch.full((10, 1, 1, 1), 0.6)
        fake = torch.full((10, 1, 1, 1), 0.4)
        loss = critic_loss(critic, real, fake, gp_weight=10.0, rng=0)
        assert loss.item() == pytest.approx(-0.2, abs=1e-6)

    def test_detaches_fake_batch(self):
        critic = init_critic(seed=0)
        gen = init_generator(seed=0)
        y = torch.rand(2, 1, 28, 28)
        fake = gen(y)
        critic_loss(critic, torch.rand(2, 1, 28, 28), fake, gp_weight=10.0, rng=0).backward()
        assert all(p.grad is None for p in gen.parameters())
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in critic.parameters())


class TestGeneratorLoss:
    def test_zero_lambdas_reduce_to_adversarial(self):
        gen = init_generator(MICRO_GEN, seed=0)
        gen.eval()
        critic = init_critic(MICRO_CRITIC, seed=0)
        shadow = ShadowGenerator(gen)
        y = torch.rand(4, 1, 28, 28)
        loss = generator_loss(critic, gen, shadow, y, lambda1=0.0, lambda2=0.0)
        expected = -critic(gen(y)).mean()
        assert torch.equal(loss, expected)

    def test_identity_generator_drops_both_regularizers(self):
        gen = Identity()
        critic = LinearCritic(torch.ones(1, 2, 2))
        shadow = LinearShadow(torch.tensor([[1.0, 2.0, 0.0, 1.0]] * 4))
        y = torch.rand(4, 1, 2, 2)
        terms = generator_loss_terms(critic, gen, shadow, y, lambda1=3.0, lambda2=5.0)
        assert terms.mse1.item() == 0.0
        assert terms.mse2.item() == 0.0
        assert terms.total.item() == pytest.approx((-critic(y).mean()).item())

    def test_one_pixel_composition_hand_value(self):
        # y = 0.2, G multiplies by 2.5 so G(y) = 0.5, D(x) = 3x, shadow = id:
        # total = -3 * 0.5 + 2 * 0.09 + 4 * 0.09 = -0.96
        class Scale(nn.Module):
            def forward(self, x):
                return 2.5 * x

        critic = LinearCritic(torch.full((1, 1, 1), 3.0))
        y = torch.full((1, 1, 1, 1), 0.2)
        loss = generator_loss(critic, Scale(), Identity(), y, lambda1=2.0, lambda2=4.0)
        assert loss.item() == pytest.approx(-0.96, abs=1e-7)

    def test_gradients_reach_generator_only(self):
        gen = init_generator(MICRO_GEN, seed=1)
        critic = init_critic(MICRO_CRITIC, seed=1)
        shadow = ShadowGenerator(gen)
        for p in critic.parameters():
            p.requires_grad_(False)
        y = torch.rand(2, 1, 28, 28)
        generator_loss(critic, gen, shadow, y, lambda1=10.0, lambda2=10.0).backward()
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in gen.parameters())
        assert all(p.grad is None for p in critic.parameters())
        assert all(p.grad is None for p in shadow.net.parameters())


class TestFiniteDifferenceAgainstAutodiff:
    def _fd(self, functional, tensor, index, h):
        # Parameter nudges happen under no_grad; the functional itself must
        # run in grad mode because the penalty term differentiates internally.
        def set_value(v):
            with torch.no_grad():
                tensor[index] = v

        orig = tensor[index].item()
        set_value(orig + h)
        up = functional()
        set_value(orig - h)
        down = functional()
        set_value(orig)
        return (up - down) / (2 * h)

    def assert_fd_matches(self, functional, tensor, index, ad, context):
        # Step 1e-4 first; bias-like coordinates shift whole activation maps
        # across LeakyReLU kinks at that step, so refine before judging.
        for h in (1e-4, 1e-5, 1e-6):
            fd = self._fd(functional, tensor, index, h)
            if abs(fd - ad) / abs(ad) < 1e-3:
                return
        raise AssertionError(f"{context}: fd={fd} ad={ad}")

    def test_critic_loss_gradient(self):
        critic = init_critic(MICRO_CRITIC, seed=3).double()
        g = torch.Generator().manual_seed(20)
        real = torch.rand(4, 1, 28, 28, dtype=torch.float64, generator=g)
        fake = torch.rand(4, 1, 28, 28, dtype=torch.float64, generator=g)

        def functional():
            return critic_loss(critic, real, fake, gp_weight=10.0, rng=11).item()

        loss = critic_loss(critic, real, fake, gp_weight=10.0, rng=11)
        loss.backward()
        checked = 0
        for name, p in critic.named_parameters():
            flat, grad = p.view(-1), p.grad.view(-1)
            for idx in [0, flat.numel() // 2]:
                ad = grad[idx].item()
                if abs(ad) > 1e-6:
                    self.assert_fd_matches(functional, flat, idx, ad, f"{name}[{idx}]")
                    checked += 1
        assert checked >= 4

    def test_generator_loss_gradient(self):
        gen = init_generator(MICRO_GEN, seed=4).double()
        gen.eval()
        critic = init_critic(MICRO_CRITIC, seed=4).double()
        shadow = ShadowGenerator(gen)
        y = torch.rand(4, 1, 28, 28, dtype=torch.float64, generator=torch.Generator().manual_seed(21))

        def functional():
            with torch.no_grad():
                return generator_loss(critic, gen, shadow, y, 10.0, 10.0).item()

        generator_loss(critic, gen, shadow, y, 10.0, 10.0).backward()
        checked = 0
        for name, p in gen.named_parameters():
            flat, grad = p.view(-1), p.grad.view(-1)
            for idx in [0, flat.numel() // 2]:
                ad = grad[idx].item()
                if abs(ad) > 1e-6:
                    self.assert_fd_matches(functional, flat, idx, ad, f"{name}[{idx}]")
                    checked += 1
        assert checked >= 10
