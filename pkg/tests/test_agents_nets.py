import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from hierfolio.agents.nets import (
    DTYPE,
    Critic,
    LowerActor,
    UpperActor,
    entropy,
    fuse_intra,
    gate,
    lower_forward,
    masked_softmax,
    upper_forward,
)
from hierfolio.agents.noise import OUNoise, explore
from hierfolio.agents.replay import ReplayBuffer
from hierfolio.errors import EmptyMask, ShapeMismatch


def t(x):
    return torch.as_tensor(np.asarray(x, dtype=float), dtype=DTYPE)


class TestUpper:
    def test_zero_head_is_uniform(self):
        torch.manual_seed(0)
        net = UpperActor(5, 4)
        out = upper_forward(net, np.random.default_rng(0).normal(size=(5, 4))).detach().numpy()
        np.testing.assert_allclose(out, 0.2, atol=1e-15)

    @given(st.integers(0, 2**31 - 1))
    def test_normalised(self, seed):
        torch.manual_seed(seed % 1000)
        net = UpperActor(6, 4, zero_head=False)
        z = np.random.default_rng(seed).normal(0, 3, (6, 4))
        out = upper_forward(net, z).detach().numpy()
        assert np.all(out >= 0) and abs(out.sum() - 1) <= 1e-9

    def test_permutation_equivariant(self):
        torch.manual_seed(1)
        net = UpperActor(6, 4, zero_head=False)
        z = np.random.default_rng(1).normal(size=(6, 4))
        perm = np.random.default_rng(2).permutation(6)
        a = upper_forward(net, z).detach().numpy()
        b = upper_forward(net, z[perm]).detach().numpy()
        np.testing.assert_allclose(b, a[perm], atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            upper_forward(UpperActor(3, 4), np.zeros((3, 5)))


class TestGate:
    def test_zero_map(self):
        g = gate(t([0.2, 0.3, 0.5]), torch.zeros(3, 3, dtype=DTYPE), torch.zeros(3, dtype=DTYPE))
        np.testing.assert_array_equal(g.numpy(), 0.5)

    def test_saturation(self):
        g = gate(t([0.2, 0.3, 0.5]), torch.zeros(3, 3, dtype=DTYPE), torch.full((3,), 50.0, dtype=DTYPE))
        np.testing.assert_allclose(g.numpy(), 1.0, atol=1e-15)

    @given(st.integers(0, 2**31 - 1))
    def test_open_interval(self, seed):
        rng = np.random.default_rng(seed)
        g = gate(t(rng.dirichlet(np.ones(4))), t(rng.normal(0, 5, (4, 4))), t(rng.normal(0, 5, 4))).detach().numpy()
        assert np.all((g > 0) & (g < 1))


class TestMaskedSoftmax:
    def test_single_asset(self):
        out = masked_softmax(t([3.0, -7.0, 1.0]), torch.tensor([False, True, False]))
        np.testing.assert_array_equal(out.numpy(), [0, 1, 0])

    def test_equal_logits(self):
        out = masked_softmax(t([0.4] * 5), torch.tensor([1, 1, 0, 1, 1]))
        np.testing.assert_allclose(out.numpy(), [0.25, 0.25, 0, 0.25, 0.25], atol=1e-15)

    @given(st.integers(0, 2**31 - 1))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 3, 6)
        mask = rng.integers(0, 2, 6)
        mask[rng.integers(6)] = 1
        e = np.where(mask == 1, np.exp(x), 0.0)
        out = masked_softmax(t(x), torch.as_tensor(mask)).detach().numpy()
        np.testing.assert_allclose(out, e / e.sum(), rtol=0, atol=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyMask):
            masked_softmax(t([1.0, 2.0]), torch.tensor([0, 0]))


class TestFuse:
    def test_limits(self):
        prior, pred = t([0.6, 0.4, 0]), t([0.1, 0.9, 0])
        np.testing.assert_allclose(fuse_intra(prior, pred, t(-50.0)).numpy(), prior.numpy(), atol=1e-12)
        np.testing.assert_array_equal(fuse_intra(prior, prior, t(1.3)).numpy(), prior.numpy())
        np.testing.assert_allclose(fuse_intra(prior, pred, t(0.0)).numpy(), [0.35, 0.65, 0], atol=1e-15)

    @given(st.integers(0, 2**31 - 1))
    def test_lower_output_on_masked_simplex(self, seed):
        rng = np.random.default_rng(seed)
        torch.manual_seed(seed % 1000)
        net = LowerActor(5, 3)
        mask = rng.integers(0, 2, 5)
        mask[rng.integers(5)] = 1
        a = lower_forward(net, rng.normal(size=(5, 3)), rng.dirichlet(np.ones(5)), mask.astype(bool)).detach().numpy()
        assert np.all(a >= 0) and np.all(a[mask == 0] == 0)
        assert abs(a.sum() - 1) <= 1e-12

    def test_entropy_uniform_is_log_k(self):
        p = t([0.25, 0.25, 0, 0.25, 0.25])
        mask = torch.tensor([1, 1, 0, 1, 1])
        assert entropy(p, mask).item() == pytest.approx(np.log(4), abs=1e-15)


class TestTargets:
    def test_soft_update_exact(self):
        torch.manual_seed(0)
        c = Critic(3, 4, 8)
        tgt = c.make_target()
        with torch.no_grad():
            for p in c.parameters():
                p.add_(torch.randn_like(p))
        before = [p.clone() for p in tgt.parameters()]
        c.soft_update(0.1)
        for b, p, a in zip(before, c.parameters(), tgt.parameters()):
            assert torch.equal(a, 0.1 * p + 0.9 * b)
        assert all(not p.requires_grad for p in tgt.parameters())

    def test_hard_update(self):
        torch.manual_seed(0)
        c = Critic(3, 4, 8)
        tgt = c.make_target()
        with torch.no_grad():
            next(c.parameters()).add_(1.0)
        c.hard_update()
        for p, q in zip(c.parameters(), tgt.parameters()):
            assert torch.equal(p, q)


class TestExplore:
    def test_no_noise_identity(self):
        a = np.array([0.2, 0.3, 0.5])
        out = explore(a, OUNoise(3, 0.15, 0.0, np.random.default_rng(0)), 0.0, 0.1, np.random.default_rng(0))
        np.testing.assert_allclose(out, a, atol=1e-15)

    @given(st.integers(0, 2**31 - 1), st.floats(0, 1))
    def test_stays_on_masked_simplex(self, seed, eps):
        rng = np.random.default_rng(seed)
        mask = rng.integers(0, 2, 6)
        mask[rng.integers(6)] = 1
        a = np.where(mask == 1, rng.dirichlet(np.ones(6)), 0.0)
        a /= a.sum()
        noise = OUNoise(6, 0.15, 2.0, rng)
        for _ in range(5):
            out = explore(a, noise, eps, 1.0, rng, mask)
            assert np.all(out >= 0) and np.all(out[mask == 0] == 0)
            assert abs(out.sum() - 1) <= 1e-12

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            explore([1.0], OUNoise(1), 1.5, 0.1, np.random.default_rng())

    def test_ou_stationary(self, kernel_path):
        noise = OUNoise(1, 0.15, 0.2, np.random.default_rng(0))
        x = noise.trace(100_000)[:, 0]
        assert abs(x.mean()) <= 0.01
        target = 0.2 / np.sqrt(2 * 0.15)
        assert abs(x.std() - target) <= 0.1 * target

    def test_trace_matches_sample(self):
        a = OUNoise(3, 0.15, 0.2, np.random.default_rng(5))
        b = OUNoise(3, 0.15, 0.2, np.random.default_rng(5))
        tr = a.trace(1)
        np.testing.assert_allclose(tr[0], b.sample(), atol=1e-15)


class TestReplay:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(3, np.random.default_rng(0))
        for i in range(5):
            buf.add(x=np.array([i]))
        assert len(buf) == 3
        assert buf.get("x")[:, 0].tolist() == [2, 3, 4]

    def test_uniform_sampling(self):
        buf = ReplayBuffer(10, np.random.default_rng(0))
        for i in range(10):
            buf.add(x=np.array([i]))
        counts = np.bincount(buf.sample(100_000)["x"][:, 0], minlength=10)
        n, p = 100_000, 0.1
        assert np.all(np.abs(counts - n * p) <= 3 * np.sqrt(n * p * (1 - p)))

    def test_errors(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0)
        with pytest.raises(ValueError):
            ReplayBuffer(2).sample(1)
