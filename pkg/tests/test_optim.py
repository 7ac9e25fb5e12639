import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _fd import fd_gradient, grad_errors
from vitray.errors import ConfigError, DataError, NumericError, UsageError
from vitray.optim import AdamW, CosineSchedule, cross_entropy, lr_at, no_weight_decay
from vitray.tensor import Tensor, make_rng


def adam_reference(theta0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Directly-coded Adam (no weight decay), independent of the package."""
    theta = np.array(theta0, dtype=np.float64, copy=True)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


class TestCrossEntropy:
    def test_uniform_logits_give_log_c(self):
        logits = Tensor(np.zeros((2, 7)))
        loss = cross_entropy(logits, [0, 5])
        assert abs(loss.item() - math.log(7)) < 1e-12
        assert abs(loss.item() - 1.945910) < 5e-7

    def test_confident_correct_prediction_drives_loss_to_zero(self):
        logits = Tensor([[200.0, 0.0, 0.0]])
        assert cross_entropy(logits, [0]).item() < 1e-12

    def test_log_probability_logits(self):
        # feeding log-probabilities reproduces -log p of the true class
        probs = np.array([[0.7, 0.2, 0.1]])
        loss = cross_entropy(Tensor(np.log(probs)), [0])
        assert abs(loss.item() - (-math.log(0.7))) < 1e-12
        assert abs(loss.item() - 0.356675) < 5e-7

    def test_stable_for_huge_logits(self):
        loss = cross_entropy(Tensor([[1e4, -1e4, 0.0]]), [2])
        assert np.isfinite(loss.item())

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
        with pytest.raises(DataError):
            cross_entropy(Tensor(np.zeros((2, 3))), [-1, 0])

    def test_label_count_mismatch(self):
        with pytest.raises(DataError):
            cross_entropy(Tensor(np.zeros((2, 3))), [0])

    def test_gradient_is_softmax_minus_onehot_over_batch(self):
        rng = make_rng(0)
        x = rng.uniform(-2, 2, (4, 5))
        labels = rng.integers(0, 5, 4)
        logits = Tensor(x)
        cross_entropy(logits, labels).backward()

        e = np.exp(x - x.max(axis=1, keepdims=True))
        softmax = e / e.sum(axis=1, keepdims=True)
        onehot = np.eye(5)[labels]
        assert np.allclose(logits.grad, (softmax - onehot) / 4, atol=1e-15)

        # h = 1e-5 balances truncation vs roundoff so FD noise stays below 1e-10
        numeric = fd_gradient(lambda a: cross_entropy(Tensor(a), labels).item(), [x], 0, h=1e-5)
        assert grad_errors(logits.grad, numeric).max() < 1e-10

    @given(st.integers(0, 2**32 - 1))
    @settings(deadline=None, max_examples=30)
    def test_non_negative_and_log_c_only_at_uniform(self, seed):
        rng = make_rng(seed)
        b, c = int(rng.integers(1, 6)), int(rng.integers(2, 8))
        x = rng.uniform(-3, 3, (b, c))
        labels = rng.integers(0, c, b)
        loss = cross_entropy(Tensor(x), labels).item()
        assert loss >= 0
        constant_rows = Tensor(np.tile(rng.uniform(-3, 3, (b, 1)), (1, c)))
        assert abs(cross_entropy(constant_rows, labels).item() - math.log(c)) < 1e-12


class TestAdamW:
    def test_zero_gradient_is_pure_shrinkage(self):
        p = Tensor([1.0])
        opt = AdamW({"w": p}, lr=1e-4, weight_decay=0.01)
        p.grad = np.zeros(1)
        opt.step()
        assert abs(p.data[0] - 0.999999) < 1e-12

    def test_first_step_magnitude_equals_lr(self):
        p = Tensor([0.0])
        opt = AdamW({"w": p}, lr=1e-3, weight_decay=0.0, eps=1e-12)
        p.grad = np.ones(1)
        opt.step()
        assert abs(abs(p.data[0]) - 1e-3) < 1e-12

    def test_matches_adam_reference_without_decay(self):
        rng = make_rng(1)
        theta0 = rng.uniform(-1, 1, 7)
        grads = [rng.uniform(-1, 1, 7) for _ in range(100)]
        p = Tensor(theta0.copy())
        opt = AdamW({"w": p}, lr=3e-3, weight_decay=0.0)
        for g in grads:
            p.grad = g
            opt.step()
        expected = adam_reference(theta0, grads, lr=3e-3)
        assert np.abs(p.data - expected).max() < 1e-15

    def test_decay_skips_exempt_parameters(self):
        names = ["head.weight", "head.bias", "final_ln.gamma", "final_ln.beta",
                 "cls_token", "pos_embed"]
        assert [no_weight_decay(n) for n in names] == [False, True, True, True, True, True]
        params = {n: Tensor([1.0]) for n in names}
        opt = AdamW(params, lr=1e-2, weight_decay=0.1)
        for p in params.values():
            p.grad = np.zeros(1)
        opt.step()
        assert params["head.weight"].data[0] < 1.0
        for n in names[1:]:
            assert params[n].data[0] == 1.0

    def test_step_counter_increments_by_one(self):
        p = Tensor([1.0])
        opt = AdamW({"w": p}, lr=1e-4)
        assert opt.t == 0
        for expected in (1, 2, 3):
            p.grad = np.ones(1)
            opt.step()
            assert opt.t == expected
            assert np.all(opt.v["w"] >= 0)

    def test_non_finite_gradient_names_parameter(self):
        p = Tensor([1.0])
        opt = AdamW({"spiky": p}, lr=1e-4)
        p.grad = np.array([np.nan])
        with pytest.raises(NumericError, match="spiky"):
            opt.step()

    def test_missing_gradient_rejected(self):
        opt = AdamW({"w": Tensor([1.0])}, lr=1e-4)
        with pytest.raises(UsageError):
            opt.step()

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            AdamW({"w": Tensor([1.0])}, beta1=1.0)
        with pytest.raises(ConfigError):
            AdamW({"w": Tensor([1.0])}, eps=0.0)
        with pytest.raises(ConfigError):
            AdamW({"w": Tensor([1.0])}, weight_decay=-1.0)

    def test_state_arrays_round_trip(self):
        rng = make_rng(2)
        p = Tensor(rng.uniform(-1, 1, 4))
        opt = AdamW({"w": p}, lr=1e-3)
        for _ in range(5):
            p.grad = rng.uniform(-1, 1, 4)
            opt.step()
        stored = {k: v.copy() for k, v in opt.state_arrays().items()}
        fresh = AdamW({"w": Tensor(p.data.copy())}, lr=1e-3)
        fresh.load_state_arrays(stored, t=opt.t)
        assert fresh.t == 5
        assert np.array_equal(fresh.m["w"], opt.m["w"])
        assert np.array_equal(fresh.v["w"], opt.v["w"])


class TestCosineSchedule:
    def test_endpoints(self):
        sched = CosineSchedule(eta_max=1e-4, eta_min=1e-6, t_max=10)
        assert sched.lr_at(0) == 1e-4
        assert abs(sched.lr_at(10) - 1e-6) < 1e-20

    def test_direct_evaluation_at_t1(self):
        sched = CosineSchedule(eta_max=1e-4, eta_min=0.0, t_max=10)
        expected = 0.5 * (1 + math.cos(math.pi / 10)) * 1e-4  # 9.75528e-5
        assert abs(sched.lr_at(1) - expected) < 1e-20
        assert abs(sched.lr_at(1) - 9.75528e-5) < 5e-11

    def test_midpoint(self):
        sched = CosineSchedule(eta_max=1e-4, eta_min=2e-5, t_max=10)
        assert abs(sched.lr_at(5) - (1e-4 + 2e-5) / 2) < 1e-19

    @given(st.integers(1, 50))
    @settings(deadline=None, max_examples=30)
    def test_monotone_and_symmetric(self, t_max):
        sched = CosineSchedule(eta_max=1e-3, eta_min=1e-5, t_max=t_max)
        lrs = [sched.lr_at(t) for t in range(t_max + 1)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        for t in range(t_max + 1):
            assert abs(lrs[t] + lrs[t_max - t] - (1e-3 + 1e-5)) < 1e-18

    def test_out_of_range_rejected(self):
        sched = CosineSchedule(eta_max=1e-4, t_max=10)
        with pytest.raises(UsageError):
            sched.lr_at(-1)
        with pytest.raises(UsageError):
            lr_at(sched, 11)

    def test_invalid_bounds(self):
        with pytest.raises(ConfigError):
            CosineSchedule(eta_max=1e-5, eta_min=1e-4)
        with pytest.raises(ConfigError):
            CosineSchedule(eta_max=1e-4, t_max=0)


class TestSingleStepProgress:
    def test_one_step_decreases_loss_on_single_sample(self):
        from vitray.model import ViTConfig, ViTModel
        from vitray.tensor import zero_grads

        cfg = ViTConfig(image_size=16, patch_size=8, in_channels=1, hidden_size=8,
                        intermediate_size=16, num_layers=2, num_heads=2, num_classes=3)
        model = ViTModel(cfg, rng=make_rng(3))
        image = Tensor(make_rng(4).uniform(-1, 1, (1, 1, 16, 16)))
        opt = AdamW(model.trainable_parameters(), lr=1e-4, weight_decay=0.01)

        before = cross_entropy(model.forward(image, train=True), [1])
        zero_grads(model.params.values())
        before.backward()
        opt.step()
        after = cross_entropy(model.forward(image, train=True), [1])
        assert after.item() < before.item()
