import numpy as np
import pytest

from exitstream import (
    BINARY,
    MULTICLASS,
    LossConfig,
    ProbTrace,
    UsageError,
    loss_binary,
    loss_grad,
    loss_multiclass,
    net,
)

from helpers import (
    fd_gradient,
    nondegenerate_binary_trace,
    nondegenerate_multiclass_trace,
    rel_close,
)


def bce(p, y):
    return -(y * np.log(p) + (1 - y) * np.log(1 - p))


class TestLossBinary:
    def test_lambda_one_is_plain_bce(self):
        rng = np.random.default_rng(0)
        cfg = LossConfig(lam=1.0)
        for _ in range(50):
            v = rng.uniform(0.01, 0.99, int(rng.integers(1, 10)))
            assert loss_binary(v, 1, cfg) == bce(v.max(), 1)

    def test_negative_class_never_penalized(self):
        rng = np.random.default_rng(1)
        for lam in (0.0, 0.3, 1.0):
            cfg = LossConfig(lam=lam)
            v = rng.uniform(0.01, 0.99, 8)
            assert loss_binary(v, 0, cfg) == bce(v.max(), 0)

    def test_hand_example(self):
        cfg = LossConfig(lam=0.5)
        value = loss_binary([0.2, 0.5, 0.3], 1, cfg)
        expect = -np.log(0.5) + np.log(0.5 + 0.5 * 0.3)
        assert value == pytest.approx(expect, abs=1e-12)
        assert value == pytest.approx(0.2623, abs=5e-4)

    def test_extreme_probabilities_clamped(self):
        cfg = LossConfig(lam=1.0)
        assert np.isfinite(loss_binary([1.0], 0, cfg))
        assert np.isfinite(loss_binary([0.0], 1, cfg))

    def test_penalty_nonpositive(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            v = rng.uniform(0.01, 0.99, int(rng.integers(1, 12)))
            lam = float(rng.uniform(0.01, 1.0))
            penalty = loss_binary(v, 1, LossConfig(lam=lam)) - bce(np.clip(v.max(), 1e-7, 1 - 1e-7), 1)
            assert penalty <= 1e-15

    def test_loss_nondecreasing_in_lambda(self):
        # log(lam + (1-lam)*NET) grows with lam whenever NET < 1, so the
        # total loss cannot decrease as lam rises.
        rng = np.random.default_rng(3)
        for _ in range(100):
            v = rng.uniform(0.01, 0.99, int(rng.integers(2, 12)))
            if net(v) >= 1.0:
                continue
            lams = sorted(rng.uniform(0.0, 1.0, 3))
            losses = [loss_binary(v, 1, LossConfig(lam=l)) for l in lams]
            assert losses == sorted(losses)


class TestLossMulticlass:
    def test_lambda_one_is_plain_ce(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            trace = nondegenerate_multiclass_trace(rng)
            q = trace.probs.max(axis=0)
            expect = -np.log(q[1] / q.sum())
            assert loss_multiclass(trace, 1, LossConfig(lam=1.0, mode=MULTICLASS)) == expect

    def test_hand_example(self):
        probs = np.array([[0.9, 0.1], [0.9, 0.1]])
        trace = ProbTrace(MULTICLASS, probs, np.log(probs))
        value = loss_multiclass(trace, 0, LossConfig(lam=1.0, mode=MULTICLASS))
        assert value == pytest.approx(-np.log(0.9), abs=1e-12)
        assert value == pytest.approx(0.1054, abs=5e-5)

    def test_uniform_trace_gives_log_classes(self):
        for classes in (2, 3, 5):
            probs = np.full((4, classes), 1.0 / classes)
            trace = ProbTrace(MULTICLASS, probs, np.zeros_like(probs))
            value = loss_multiclass(trace, 0, LossConfig(lam=1.0, mode=MULTICLASS))
            assert value == pytest.approx(np.log(classes), abs=1e-12)

    def test_label_range_checked(self):
        probs = np.array([[0.5, 0.5]])
        trace = ProbTrace(MULTICLASS, probs, np.zeros_like(probs))
        with pytest.raises(UsageError):
            loss_multiclass(trace, 2, LossConfig(lam=1.0, mode=MULTICLASS))


class TestLossGrad:
    def test_lambda_one_routes_to_first_argmax_only(self):
        cfg = LossConfig(lam=1.0)
        grad = loss_grad(np.array([0.2, 0.5, 0.3]), 1, cfg)
        assert grad[1] != 0.0
        assert grad[0] == grad[2] == 0.0

    def test_constant_trace_routes_to_index_zero(self):
        cfg = LossConfig(lam=0.5)
        grad = loss_grad(np.array([0.4, 0.4, 0.4]), 1, cfg)
        assert grad[0] != 0.0
        assert np.all(grad[1:] == 0.0)

    def test_hand_trace_matches_finite_differences(self):
        cfg = LossConfig(lam=0.5)
        v = np.array([0.2, 0.5, 0.3])
        fd = fd_gradient(lambda x: loss_binary(x, 1, cfg), v)
        assert rel_close(loss_grad(v, 1, cfg), fd, 1e-4)

    def test_binary_fd_agreement(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            v = nondegenerate_binary_trace(rng)
            lam = float(rng.uniform(0.05, 1.0))
            y = int(rng.integers(0, 2))
            cfg = LossConfig(lam=lam)
            fd = fd_gradient(lambda x: loss_binary(x, y, cfg), v)
            assert rel_close(loss_grad(v, y, cfg), fd, 1e-4)

    def test_multiclass_fd_agreement(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            trace = nondegenerate_multiclass_trace(rng)
            lam = float(rng.uniform(0.05, 1.0))
            y = int(rng.integers(0, trace.probs.shape[1]))
            cfg = LossConfig(lam=lam, mode=MULTICLASS)

            def f(values):
                return loss_multiclass(ProbTrace(MULTICLASS, values, trace.logits), y, cfg)

            fd = fd_gradient(f, trace.probs)
            assert rel_close(loss_grad(trace, y, cfg), fd, 1e-4)

    def test_lambda_validated(self):
        with pytest.raises(UsageError):
            LossConfig(lam=1.5)
