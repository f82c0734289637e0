"""Training losses that trade classification confidence against exit earliness.

Binary:     L = BCE(max_t p_t, y) + y * log(lam + (1-lam) * NET(trace))
Multiclass: L = CE(trace, y) + log(lam + (1-lam) * NET(predicted-class trace))

lam = 1 disables the earliness penalty bitwise (the log argument is exactly
1.0). The CE term aggregates each class's temporal maximum and renormalizes,
mirroring the max-aggregation of the binary case.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .exits import EPS_GUARD, ExitAccumulator, _binary_values, predicted_class_trace
from .head import BINARY, MULTICLASS, ProbTrace

PROB_CLAMP = 1e-7     # probabilities are clamped to [PROB_CLAMP, 1-PROB_CLAMP] before log
LOG_FLOOR = 1e-12     # lower clamp of the penalty's log argument (lam=0, NET=0 case)


@dataclass(frozen=True)
class LossConfig:
    lam: float
    mode: str = BINARY
    eps_guard: float = EPS_GUARD

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise UsageError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.mode not in (BINARY, MULTICLASS):
            raise UsageError(f"unknown loss mode {self.mode!r}")


def _net_value(values: np.ndarray) -> float:
    acc = ExitAccumulator()
    for p in values:
        acc.push(p)
    return acc.net()


def _penalty(lam: float, net_value: float) -> float:
    if lam == 1.0:
        return 0.0
    return float(np.log(max(lam + (1.0 - lam) * net_value, LOG_FLOOR)))


def loss_binary(trace, y: int, cfg: LossConfig) -> float:
    """Confidence/earliness loss for a binary trace and label y in {0, 1}."""
    if y not in (0, 1):
        raise UsageError(f"binary label must be 0 or 1, got {y}")
    values = _binary_values(trace)
    peak = float(np.clip(values.max(), PROB_CLAMP, 1.0 - PROB_CLAMP))
    bce = -(y * np.log(peak) + (1 - y) * np.log(1.0 - peak))
    if y == 0:
        return float(bce)
    return float(bce) + y * _penalty(cfg.lam, _net_value(values))


def loss_multiclass(trace: ProbTrace, y: int, cfg: LossConfig) -> float:
    """Confidence/earliness loss for a multiclass trace and class label y."""
    if not isinstance(trace, ProbTrace) or trace.mode != MULTICLASS:
        raise UsageError("loss_multiclass needs a multiclass trace")
    probs = trace.probs
    if not 0 <= y < probs.shape[1]:
        raise UsageError(f"class label {y} out of range")
    q = probs.max(axis=0)
    q_hat = q[y] / q.sum()
    ce = -float(np.log(np.clip(q_hat, PROB_CLAMP, 1.0)))
    _, col = predicted_class_trace(trace)
    return ce + _penalty(cfg.lam, _net_value(col))


def _prefix_argmax_indices(values: np.ndarray) -> np.ndarray:
    """idx[t] = first index attaining max(values[:t+1])."""
    idx = np.empty(values.shape[0], dtype=np.intp)
    best, best_i = -np.inf, 0
    for t, v in enumerate(values):
        if v > best:
            best, best_i = v, t
        idx[t] = best_i
    return idx


def _net_gradient(values: np.ndarray, eps_guard: float) -> np.ndarray:
    """d NET / d p_j with max operations routed to their first attaining index.

    NET = (n - S/M) / n with S = sum_{t<n} m_t:
    dS/dp_j counts the prefix-max positions first attained at j, and
    dM/dp_j is the indicator of the first global argmax.
    """
    grad = np.zeros_like(values, dtype=np.float64)
    n = values.shape[0] - 1
    if n == 0:
        return grad
    peak = values.max()
    if peak <= eps_guard:
        return grad
    idx = _prefix_argmax_indices(values)
    counts = np.bincount(idx[:-1], minlength=values.shape[0]).astype(np.float64)
    m = np.maximum.accumulate(values)
    s = float(m[:-1].sum())
    grad -= counts / peak
    grad[idx[-1]] += s / peak**2
    return grad / n


def loss_grad(trace, y: int, cfg: LossConfig) -> np.ndarray:
    """Analytic dL/dp_t (per class in multiclass mode)."""
    if cfg.mode == BINARY:
        return _grad_binary(trace, y, cfg)
    return _grad_multiclass(trace, y, cfg)


def _grad_binary(trace, y: int, cfg: LossConfig) -> np.ndarray:
    values = _binary_values(trace)
    grad = np.zeros_like(values, dtype=np.float64)
    peak = values.max()
    j_max = int(np.argmax(values))
    if PROB_CLAMP < peak < 1.0 - PROB_CLAMP:
        grad[j_max] += (peak - y) / (peak * (1.0 - peak))
    if y == 1 and cfg.lam < 1.0:
        g = cfg.lam + (1.0 - cfg.lam) * _net_value(values)
        if g > LOG_FLOOR:
            grad += (1.0 - cfg.lam) / g * _net_gradient(values, cfg.eps_guard)
    return grad


def _grad_multiclass(trace: ProbTrace, y: int, cfg: LossConfig) -> np.ndarray:
    if not isinstance(trace, ProbTrace) or trace.mode != MULTICLASS:
        raise UsageError("multiclass gradient needs a multiclass trace")
    probs = trace.probs
    grad = np.zeros_like(probs, dtype=np.float64)
    q = probs.max(axis=0)
    t_first = probs.argmax(axis=0)
    total = q.sum()
    if q[y] / total > PROB_CLAMP:
        for c in range(probs.shape[1]):
            grad[t_first[c], c] += 1.0 / total
        grad[t_first[y], y] -= 1.0 / q[y]
    if cfg.lam < 1.0:
        cls, col = predicted_class_trace(trace)
        g = cfg.lam + (1.0 - cfg.lam) * _net_value(col)
        if g > LOG_FLOOR:
            grad[:, cls] += (1.0 - cfg.lam) / g * _net_gradient(col, cfg.eps_guard)
    return grad
