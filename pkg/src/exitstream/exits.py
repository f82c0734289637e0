"""Probabilistic early-exit calculus over probability traces.

A trace p_0..p_n induces a random exit step W: draw a threshold tau uniformly
from (0, max_i p_i] and exit at the first k with p_k >= tau. With prefix
maxima m_k and M = m_n this gives P(W=k) = (m_k - m_{k-1}) / M and

    E(W) = n - (1/M) * sum_{t=0}^{n-1} m_t = sum_{t=0}^{n-1} (M - m_t) / M.

The deficit form on the right is what the code accumulates: every fully
confident prefix step contributes exactly 0.0 and every zero step exactly 1.0,
so the endpoint conventions (exit at step 0 -> 0, exit only at step n -> n)
hold bitwise, and a stream can maintain it in O(1) state.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .head import BINARY, MULTICLASS, ProbTrace

# Below this aggregate probability the exit distribution is undefined and the
# exit time defaults to n ("cannot exit"). Sigmoid outputs never hit it;
# synthetic traces can.
EPS_GUARD = 1e-12


@dataclass
class ExitReport:
    """Outcome of a threshold decision plus the trace's exit statistics."""

    decision: int               # binary: 1 positive / 0 negative; else class index
    decisive_frame: int | None  # step of the threshold crossing, None if none fired
    aggregate_prob: float
    exit_time: float
    net: float


class ExitAccumulator:
    """Sequential expected-exit-time state over a growing probability sequence.

    push() maintains deficit = sum_{t<count-1} (peak - m_t) / peak. When a new
    peak p arrives, old terms rescale by (peak/p) and every elapsed step gains
    (p - peak)/p; otherwise the new term is exactly zero.
    """

    __slots__ = ("count", "peak", "deficit")

    def __init__(self):
        self.count = 0
        self.peak = 0.0
        self.deficit = 0.0

    def push(self, p: float) -> None:
        p = float(p)
        if self.count == 0:
            self.peak = p
            self.count = 1
            return
        m = self.peak
        if p > m:
            self.deficit = self.deficit * (m / p) + self.count * ((p - m) / p)
            self.peak = p
        elif m <= 0.0:
            self.deficit += 1.0
        self.count += 1

    def exit_time(self) -> float:
        if self.count == 0:
            raise UsageError("exit time of an empty trace is undefined")
        n = self.count - 1
        if self.peak <= EPS_GUARD:
            return float(n)
        return min(max(self.deficit, 0.0), float(n))

    def net(self) -> float:
        n = self.count - 1
        if n == 0:
            return 0.0
        return self.exit_time() / n


def _binary_values(trace) -> np.ndarray:
    if isinstance(trace, ProbTrace):
        if trace.mode != BINARY:
            raise UsageError("this operation needs a binary trace")
        values = trace.probs
    else:
        values = np.asarray(trace, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 1:
        raise UsageError("trace must contain at least one probability")
    return np.asarray(values, dtype=np.float64)


def positive_prob(trace) -> float:
    """Aggregated probability of the positive class: max over the trace."""
    return float(_binary_values(trace).max())


def exit_distribution(trace) -> np.ndarray | None:
    """Exact exit-step distribution P(W = k), or None when no exit is possible."""
    values = _binary_values(trace)
    m = np.maximum.accumulate(values)
    peak = m[-1]
    if peak <= EPS_GUARD:
        return None
    return np.diff(m, prepend=0.0) / peak


def exit_time(trace) -> float:
    """Expected exit step; in [0, n], defaults to n when no exit is possible."""
    acc = ExitAccumulator()
    for p in _binary_values(trace):
        acc.push(p)
    return acc.exit_time()


def net(trace) -> float:
    """Normalized expected exit time in [0, 1]; 0 by convention for one step."""
    acc = ExitAccumulator()
    for p in _binary_values(trace):
        acc.push(p)
    return acc.net()


def _report_for(values: np.ndarray, decision: int, decisive: int | None) -> ExitReport:
    return ExitReport(
        decision=decision,
        decisive_frame=decisive,
        aggregate_prob=float(values.max()),
        exit_time=exit_time(values),
        net=net(values),
    )


def decide(trace, tau: float) -> ExitReport:
    """Fixed-threshold decision: exit at the first step whose probability >= tau.

    Binary: positive at the first crossing, else negative. Multiclass: the
    class whose per-step probability first crosses tau; if none crosses, the
    class with the highest probability anywhere in the trace, with no
    decisive frame.
    """
    if not 0.0 < tau < 1.0:
        raise UsageError(f"tau must lie in (0, 1), got {tau}")
    if isinstance(trace, ProbTrace) and trace.mode == MULTICLASS:
        probs = trace.probs
        step_best = probs.max(axis=1)
        hits = np.flatnonzero(step_best >= tau)
        if hits.size:
            k = int(hits[0])
            cls = int(probs[k].argmax())
            return _report_for(probs[:, cls], cls, k)
        cls = int(probs.max(axis=0).argmax())
        return _report_for(probs[:, cls], cls, None)
    values = _binary_values(trace)
    hits = np.flatnonzero(values >= tau)
    if hits.size:
        return _report_for(values, 1, int(hits[0]))
    return _report_for(values, 0, None)


def predicted_class_trace(trace: ProbTrace) -> tuple[int, np.ndarray]:
    """Class with the highest logit anywhere in the trace, and its probabilities.

    Ties break toward the lowest class index.
    """
    if not isinstance(trace, ProbTrace) or trace.mode != MULTICLASS:
        raise UsageError("predicted_class_trace needs a multiclass trace")
    cls = int(trace.logits.max(axis=0).argmax())
    return cls, np.asarray(trace.probs[:, cls], dtype=np.float64)
