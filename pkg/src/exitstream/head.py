"""Temporal head: cumulative-mean aggregation and per-step class probabilities.

Feature vectors v_0..v_n are aggregated as w_t = (1/(t+1)) * sum_{i<=t} v_i,
then each w_t goes through a linear map followed by a sigmoid (binary) or a
softmax (multiclass). Head math runs in float64 so that incremental and batch
evaluation agree tightly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError

BINARY = "binary"
MULTICLASS = "multiclass"


@dataclass
class HeadSpec:
    """Linear classification head applied to each aggregated feature vector."""

    mode: str                      # 'binary' | 'multiclass'
    weights: np.ndarray            # (classes, features); classes == 1 in binary mode
    bias: np.ndarray               # (classes,)

    def __post_init__(self):
        if self.mode not in (BINARY, MULTICLASS):
            raise ConfigError(f"unknown head mode {self.mode!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ConfigError("head weights must be a (classes, features) matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise ConfigError("head bias length must match class count")
        if self.mode == BINARY and self.weights.shape[0] != 1:
            raise ConfigError("binary head must have exactly one weight row")
        if self.mode == MULTICLASS and self.weights.shape[0] < 2:
            raise ConfigError("multiclass head needs at least two classes")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ConfigError("head parameters must be finite")

    @property
    def classes(self) -> int:
        return self.weights.shape[0]

    @property
    def features(self) -> int:
        return self.weights.shape[1]


@dataclass
class ProbTrace:
    """Per-time-step classification output.

    probs/logits have shape (steps,) in binary mode and (steps, classes) in
    multiclass mode. Logits are retained because multiclass class prediction
    is defined on them.
    """

    mode: str
    probs: np.ndarray
    logits: np.ndarray = field(repr=False)

    @property
    def steps(self) -> int:
        return self.probs.shape[0]

    @property
    def classes(self) -> int:
        return 1 if self.mode == BINARY else self.probs.shape[1]

    def validate(self, tol: float = 1e-6) -> None:
        if self.mode == BINARY:
            if self.probs.ndim != 1:
                raise ConfigError("binary trace must be one probability per step")
            if not ((self.probs > 0) & (self.probs < 1)).all():
                raise ConfigError("binary probabilities must lie in (0, 1)")
        else:
            if self.probs.ndim != 2:
                raise ConfigError("multiclass trace must be (steps, classes)")
            if not ((self.probs > 0) & (self.probs < 1)).all():
                raise ConfigError("multiclass probabilities must lie in (0, 1)")
            if np.abs(self.probs.sum(axis=1) - 1.0).max() > tol:
                raise ConfigError("per-step class probabilities must sum to 1")
        if self.probs.shape != self.logits.shape:
            raise ConfigError("probs and logits must have matching shapes")


def as_features(features) -> np.ndarray:
    """Coerce to a (steps, dim) float64 array and check invariants."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise UsageError("feature sequence must contain at least one vector")
    if not np.isfinite(feats).all():
        raise UsageError("feature sequence contains non-finite values")
    return feats


def cumulative_mean(features) -> np.ndarray:
    """Running mean of the feature vectors: w_t = mean(v_0..v_t)."""
    feats = as_features(features)
    counts = np.arange(1, feats.shape[0] + 1, dtype=np.float64)[:, None]
    return np.cumsum(feats, axis=0) / counts


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign to stay overflow-free for large |z|.
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def head_probabilities(aggregated, head: HeadSpec) -> ProbTrace:
    """Map aggregated features w_0..w_n to a probability trace."""
    agg = as_features(aggregated)
    if agg.shape[1] != head.features:
        raise ConfigError(
            f"feature dimension {agg.shape[1]} does not match head ({head.features})"
        )
    logits = agg @ head.weights.T + head.bias
    if head.mode == BINARY:
        logits = logits[:, 0]
        return ProbTrace(BINARY, sigmoid(logits), logits)
    return ProbTrace(MULTICLASS, softmax_rows(logits), logits)
