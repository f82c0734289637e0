"""Desk-scale training bench: synthetic onset datasets, head-only training
under the earliness-penalized loss, lambda sweeps and Pareto fronts.

Sequences show a class prototype from a random onset step onward with noise
before, so exiting early is possible exactly when the model learns to trust
partial evidence. Only the linear head is trained (plain gradient descent);
the earliness/accuracy trade-off lives entirely in the head plus loss.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError, UsageError
from .exits import decide
from .head import BINARY, MULTICLASS, HeadSpec, cumulative_mean, head_probabilities
from .losses import LossConfig, loss_binary, loss_grad, loss_multiclass

THREADS_ENV = "EXITSTREAM_THREADS"


@dataclass(frozen=True)
class SyntheticDatasetConfig:
    dim: int = 8
    classes: int = 2
    steps: int = 16
    noise: float = 0.25
    train_count: int = 160
    test_count: int = 160
    seed: int = 0
    mode: str = BINARY
    amplitude: float = 1.5
    onset_max: int | None = None   # onsets are uniform over {0..onset_max}; default steps//4

    def __post_init__(self):
        if min(self.dim, self.classes, self.steps, self.train_count, self.test_count) < 1:
            raise UsageError("all dataset counts must be >= 1")
        if self.noise < 0:
            raise UsageError("noise scale must be >= 0")
        if self.mode not in (BINARY, MULTICLASS):
            raise UsageError(f"unknown dataset mode {self.mode!r}")
        if self.mode == BINARY and self.classes != 2:
            raise UsageError("binary datasets have exactly two classes")
        if self.mode == MULTICLASS and self.classes < 2:
            raise UsageError("multiclass datasets need at least two classes")
        if self.onset_max is not None and not 0 <= self.onset_max < self.steps:
            raise UsageError("onset_max must lie in [0, steps)")

    @property
    def last_onset(self) -> int:
        return self.onset_max if self.onset_max is not None else self.steps // 4


@dataclass
class SyntheticDataset:
    cfg: SyntheticDatasetConfig
    prototypes: np.ndarray                  # (classes, dim)
    train: list = field(repr=False)         # [(features (steps, dim), label)]
    test: list = field(repr=False)


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    seed: int
    error_rate: float           # percent, in [0, 100]
    mean_net: float
    mean_decisive_frame: float  # nan when no decision fired
    histogram: tuple            # decisive-frame counts, one bin per step


def make_synthetic_dataset(cfg: SyntheticDatasetConfig) -> SyntheticDataset:
    """Generate balanced train/test splits; deterministic under cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    protos = rng.standard_normal((cfg.classes, cfg.dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    protos *= cfg.amplitude
    if cfg.mode == BINARY:
        protos[0] = 0.0  # negative class is background only

    def draw(count):
        samples = []
        for i in range(count):
            label = i % cfg.classes
            onset = int(rng.integers(0, cfg.last_onset + 1))
            feats = rng.standard_normal((cfg.steps, cfg.dim)) * cfg.noise
            feats[onset:] += protos[label]
            samples.append((feats, label))
        return samples

    return SyntheticDataset(cfg, protos, draw(cfg.train_count), draw(cfg.test_count))


def initial_head(dim: int, mode: str, classes: int, seed: int) -> HeadSpec:
    rows = 1 if mode == BINARY else classes
    rng = np.random.default_rng(seed)
    return HeadSpec(mode=mode, weights=rng.normal(0.0, 0.1, (rows, dim)), bias=np.zeros(rows))


def _sample_gradient(wfeats, label, head, cfg):
    trace = head_probabilities(wfeats, head)
    if head.mode == BINARY:
        loss = loss_binary(trace, label, cfg)
        gp = loss_grad(trace, label, cfg)
        dz = (gp * trace.probs * (1.0 - trace.probs))[None, :]  # (1, steps)
    else:
        loss = loss_multiclass(trace, label, cfg)
        gp = loss_grad(trace, label, cfg)
        inner = (gp * trace.probs).sum(axis=1, keepdims=True)
        dz = (trace.probs * (gp - inner)).T                      # (classes, steps)
    return loss, dz @ wfeats, dz.sum(axis=1)


def evaluate_head(dataset: SyntheticDataset, head: HeadSpec, tau: float = 0.5):
    """Test-split metrics: error %, mean NET, decisive-frame stats."""
    errors = 0
    nets = []
    hist = np.zeros(dataset.cfg.steps, dtype=np.int64)
    decisive = []
    for feats, label in dataset.test:
        trace = head_probabilities(cumulative_mean(feats), head)
        report = decide(trace, tau)
        if report.decision != label:
            errors += 1
        nets.append(report.net)
        if report.decisive_frame is not None:
            hist[report.decisive_frame] += 1
            decisive.append(report.decisive_frame)
    mean_dec = float(np.mean(decisive)) if decisive else float("nan")
    return (
        100.0 * errors / len(dataset.test),
        float(np.mean(nets)),
        mean_dec,
        tuple(int(c) for c in hist),
    )


def train_head(
    dataset: SyntheticDataset,
    lam: float,
    epochs: int,
    learning_rate: float,
    seed: int,
    tau: float = 0.5,
    pretrain_epochs: int = 150,
) -> tuple[HeadSpec, SweepPoint]:
    """Full-batch gradient descent on the head.

    The first min(epochs, pretrain_epochs) epochs run the plain loss (lam=1)
    and the remainder the penalized one, mirroring the pretrain-then-finetune
    protocol; training from scratch under a strong earliness penalty stalls
    in a flat-trace optimum. epochs counts both phases, so epochs=0 returns
    the seeded initial head untouched.
    """
    head = initial_head(dataset.cfg.dim, dataset.cfg.mode, dataset.cfg.classes, seed)
    wtrain = [(cumulative_mean(feats), label) for feats, label in dataset.train]
    n = len(wtrain)
    pre = min(epochs, pretrain_epochs)
    for phase_lam, phase_epochs in ((1.0, pre), (lam, epochs - pre)):
        cfg = LossConfig(lam=phase_lam, mode=dataset.cfg.mode)
        for epoch in range(phase_epochs):
            g_w = np.zeros_like(head.weights)
            g_b = np.zeros_like(head.bias)
            total = 0.0
            for wfeats, label in wtrain:
                loss, d_w, d_b = _sample_gradient(wfeats, label, head, cfg)
                total += loss
                g_w += d_w
                g_b += d_b
            new_w = head.weights - learning_rate * g_w / n
            new_b = head.bias - learning_rate * g_b / n
            if not (np.isfinite(total) and np.isfinite(new_w).all() and np.isfinite(new_b).all()):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            head = HeadSpec(mode=head.mode, weights=new_w, bias=new_b)
    error, mean_net, mean_dec, hist = evaluate_head(dataset, head, tau)
    return head, SweepPoint(lam, seed, error, mean_net, mean_dec, hist)


def _sweep_cell(args):
    dataset, lam, seed, epochs, learning_rate, tau = args
    try:
        _, point = train_head(dataset, lam, epochs, learning_rate, seed, tau)
    except TrainingError as exc:
        raise TrainingError(f"lambda={lam} seed={seed}: {exc}") from exc
    return point


def sweep_lambda(
    dataset: SyntheticDataset,
    lams,
    seeds,
    epochs: int = 250,
    learning_rate: float = 1.0,
    tau: float = 0.5,
) -> list:
    """Train every (lambda, seed) cell; output follows the requested order."""
    cells = [(dataset, lam, seed, epochs, learning_rate, tau) for lam in lams for seed in seeds]
    workers = int(os.environ.get(THREADS_ENV, "1"))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(cell) for cell in cells]


def pareto_front(points) -> list:
    """Non-dominated subset of (error_rate, net) pairs, sorted by error rate.

    A point is dominated when another is no worse in both objectives and
    strictly better in one; duplicates collapse to a single point.
    """
    if not points:
        raise UsageError("pareto_front needs at least one point")
    uniq = sorted({(float(e), float(n)) for e, n in points})
    front = []
    best = float("inf")
    for err, netv in uniq:
        if netv < best:
            front.append((err, netv))
            best = netv
    return front
