"""Stateful frame-by-frame evaluation with per-layer caches.

Each temporal layer keeps only the last kernel_t - 1 input slices plus a
stride phase, so pushing a chunk costs work independent of how many frames
came before, while the accumulated trace matches offline evaluation of the
same prefix. The head keeps running aggregates (feature sum, per-class exit
accumulators) so reports never re-scan the trace.
"""

from time import perf_counter

import numpy as np

from .errors import ConfigError, NoReportYet, UsageError
from .exits import ExitAccumulator, ExitReport
from .head import BINARY, HeadSpec, ProbTrace, sigmoid, softmax_rows
from .layers import (
    ActivationSpec,
    CausalBatchNormSpec,
    CausalConvSpec,
    CausalPoolSpec,
    NetworkSpec,
    check_clip,
    offline_forward,
)


class _TemporalWindow:
    """Sliding-window emitter over a stream of slices.

    Front replication happens on the first slice ever seen; afterwards the
    buffer never holds more than kernel_t - 1 slices between calls.
    """

    def __init__(self, kernel_t, stride_t, front, apply_window):
        self.kernel_t = kernel_t
        self.stride_t = stride_t
        self.front = front
        self.apply_window = apply_window
        self.buf = []
        self.skip = 0
        self.primed = False

    def feed(self, slices):
        outs = []
        for s in slices:
            if not self.primed:
                self.primed = True
                for _ in range(self.front):
                    self._take(s, outs)
            self._take(s, outs)
        return outs

    def _take(self, s, outs):
        if self.skip:
            self.skip -= 1
            return
        self.buf.append(s)
        if len(self.buf) == self.kernel_t:
            outs.append(self.apply_window(self.buf))
            drop = min(self.stride_t, self.kernel_t)
            self.buf = self.buf[drop:]
            self.skip += self.stride_t - drop

    def buffered_values(self) -> int:
        return sum(s.size for s in self.buf)


class _ConvStage:
    def __init__(self, spec: CausalConvSpec):
        if spec.weights is None:
            raise ConfigError(f"{spec.name}: weights are not bound")
        self.spec = spec
        self.window = _TemporalWindow(
            spec.kernel[0], spec.stride[0], spec.front_replicate, self._apply
        )

    def feed(self, slices):
        ph, pw = self.spec.spatial_padding
        if ph or pw:
            slices = [np.pad(s, ((0, 0), (ph, ph), (pw, pw))) for s in slices]
        return self.window.feed(slices)

    def _apply(self, window):
        spec = self.spec
        kt, kh, kw = spec.kernel
        _, sh, sw = spec.stride
        hp, wp = window[0].shape[1:]
        h_out = (hp - kh) // sh + 1
        w_out = (wp - kw) // sw + 1
        if h_out < 1 or w_out < 1:
            raise ConfigError(f"{spec.name}: spatial extent too small for kernel")
        out = np.zeros((spec.out_channels, h_out, w_out), dtype=np.float32)
        for dt in range(kt):
            sl = window[dt]
            for dy in range(kh):
                for dx in range(kw):
                    view = sl[
                        :, dy : dy + (h_out - 1) * sh + 1 : sh, dx : dx + (w_out - 1) * sw + 1 : sw
                    ]
                    out += np.einsum("oi,ihw->ohw", spec.weights[:, :, dt, dy, dx], view)
        if spec.bias is not None:
            out += spec.bias[:, None, None]
        return out

    def buffered_values(self) -> int:
        return self.window.buffered_values()


class _PoolStage:
    def __init__(self, spec: CausalPoolSpec):
        self.spec = spec
        self.window = _TemporalWindow(
            spec.kernel[0], spec.stride[0], spec.front_replicate, self._apply
        )

    def feed(self, slices):
        return self.window.feed(slices)

    def _apply(self, window):
        spec = self.spec
        kt, kh, kw = spec.kernel
        _, sh, sw = spec.stride
        h, w = window[0].shape[1:]
        h_out = (h - kh) // sh + 1
        w_out = (w - kw) // sw + 1
        if h_out < 1 or w_out < 1:
            raise ConfigError(f"{spec.name}: spatial extent too small for kernel")
        acc = None
        for dt in range(kt):
            sl = window[dt]
            for dy in range(kh):
                for dx in range(kw):
                    view = sl[
                        :, dy : dy + (h_out - 1) * sh + 1 : sh, dx : dx + (w_out - 1) * sw + 1 : sw
                    ]
                    if acc is None:
                        acc = view.copy()
                    elif spec.mode == "max":
                        np.maximum(acc, view, out=acc)
                    else:
                        acc += view
        if spec.mode == "average":
            acc /= np.float32(kt * kh * kw)
        return acc

    def buffered_values(self) -> int:
        return self.window.buffered_values()


class _BatchNormStage:
    """Inference-mode normalization, stateless per slice."""

    def __init__(self, spec: CausalBatchNormSpec):
        if spec.running_mean is None or spec.running_var is None:
            raise ConfigError(f"{spec.name}: running statistics are not bound")
        gamma = spec.gamma if spec.gamma is not None else np.ones(spec.channels, np.float32)
        beta = spec.beta if spec.beta is not None else np.zeros(spec.channels, np.float32)
        self.scale = (gamma / np.sqrt(spec.running_var + np.float32(spec.eps)))[:, None, None]
        self.shift = beta[:, None, None] - spec.running_mean[:, None, None] * self.scale

    def feed(self, slices):
        return [s * self.scale + self.shift for s in slices]

    def buffered_values(self) -> int:
        return 0


class _ActivationStage:
    def __init__(self, spec: ActivationSpec):
        self.kind = spec.kind

    def feed(self, slices):
        if self.kind == "relu":
            return [np.maximum(s, np.float32(0)) for s in slices]
        if self.kind == "sigmoid":
            with np.errstate(over="ignore"):
                return [np.float32(1) / (np.float32(1) + np.exp(-s)) for s in slices]
        return list(slices)

    def buffered_values(self) -> int:
        return 0


class _HeadStream:
    """Incremental cumulative-mean head plus running exit statistics."""

    def __init__(self, head: HeadSpec, tau: float, retain_trace: bool):
        self.head = head
        self.tau = tau
        self.running_sum = np.zeros(head.features, dtype=np.float64)
        self.count = 0
        self.accs = [ExitAccumulator() for _ in range(head.classes)]
        self.crossing = None  # (step, class)
        self.probs_rows = [] if retain_trace else None
        self.logits_rows = [] if retain_trace else None

    def feed(self, feature_slices):
        new_probs, new_logits = [], []
        for s in feature_slices:
            v = s.mean(axis=(1, 2), dtype=np.float64)
            self.running_sum += v
            step = self.count
            self.count += 1
            w = self.running_sum / self.count
            logits = self.head.weights @ w + self.head.bias
            if self.head.mode == BINARY:
                z = logits[0]
                p = float(sigmoid(np.asarray([z]))[0])
                self.accs[0].push(p)
                if self.crossing is None and p >= self.tau:
                    self.crossing = (step, 1)
                new_probs.append(p)
                new_logits.append(z)
            else:
                row = softmax_rows(logits[None, :])[0]
                for c, acc in enumerate(self.accs):
                    acc.push(row[c])
                if self.crossing is None and row.max() >= self.tau:
                    self.crossing = (step, int(row.argmax()))
                new_probs.append(row)
                new_logits.append(logits)
        if self.probs_rows is not None:
            self.probs_rows.extend(new_probs)
            self.logits_rows.extend(new_logits)
        return new_probs, new_logits

    def report(self) -> ExitReport:
        if self.count == 0:
            raise NoReportYet("no trace steps emitted yet")
        if self.head.mode == BINARY:
            cls = 1 if self.crossing else 0
            frame = self.crossing[0] if self.crossing else None
            acc = self.accs[0]
        else:
            if self.crossing:
                frame, cls = self.crossing[0], self.crossing[1]
            else:
                peaks = np.asarray([acc.peak for acc in self.accs])
                frame, cls = None, int(peaks.argmax())
            acc = self.accs[cls]
        return ExitReport(
            decision=cls,
            decisive_frame=frame,
            aggregate_prob=acc.peak,
            exit_time=acc.exit_time(),
            net=acc.net(),
        )

    def buffered_values(self) -> int:
        return self.running_sum.size + 3 * len(self.accs)


def _build_stage(layer):
    if isinstance(layer, CausalConvSpec):
        return _ConvStage(layer)
    if isinstance(layer, CausalPoolSpec):
        return _PoolStage(layer)
    if isinstance(layer, CausalBatchNormSpec):
        return _BatchNormStage(layer)
    if isinstance(layer, ActivationSpec):
        return _ActivationStage(layer)
    raise ConfigError(f"unknown layer type {type(layer).__name__}")


class StreamState:
    """Exclusively-owned state of one logical stream over a fixed network."""

    def __init__(self, net: NetworkSpec, tau: float = 0.5, retain_trace: bool = True):
        if not 0.0 < tau < 1.0:
            raise UsageError(f"tau must lie in (0, 1), got {tau}")
        net.validate()
        self.net = net
        self.retain_trace = retain_trace
        self.stages = [_build_stage(layer) for layer in net.layers]
        self.head = _HeadStream(net.head, tau, retain_trace)
        self.frames_seen = 0

    @property
    def emitted_steps(self) -> int:
        return self.head.count

    @property
    def decision(self):
        """Class decided by threshold crossing so far, or None."""
        return self.head.crossing[1] if self.head.crossing else None

    @property
    def trace(self) -> ProbTrace:
        if self.head.probs_rows is None:
            raise UsageError("trace retention is disabled for this stream")
        return _rows_to_trace(
            self.net.head.mode, self.head.probs_rows, self.head.logits_rows, self.net.head.classes
        )

    def push(self, chunk) -> ProbTrace:
        """Advance the stream by a chunk of frames; returns the new trace steps."""
        x = np.asarray(chunk, dtype=np.float32)
        if x.ndim != 4:
            raise ConfigError(f"chunk must be rank 4 (C,t,H,W), got rank {x.ndim}")
        if x.shape[1] < 1:
            raise UsageError("cannot push a zero-length chunk")
        x = check_clip(x, self.net.input_channels)
        if x.shape[2] != self.net.input_height or x.shape[3] != self.net.input_width:
            raise ConfigError(
                f"chunk is {x.shape[2]}x{x.shape[3]}, network expects "
                f"{self.net.input_height}x{self.net.input_width}"
            )
        slices = [x[:, i] for i in range(x.shape[1])]
        self.frames_seen += x.shape[1]
        for stage in self.stages:
            if not slices:
                break
            slices = stage.feed(slices)
        new_probs, new_logits = self.head.feed(slices)
        return _rows_to_trace(self.net.head.mode, new_probs, new_logits, self.net.head.classes)

    def report(self) -> ExitReport:
        """O(1) exit report from the running aggregates."""
        return self.head.report()

    def state_size(self) -> int:
        """Float values held by the caches, excluding any retained trace."""
        return sum(stage.buffered_values() for stage in self.stages) + self.head.buffered_values()


def _rows_to_trace(mode, probs_rows, logits_rows, classes):
    if mode == BINARY:
        return ProbTrace(
            BINARY,
            np.asarray(probs_rows, dtype=np.float64),
            np.asarray(logits_rows, dtype=np.float64),
        )
    probs = np.vstack(probs_rows) if probs_rows else np.empty((0, classes))
    logits = np.vstack(logits_rows) if logits_rows else np.empty((0, classes))
    return ProbTrace(mode, probs, logits)


def stream_init(net: NetworkSpec, tau: float = 0.5, retain_trace: bool = True) -> StreamState:
    return StreamState(net, tau=tau, retain_trace=retain_trace)


def stream_push(state: StreamState, chunk) -> ProbTrace:
    return state.push(chunk)


def stream_report(state: StreamState) -> ExitReport:
    return state.report()


def naive_forward_per_frame(clip, net: NetworkSpec):
    """Re-run offline evaluation on every prefix; correctness and cost baseline.

    Returns the assembled trace (each step taken from the first prefix that
    emits it) and the per-frame wall time of each prefix evaluation.
    """
    x = check_clip(clip, net.input_channels)
    needed = net.min_input_frames()
    probs_rows, logits_rows = [], []
    times = []
    emitted = 0
    for k in range(x.shape[1]):
        start = perf_counter()
        trace = offline_forward(x[:, : k + 1], net) if k + 1 >= needed else None
        times.append(perf_counter() - start)
        if trace is not None and trace.steps > emitted:
            for j in range(emitted, trace.steps):
                probs_rows.append(trace.probs[j])
                logits_rows.append(trace.logits[j])
            emitted = trace.steps
    return _rows_to_trace(net.head.mode, probs_rows, logits_rows, net.head.classes), times
