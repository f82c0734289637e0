"""Causally modified 3D layers over dense (channels, time, height, width) clips.

Temporal padding is front-only replication of the first time slice, so the
value emitted at output step j never reads input slices later than
a(j) = j*stride_t + (kernel_t - 1) - front. Spatial padding stays zero-fill.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NonFiniteDataError
from .head import HeadSpec, ProbTrace, cumulative_mean, head_probabilities

ACTIVATION_KINDS = ("relu", "sigmoid", "identity")
POOL_MODES = ("max", "average")


def check_clip(clip, channels: int | None = None) -> np.ndarray:
    """Validate a clip tensor: rank 4, all dims >= 1, finite float32 values."""
    x = np.asarray(clip, dtype=np.float32)
    if x.ndim != 4:
        raise ConfigError(f"clip must be rank 4 (C,T,H,W), got rank {x.ndim}")
    if min(x.shape) < 1:
        raise ConfigError(f"clip dimensions must all be >= 1, got {x.shape}")
    if channels is not None and x.shape[0] != channels:
        raise ConfigError(f"clip has {x.shape[0]} channels, layer expects {channels}")
    if not np.isfinite(x).all():
        raise NonFiniteDataError("clip contains NaN or infinite values")
    return x


def temporal_output_len(t: int, kernel_t: int, stride_t: int, front: int) -> int:
    """Number of output time steps for an input of t slices (0 if not enough)."""
    if t + front < kernel_t:
        return 0
    return (t + front - kernel_t) // stride_t + 1


def latest_input_index(j: int, kernel_t: int, stride_t: int, front: int) -> int:
    """Largest original input time index read by output step j.

    May be negative when the whole window sits inside the replicated region;
    the effective index is then 0 (the replicated first slice).
    """
    return j * stride_t + (kernel_t - 1) - front


def _spatial_out(extent: int, kernel: int, stride: int, pad: int) -> int:
    out = (extent + 2 * pad - kernel) // stride + 1
    return out


@dataclass
class CausalConvSpec:
    """3D convolution with front-replicated temporal padding."""

    name: str
    in_channels: int
    out_channels: int
    kernel: tuple[int, int, int]
    stride: tuple[int, int, int] = (1, 1, 1)
    spatial_padding: tuple[int, int] = (0, 0)
    front_replicate: int = 0
    weights: np.ndarray | None = field(default=None, repr=False)
    bias: np.ndarray | None = field(default=None, repr=False)
    has_bias: bool = True

    def __post_init__(self):
        self.kernel = tuple(int(k) for k in self.kernel)
        self.stride = tuple(int(s) for s in self.stride)
        self.spatial_padding = tuple(int(p) for p in self.spatial_padding)
        if len(self.kernel) != 3 or min(self.kernel) < 1:
            raise ConfigError(f"{self.name}: kernel must be three positive ints")
        if len(self.stride) != 3 or min(self.stride) < 1:
            raise ConfigError(f"{self.name}: stride must be three positive ints")
        if len(self.spatial_padding) != 2 or min(self.spatial_padding) < 0:
            raise ConfigError(f"{self.name}: spatial padding must be two ints >= 0")
        if self.front_replicate < 0:
            raise ConfigError(f"{self.name}: front_replicate must be >= 0")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float32)
            expect = (self.out_channels, self.in_channels) + self.kernel
            if self.weights.shape != expect:
                raise ConfigError(
                    f"{self.name}: weights shape {self.weights.shape} != {expect}"
                )
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float32)
            if self.bias.shape != (self.out_channels,):
                raise ConfigError(f"{self.name}: bias must have one value per output channel")

    @classmethod
    def from_offline(cls, name, in_channels, out_channels, kernel, stride=(1, 1, 1),
                     padding=(0, 0, 0), weights=None, bias=None):
        """Adapt an offline layer with symmetric padding (p_t, p_h, p_w).

        Temporal padding becomes front replication of 2*p_t slices, which
        preserves the output length of the symmetric layout.
        """
        return cls(
            name=name,
            in_channels=in_channels,
            out_channels=out_channels,
            kernel=tuple(kernel),
            stride=tuple(stride),
            spatial_padding=(padding[1], padding[2]),
            front_replicate=2 * padding[0],
            weights=weights,
            bias=bias,
            has_bias=bias is not None,
        )


@dataclass
class CausalPoolSpec:
    """3D pooling with the first time slice replicated on the front."""

    name: str
    mode: str
    kernel: tuple[int, int, int]
    stride: tuple[int, int, int] = (1, 1, 1)
    front_replicate: int = 0

    def __post_init__(self):
        if self.mode not in POOL_MODES:
            raise ConfigError(f"{self.name}: unknown pool mode {self.mode!r}")
        self.kernel = tuple(int(k) for k in self.kernel)
        self.stride = tuple(int(s) for s in self.stride)
        if len(self.kernel) != 3 or min(self.kernel) < 1:
            raise ConfigError(f"{self.name}: kernel must be three positive ints")
        if len(self.stride) != 3 or min(self.stride) < 1:
            raise ConfigError(f"{self.name}: stride must be three positive ints")
        if self.front_replicate < 0:
            raise ConfigError(f"{self.name}: front_replicate must be >= 0")


@dataclass
class CausalBatchNormSpec:
    """Per-channel normalization with statistics from leading time slices only."""

    name: str
    channels: int
    eps: float = 1e-5
    stat_depth: int = 1
    gamma: np.ndarray | None = field(default=None, repr=False)
    beta: np.ndarray | None = field(default=None, repr=False)
    running_mean: np.ndarray | None = field(default=None, repr=False)
    running_var: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.eps < 0:
            raise ConfigError(f"{self.name}: eps must be >= 0")
        if self.stat_depth < 1:
            raise ConfigError(f"{self.name}: stat_depth must be >= 1")
        for attr in ("gamma", "beta", "running_mean", "running_var"):
            val = getattr(self, attr)
            if val is None:
                continue
            arr = np.asarray(val, dtype=np.float32)
            if arr.shape != (self.channels,):
                raise ConfigError(f"{self.name}: {attr} must have one value per channel")
            setattr(self, attr, arr)
        if self.running_var is not None and (self.running_var < 0).any():
            raise ConfigError(f"{self.name}: running_var must be >= 0")


@dataclass
class ActivationSpec:
    """Elementwise nonlinearity."""

    name: str
    kind: str = "relu"

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ConfigError(f"{self.name}: unknown activation {self.kind!r}")


LayerSpec = CausalConvSpec | CausalPoolSpec | CausalBatchNormSpec | ActivationSpec


def causal_conv3d(clip, spec: CausalConvSpec) -> np.ndarray:
    """Convolve with zero spatial padding and front-replicated temporal padding."""
    x = check_clip(clip, spec.in_channels)
    if spec.weights is None:
        raise ConfigError(f"{spec.name}: weights are not bound")
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    ph, pw = spec.spatial_padding
    _, t, h, w = x.shape
    t_out = temporal_output_len(t, kt, st, spec.front_replicate)
    if t_out < 1:
        raise ConfigError(
            f"{spec.name}: {t} time slices (+{spec.front_replicate} replicated) "
            f"cannot fill a kernel of depth {kt}"
        )
    h_out = _spatial_out(h, kh, sh, ph)
    w_out = _spatial_out(w, kw, sw, pw)
    if h_out < 1 or w_out < 1:
        raise ConfigError(f"{spec.name}: spatial extent {h}x{w} too small for kernel")

    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if spec.front_replicate:
        xp = np.concatenate(
            [np.repeat(xp[:, :1], spec.front_replicate, axis=1), xp], axis=1
        )
    out = np.zeros((spec.out_channels, t_out, h_out, w_out), dtype=np.float32)
    for dt in range(kt):
        ts = xp[:, dt : dt + (t_out - 1) * st + 1 : st]
        for dy in range(kh):
            for dx in range(kw):
                window = ts[
                    :, :, dy : dy + (h_out - 1) * sh + 1 : sh, dx : dx + (w_out - 1) * sw + 1 : sw
                ]
                out += np.einsum(
                    "oi,ithw->othw", spec.weights[:, :, dt, dy, dx], window
                )
    if spec.bias is not None:
        out += spec.bias[:, None, None, None]
    return out


def causal_pool3d(clip, spec: CausalPoolSpec) -> np.ndarray:
    """Pool with the first time slice replicated front_replicate times."""
    x = check_clip(clip)
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    _, t, h, w = x.shape
    t_out = temporal_output_len(t, kt, st, spec.front_replicate)
    if t_out < 1:
        raise ConfigError(
            f"{spec.name}: {t} time slices (+{spec.front_replicate} replicated) "
            f"cannot fill a kernel of depth {kt}"
        )
    h_out = _spatial_out(h, kh, sh, 0)
    w_out = _spatial_out(w, kw, sw, 0)
    if h_out < 1 or w_out < 1:
        raise ConfigError(f"{spec.name}: spatial extent {h}x{w} too small for kernel")

    xp = x
    if spec.front_replicate:
        xp = np.concatenate(
            [np.repeat(x[:, :1], spec.front_replicate, axis=1), x], axis=1
        )
    acc = None
    for dt in range(kt):
        ts = xp[:, dt : dt + (t_out - 1) * st + 1 : st]
        for dy in range(kh):
            for dx in range(kw):
                window = ts[
                    :, :, dy : dy + (h_out - 1) * sh + 1 : sh, dx : dx + (w_out - 1) * sw + 1 : sw
                ]
                if acc is None:
                    acc = window.copy()
                elif spec.mode == "max":
                    np.maximum(acc, window, out=acc)
                else:
                    acc += window
    if spec.mode == "average":
        acc /= np.float32(kt * kh * kw)
    return acc


def causal_batchnorm(clip, spec: CausalBatchNormSpec, mode: str = "inference") -> np.ndarray:
    """Normalize per channel.

    Inference mode uses the stored running statistics. Training mode computes
    mean/variance from the first min(stat_depth, T) time slices and applies
    them to every slice; stat_depth > T clamps to T with a warning.
    """
    x = check_clip(clip, spec.channels)
    if mode not in ("inference", "training"):
        raise ConfigError(f"{spec.name}: unknown batchnorm mode {mode!r}")
    if mode == "inference":
        if spec.running_mean is None or spec.running_var is None:
            raise ConfigError(f"{spec.name}: running statistics are not bound")
        mean = spec.running_mean
        var = spec.running_var
    else:
        t = x.shape[1]
        k = spec.stat_depth
        if k > t:
            warnings.warn(
                f"{spec.name}: stat_depth {k} exceeds {t} available slices; clamped",
                RuntimeWarning,
                stacklevel=2,
            )
            k = t
        lead = x[:, :k]
        mean = lead.mean(axis=(1, 2, 3))
        var = lead.var(axis=(1, 2, 3))
    gamma = spec.gamma if spec.gamma is not None else np.ones(spec.channels, np.float32)
    beta = spec.beta if spec.beta is not None else np.zeros(spec.channels, np.float32)
    scale = gamma / np.sqrt(var + np.float32(spec.eps))
    shift = beta - mean * scale
    return x * scale[:, None, None, None] + shift[:, None, None, None]


def activation(clip, kind: str) -> np.ndarray:
    """Elementwise map; shape preserved."""
    x = check_clip(clip)
    if kind == "relu":
        return np.maximum(x, np.float32(0))
    if kind == "sigmoid":
        with np.errstate(over="ignore"):
            return np.float32(1) / (np.float32(1) + np.exp(-x))
    if kind == "identity":
        return x
    raise ConfigError(f"unknown activation kind {kind!r}")


@dataclass
class NetworkSpec:
    """Ordered causal layers plus the classification head."""

    input_channels: int
    input_height: int
    input_width: int
    layers: list
    head: HeadSpec

    def validate(self) -> None:
        """Check channel/spatial chain compatibility and the head dimension."""
        names = set()
        c, h, w = self.input_channels, self.input_height, self.input_width
        if min(c, h, w) < 1:
            raise ConfigError("input signature dimensions must be >= 1")
        for i, layer in enumerate(self.layers):
            where = f"layers[{i}] ({layer.name})"
            if layer.name in names or layer.name == "head":
                raise ConfigError(f"{where}: duplicate layer name")
            names.add(layer.name)
            if isinstance(layer, CausalConvSpec):
                if layer.in_channels != c:
                    raise ConfigError(
                        f"{where}: expects {layer.in_channels} channels, chain carries {c}"
                    )
                c = layer.out_channels
                h = _spatial_out(h, layer.kernel[1], layer.stride[1], layer.spatial_padding[0])
                w = _spatial_out(w, layer.kernel[2], layer.stride[2], layer.spatial_padding[1])
            elif isinstance(layer, CausalPoolSpec):
                h = _spatial_out(h, layer.kernel[1], layer.stride[1], 0)
                w = _spatial_out(w, layer.kernel[2], layer.stride[2], 0)
            elif isinstance(layer, CausalBatchNormSpec):
                if layer.channels != c:
                    raise ConfigError(
                        f"{where}: normalizes {layer.channels} channels, chain carries {c}"
                    )
            elif isinstance(layer, ActivationSpec):
                pass
            else:
                raise ConfigError(f"{where}: unknown layer type {type(layer).__name__}")
            if h < 1 or w < 1:
                raise ConfigError(f"{where}: spatial extent shrinks below 1x1")
        if self.head.features != c:
            raise ConfigError(
                f"head expects {self.head.features} features, chain produces {c}"
            )

    def min_input_frames(self) -> int:
        """Smallest clip length for which every layer emits at least one step."""
        need = 1
        for layer in reversed(self.layers):
            if isinstance(layer, (CausalConvSpec, CausalPoolSpec)):
                kt, st = layer.kernel[0], layer.stride[0]
                need = (need - 1) * st + kt - layer.front_replicate
                need = max(need, 1)
        return need

    def trace_steps_for(self, frames: int) -> int:
        """Trace length produced by a clip of the given frame count."""
        t = frames
        for layer in self.layers:
            if isinstance(layer, (CausalConvSpec, CausalPoolSpec)):
                t = temporal_output_len(t, layer.kernel[0], layer.stride[0], layer.front_replicate)
                if t < 1:
                    return 0
        return t

    def trace_latest_frame(self, step: int) -> int:
        """Largest input frame index that can influence trace step `step`.

        The head aggregates all feature steps <= step, so the bound composes
        emission times through the temporal layers.
        """
        idx = step
        for layer in reversed(self.layers):
            if isinstance(layer, (CausalConvSpec, CausalPoolSpec)):
                idx = latest_input_index(
                    idx, layer.kernel[0], layer.stride[0], layer.front_replicate
                )
                idx = max(idx, 0)
        return idx


def apply_layer(volume: np.ndarray, layer: LayerSpec, bn_mode: str = "inference") -> np.ndarray:
    if isinstance(layer, CausalConvSpec):
        return causal_conv3d(volume, layer)
    if isinstance(layer, CausalPoolSpec):
        return causal_pool3d(volume, layer)
    if isinstance(layer, CausalBatchNormSpec):
        return causal_batchnorm(volume, layer, bn_mode)
    if isinstance(layer, ActivationSpec):
        return activation(volume, layer.kind)
    raise ConfigError(f"unknown layer type {type(layer).__name__}")


def spatial_features(volume: np.ndarray) -> np.ndarray:
    """Global average over height/width: (C,T,H,W) -> (T, C) float64."""
    return volume.mean(axis=(2, 3), dtype=np.float64).T


def offline_forward(clip, net: NetworkSpec) -> ProbTrace:
    """Run the whole network on a complete clip and return its probability trace."""
    net.validate()
    x = check_clip(clip, net.input_channels)
    if x.shape[2] != net.input_height or x.shape[3] != net.input_width:
        raise ConfigError(
            f"clip is {x.shape[2]}x{x.shape[3]}, network expects "
            f"{net.input_height}x{net.input_width}"
        )
    needed = net.min_input_frames()
    if x.shape[1] < needed:
        raise ConfigError(f"need >= {needed} frames, got {x.shape[1]}")
    for layer in net.layers:
        x = apply_layer(x, layer)
    feats = spatial_features(x)
    return head_probabilities(cumulative_mean(feats), net.head)
