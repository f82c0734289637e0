"""Small network builders for demos, benchmarks and randomized testing."""

import numpy as np

from .head import BINARY, MULTICLASS, HeadSpec
from .layers import (
    ActivationSpec,
    CausalBatchNormSpec,
    CausalConvSpec,
    CausalPoolSpec,
    NetworkSpec,
)


def _conv(rng, name, in_c, hw, stride_budget):
    out_c = int(rng.integers(1, 5))
    kt = int(rng.integers(1, 4))
    st = int(rng.integers(1, 3)) if stride_budget > 1 else 1
    # Mix the default offline adaptation (f = 2*p_t) with lagging layouts.
    front = int(rng.choice([0, kt - 1, 2 * (kt // 2)]))
    kh = int(rng.choice([1, 3])) if hw[0] >= 3 else 1
    kw = int(rng.choice([1, 3])) if hw[1] >= 3 else 1
    pad = (kh // 2, kw // 2)
    fan_in = in_c * kt * kh * kw
    weights = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (out_c, in_c, kt, kh, kw))
    bias = rng.normal(0.0, 0.1, out_c) if rng.random() < 0.7 else None
    spec = CausalConvSpec(
        name=name,
        in_channels=in_c,
        out_channels=out_c,
        kernel=(kt, kh, kw),
        stride=(st, 1, 1),
        spatial_padding=pad,
        front_replicate=front,
        weights=weights.astype(np.float32),
        bias=None if bias is None else bias.astype(np.float32),
        has_bias=bias is not None,
    )
    return spec, out_c, hw, st


def _pool(rng, name, in_c, hw, stride_budget):
    kt = int(rng.integers(1, 4))
    st = int(rng.integers(1, 3)) if stride_budget > 1 else 1
    front = int(rng.choice([0, 1, kt - 1]))
    ks = 2 if min(hw) >= 6 else 1
    spec = CausalPoolSpec(
        name=name,
        mode=str(rng.choice(["max", "average"])),
        kernel=(kt, ks, ks),
        stride=(st, ks, ks),
        front_replicate=front,
    )
    new_hw = ((hw[0] - ks) // ks + 1, (hw[1] - ks) // ks + 1)
    return spec, in_c, new_hw, st


def _batchnorm(rng, name, channels):
    return CausalBatchNormSpec(
        name=name,
        channels=channels,
        eps=1e-5,
        stat_depth=int(rng.integers(1, 4)),
        gamma=rng.uniform(0.5, 1.5, channels).astype(np.float32),
        beta=rng.normal(0.0, 0.3, channels).astype(np.float32),
        running_mean=rng.normal(0.0, 0.5, channels).astype(np.float32),
        running_var=rng.uniform(0.5, 1.5, channels).astype(np.float32),
    )


def random_tiny_network(rng, head_mode=None, max_total_stride=4, max_lead_in=6):
    """Random 2-4 layer network with bounded stride stack and warm-up length."""
    while True:
        channels = int(rng.integers(1, 4))
        size = int(rng.integers(8, 13))
        c, hw = channels, (size, size)
        layers = []
        total_stride = 1
        for i in range(int(rng.integers(2, 5))):
            kind = rng.choice(["conv", "pool", "batchnorm", "activation"], p=[0.45, 0.2, 0.15, 0.2])
            name = f"{kind[:4]}{i}"
            if kind == "conv":
                spec, c, hw, st = _conv(rng, name, c, hw, max_total_stride // total_stride)
                total_stride *= st
            elif kind == "pool" and min(hw) >= 2:
                spec, c, hw, st = _pool(rng, name, c, hw, max_total_stride // total_stride)
                total_stride *= st
            elif kind == "batchnorm":
                spec = _batchnorm(rng, name, c)
            else:
                spec = ActivationSpec(name=name, kind=str(rng.choice(["relu", "sigmoid", "identity"])))
            layers.append(spec)
        mode = head_mode or str(rng.choice([BINARY, MULTICLASS]))
        rows = 1 if mode == BINARY else int(rng.integers(2, 5))
        head = HeadSpec(
            mode=mode,
            weights=rng.normal(0.0, 1.5 / np.sqrt(c), (rows, c)).astype(np.float32),
            bias=rng.normal(0.0, 0.2, rows).astype(np.float32),
        )
        net = NetworkSpec(
            input_channels=channels,
            input_height=size,
            input_width=size,
            layers=layers,
            head=head,
        )
        net.validate()
        if net.min_input_frames() <= max_lead_in and net.trace_steps_for(16) >= 3:
            return net


def benchmark_network(seed: int = 0, binary: bool = True) -> NetworkSpec:
    """Fixed mid-size stack used by the latency benchmark."""
    rng = np.random.default_rng(seed)

    def conv(name, in_c, out_c, kernel, stride, pad):
        fan_in = in_c * kernel[0] * kernel[1] * kernel[2]
        return CausalConvSpec.from_offline(
            name,
            in_c,
            out_c,
            kernel,
            stride,
            pad,
            weights=rng.normal(0.0, 1.0 / np.sqrt(fan_in), (out_c, in_c) + kernel).astype(np.float32),
            bias=rng.normal(0.0, 0.1, out_c).astype(np.float32),
        )

    layers = [
        conv("conv1", 3, 16, (3, 3, 3), (1, 2, 2), (1, 1, 1)),
        CausalBatchNormSpec(
            name="bn1",
            channels=16,
            gamma=np.ones(16, np.float32),
            beta=np.zeros(16, np.float32),
            running_mean=np.zeros(16, np.float32),
            running_var=np.ones(16, np.float32),
        ),
        ActivationSpec(name="act1", kind="relu"),
        conv("conv2", 16, 32, (3, 3, 3), (2, 2, 2), (1, 1, 1)),
        ActivationSpec(name="act2", kind="relu"),
        CausalPoolSpec(name="pool1", mode="average", kernel=(1, 2, 2), stride=(1, 2, 2)),
    ]
    mode = BINARY if binary else MULTICLASS
    rows = 1 if binary else 4
    head = HeadSpec(
        mode=mode,
        weights=rng.normal(0.0, 0.3, (rows, 32)).astype(np.float32),
        bias=np.zeros(rows, np.float32),
    )
    net = NetworkSpec(input_channels=3, input_height=32, input_width=32, layers=layers, head=head)
    net.validate()
    return net


def random_clip(rng, net: NetworkSpec, frames: int) -> np.ndarray:
    return rng.standard_normal(
        (net.input_channels, frames, net.input_height, net.input_width)
    ).astype(np.float32)
