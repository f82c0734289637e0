"""Bit-exact file formats: network specs (JSON), weights (PRVW), clips (PRVC).

Binary layouts are little-endian regardless of host order:

  PRVW  magic "PRVW", version u32, entry count u32, then per entry:
        name length u16, name bytes (UTF-8), dtype u8 (0 = float32),
        rank u8, dims u32 x rank, payload row-major float32.
  PRVC  magic "PRVC", version u32, dims u32 x 4 (C,T,H,W), payload float32.

The spec document is versioned JSON carrying every scalar layer field; weight
tensors live in the weights file under convention names derived from the
layer name (e.g. "conv1.weight", "bn1.gamma", "head.bias").
"""

import json
import struct
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    DuplicateNameError,
    FormatError,
    NonFiniteDataError,
    SpecParseError,
    TruncatedPayloadError,
    VersionError,
)
from .head import HeadSpec
from .layers import (
    ActivationSpec,
    CausalBatchNormSpec,
    CausalConvSpec,
    CausalPoolSpec,
    NetworkSpec,
)

WEIGHTS_MAGIC = b"PRVW"
CLIP_MAGIC = b"PRVC"
SPEC_FORMAT = "PRVS"
FORMAT_VERSION = 1
DTYPE_F32 = 0


def save_weights(path, tensors: dict) -> None:
    """Write a name -> float32 tensor map; entry order follows the dict."""
    out = bytearray()
    out += struct.pack("<4sII", WEIGHTS_MAGIC, FORMAT_VERSION, len(tensors))
    seen = set()
    for name, arr in tensors.items():
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        seen.add(name)
        a = np.ascontiguousarray(arr, dtype=np.float32)
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<BB", DTYPE_F32, a.ndim)
        out += struct.pack(f"<{a.ndim}I", *a.shape)
        out += a.tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(
                f"{self.what}: expected {n} more bytes at offset {self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.what}: {len(self.data) - self.pos} trailing bytes after payload"
            )


def load_weights(path) -> dict:
    """Read a PRVW file back into a name -> float32 array map."""
    r = _Reader(Path(path).read_bytes(), "weights file")
    magic, version, count = r.unpack("<4sII")
    if magic != WEIGHTS_MAGIC:
        raise BadMagicError(f"weights file must start with {WEIGHTS_MAGIC!r}, got {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported weights version {version}")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        dtype, rank = r.unpack("<BB")
        if dtype != DTYPE_F32:
            raise FormatError(f"entry {name!r}: unsupported dtype code {dtype}")
        dims = r.unpack(f"<{rank}I") if rank else ()
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(4 * n)
        if name in tensors:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(
            np.float32, copy=True
        )
    r.done()
    return tensors


def save_clip(path, clip) -> None:
    a = np.ascontiguousarray(clip, dtype=np.float32)
    if a.ndim != 4:
        raise ConfigError(f"clip must be rank 4 (C,T,H,W), got rank {a.ndim}")
    if not np.isfinite(a).all():
        raise NonFiniteDataError("clip contains NaN or infinite values")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI4I", CLIP_MAGIC, FORMAT_VERSION, *a.shape))
        fh.write(a.tobytes())


def load_clip(path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), "clip file")
    magic, version, c, t, h, w = r.unpack("<4sI4I")
    if magic != CLIP_MAGIC:
        raise BadMagicError(f"clip file must start with {CLIP_MAGIC!r}, got {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported clip version {version}")
    n = c * t * h * w
    payload = r.take(4 * n)
    r.done()
    clip = np.frombuffer(payload, dtype="<f4").reshape(c, t, h, w).astype(np.float32, copy=True)
    if not np.isfinite(clip).all():
        raise NonFiniteDataError("clip payload contains NaN or infinite values")
    return clip


def _layer_to_json(layer) -> dict:
    if isinstance(layer, CausalConvSpec):
        return {
            "kind": "conv",
            "name": layer.name,
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
            "kernel": list(layer.kernel),
            "stride": list(layer.stride),
            "spatial_padding": list(layer.spatial_padding),
            "front_replicate": layer.front_replicate,
            "bias": bool(layer.has_bias),
        }
    if isinstance(layer, CausalPoolSpec):
        return {
            "kind": "pool",
            "name": layer.name,
            "mode": layer.mode,
            "kernel": list(layer.kernel),
            "stride": list(layer.stride),
            "front_replicate": layer.front_replicate,
        }
    if isinstance(layer, CausalBatchNormSpec):
        return {
            "kind": "batchnorm",
            "name": layer.name,
            "channels": layer.channels,
            "eps": layer.eps,
            "stat_depth": layer.stat_depth,
        }
    if isinstance(layer, ActivationSpec):
        return {"kind": "activation", "name": layer.name, "activation": layer.kind}
    raise ConfigError(f"unknown layer type {type(layer).__name__}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SpecParseError(f"{where}: missing field {key!r}")
    return obj[key]


def _layer_from_json(obj: dict, index: int):
    where = f"layers[{index}]"
    kind = _require(obj, "kind", where)
    name = _require(obj, "name", where)
    where = f"{where} ({name})"
    try:
        if kind == "conv":
            return CausalConvSpec(
                name=name,
                in_channels=_require(obj, "in_channels", where),
                out_channels=_require(obj, "out_channels", where),
                kernel=tuple(_require(obj, "kernel", where)),
                stride=tuple(_require(obj, "stride", where)),
                spatial_padding=tuple(_require(obj, "spatial_padding", where)),
                front_replicate=_require(obj, "front_replicate", where),
                has_bias=_require(obj, "bias", where),
            )
        if kind == "pool":
            return CausalPoolSpec(
                name=name,
                mode=_require(obj, "mode", where),
                kernel=tuple(_require(obj, "kernel", where)),
                stride=tuple(_require(obj, "stride", where)),
                front_replicate=_require(obj, "front_replicate", where),
            )
        if kind == "batchnorm":
            return CausalBatchNormSpec(
                name=name,
                channels=_require(obj, "channels", where),
                eps=_require(obj, "eps", where),
                stat_depth=_require(obj, "stat_depth", where),
            )
        if kind == "activation":
            return ActivationSpec(name=name, kind=_require(obj, "activation", where))
    except ConfigError as exc:
        raise SpecParseError(f"{where}: {exc}") from exc
    raise SpecParseError(f"{where}: unknown layer kind {kind!r}")


def save_spec(path, net: NetworkSpec) -> None:
    """Write the architecture document; tensors go to the weights file."""
    net.validate()
    doc = {
        "format": SPEC_FORMAT,
        "version": FORMAT_VERSION,
        "input": {
            "channels": net.input_channels,
            "height": net.input_height,
            "width": net.input_width,
        },
        "layers": [_layer_to_json(layer) for layer in net.layers],
        "head": {
            "mode": net.head.mode,
            "classes": net.head.classes,
            "features": net.head.features,
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_spec(path) -> NetworkSpec:
    """Read and validate an architecture document; weight arrays stay unbound."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"spec document: invalid JSON at line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise SpecParseError("spec document: top level must be an object")
    if doc.get("format") != SPEC_FORMAT:
        raise BadMagicError(f"spec document: format must be {SPEC_FORMAT!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(f"spec document: unsupported version {doc.get('version')!r}")
    inp = _require(doc, "input", "spec document")
    layers = [_layer_from_json(obj, i) for i, obj in enumerate(_require(doc, "layers", "spec document"))]
    head_obj = _require(doc, "head", "spec document")
    mode = _require(head_obj, "mode", "head")
    classes = _require(head_obj, "classes", "head")
    features = _require(head_obj, "features", "head")
    try:
        head = HeadSpec(
            mode=mode,
            weights=np.zeros((classes, features), dtype=np.float64),
            bias=np.zeros(classes, dtype=np.float64),
        )
        net = NetworkSpec(
            input_channels=_require(inp, "channels", "input"),
            input_height=_require(inp, "height", "input"),
            input_width=_require(inp, "width", "input"),
            layers=layers,
            head=head,
        )
        net.validate()
    except ConfigError as exc:
        raise ConfigError(f"spec document: {exc}") from exc
    return net


def collect_weights(net: NetworkSpec) -> dict:
    """Gather all bound tensors under their convention names."""
    tensors = {}
    for layer in net.layers:
        if isinstance(layer, CausalConvSpec):
            if layer.weights is None:
                raise ConfigError(f"{layer.name}: weights are not bound")
            tensors[f"{layer.name}.weight"] = layer.weights
            if layer.has_bias:
                if layer.bias is None:
                    raise ConfigError(f"{layer.name}: bias is not bound")
                tensors[f"{layer.name}.bias"] = layer.bias
        elif isinstance(layer, CausalBatchNormSpec):
            for attr, suffix in (
                ("gamma", "gamma"),
                ("beta", "beta"),
                ("running_mean", "running_mean"),
                ("running_var", "running_var"),
            ):
                val = getattr(layer, attr)
                if val is None:
                    raise ConfigError(f"{layer.name}: {attr} is not bound")
                tensors[f"{layer.name}.{suffix}"] = val
    tensors["head.weight"] = np.asarray(net.head.weights, dtype=np.float32)
    tensors["head.bias"] = np.asarray(net.head.bias, dtype=np.float32)
    return tensors


def bind_weights(net: NetworkSpec, tensors: dict) -> NetworkSpec:
    """Attach tensors from a weights map to an unbound spec."""

    def grab(name, shape):
        if name not in tensors:
            raise ConfigError(f"weights file is missing tensor {name!r}")
        arr = tensors[name]
        if tuple(arr.shape) != tuple(shape):
            raise ConfigError(
                f"tensor {name!r} has shape {tuple(arr.shape)}, spec expects {tuple(shape)}"
            )
        return arr

    layers = []
    for layer in net.layers:
        if isinstance(layer, CausalConvSpec):
            shape = (layer.out_channels, layer.in_channels) + layer.kernel
            bias = grab(f"{layer.name}.bias", (layer.out_channels,)) if layer.has_bias else None
            layers.append(
                replace(layer, weights=grab(f"{layer.name}.weight", shape), bias=bias)
            )
        elif isinstance(layer, CausalBatchNormSpec):
            c = (layer.channels,)
            layers.append(
                replace(
                    layer,
                    gamma=grab(f"{layer.name}.gamma", c),
                    beta=grab(f"{layer.name}.beta", c),
                    running_mean=grab(f"{layer.name}.running_mean", c),
                    running_var=grab(f"{layer.name}.running_var", c),
                )
            )
        else:
            layers.append(layer)
    head = HeadSpec(
        mode=net.head.mode,
        weights=grab("head.weight", (net.head.classes, net.head.features)),
        bias=grab("head.bias", (net.head.classes,)),
    )
    return NetworkSpec(
        input_channels=net.input_channels,
        input_height=net.input_height,
        input_width=net.input_width,
        layers=layers,
        head=head,
    )


def save_model(spec_path, weights_path, net: NetworkSpec) -> None:
    save_spec(spec_path, net)
    save_weights(weights_path, collect_weights(net))


def load_model(spec_path, weights_path) -> NetworkSpec:
    return bind_weights(load_spec(spec_path), load_weights(weights_path))
