"""Checkpoint conversion into the engine's spec + weights files."""

import csv
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .adapt import adapted_probabilities
from .archs import build
from .writers import write_clip, write_spec, write_weights


class ExportError(Exception):
    """Checkpoint cannot be exported (unsupported constructs, bad state dict)."""


@dataclass
class ExportManifest:
    architecture: str
    input_size: tuple
    layers: list = field(default_factory=list)     # one row per source layer
    warnings: list = field(default_factory=list)
    spec_path: str = ""
    weights_path: str = ""
    verification: dict | None = None

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "input_size": list(self.input_size),
            "layers": self.layers,
            "warnings": self.warnings,
            "spec_path": self.spec_path,
            "weights_path": self.weights_path,
            "verification": self.verification,
        }


def _tolist(value, n=3):
    if isinstance(value, int):
        return [value] * n
    return list(value)


def _map_layers(model: nn.Module, manifest: ExportManifest, allow_partial: bool):
    layer_docs = []
    tensors = {}
    counters = {}
    unsupported = []

    def fresh_name(kind):
        counters[kind] = counters.get(kind, 0) + 1
        return f"{kind}{counters[kind]}"

    channels = None
    for idx, layer in enumerate(model.features):
        source = f"features[{idx}] {type(layer).__name__}"
        if isinstance(layer, nn.Conv3d):
            problems = []
            if layer.groups != 1:
                problems.append("grouped convolution")
            if tuple(layer.dilation) != (1, 1, 1):
                problems.append("dilated convolution")
            if problems:
                unsupported.append(f"{source}: {', '.join(problems)}")
                continue
            name = fresh_name("conv")
            pad = _tolist(layer.padding)
            layer_docs.append({
                "kind": "conv",
                "name": name,
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels,
                "kernel": _tolist(layer.kernel_size),
                "stride": _tolist(layer.stride),
                "spatial_padding": pad[1:],
                "front_replicate": 2 * pad[0],
                "bias": layer.bias is not None,
            })
            tensors[f"{name}.weight"] = layer.weight.detach().numpy()
            if layer.bias is not None:
                tensors[f"{name}.bias"] = layer.bias.detach().numpy()
            channels = layer.out_channels
            manifest.layers.append({"source": source, "kind": "conv", "name": name})
        elif isinstance(layer, nn.BatchNorm3d):
            name = fresh_name("bn")
            layer_docs.append({
                "kind": "batchnorm",
                "name": name,
                "channels": layer.num_features,
                "eps": layer.eps,
                "stat_depth": 1,
            })
            ones = np.ones(layer.num_features, np.float32)
            zeros = np.zeros(layer.num_features, np.float32)
            tensors[f"{name}.gamma"] = layer.weight.detach().numpy() if layer.weight is not None else ones
            tensors[f"{name}.beta"] = layer.bias.detach().numpy() if layer.bias is not None else zeros
            tensors[f"{name}.running_mean"] = layer.running_mean.detach().numpy()
            tensors[f"{name}.running_var"] = layer.running_var.detach().numpy()
            manifest.layers.append({"source": source, "kind": "batchnorm", "name": name})
        elif isinstance(layer, nn.ReLU):
            name = fresh_name("act")
            layer_docs.append({"kind": "activation", "name": name, "activation": "relu"})
            manifest.layers.append({"source": source, "kind": "activation", "name": name})
        elif isinstance(layer, (nn.AvgPool3d, nn.MaxPool3d)):
            pad = _tolist(layer.padding)
            if pad[1:] != [0, 0]:
                unsupported.append(f"{source}: spatial pool padding")
                continue
            if getattr(layer, "ceil_mode", False):
                unsupported.append(f"{source}: ceil_mode pooling")
                continue
            name = fresh_name("pool")
            stride = layer.stride if layer.stride is not None else layer.kernel_size
            layer_docs.append({
                "kind": "pool",
                "name": name,
                "mode": "average" if isinstance(layer, nn.AvgPool3d) else "max",
                "kernel": _tolist(layer.kernel_size),
                "stride": _tolist(stride),
                "front_replicate": 2 * pad[0],
            })
            manifest.layers.append({"source": source, "kind": "pool", "name": name})
        else:
            unsupported.append(f"{source}: no adaptation rule")

    for item in unsupported:
        manifest.warnings.append(f"unsupported: {item}")
    if unsupported and not allow_partial:
        raise ExportError(
            "unsupported constructs (rerun with --allow-partial to skip them): "
            + "; ".join(unsupported)
        )
    if unsupported:
        manifest.warnings.append("partial export: skipped layers change the computation")
    return layer_docs, tensors, channels


def export_checkpoint(
    src,
    architecture: str,
    spec_out,
    weights_out,
    classes: int = 4,
    input_size: tuple = (32, 32),
    allow_partial: bool = False,
    verify_clips: int = 0,
    verify_frames: int = 16,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> ExportManifest:
    """Map a checkpoint of a known architecture onto the engine formats."""
    try:
        model = build(architecture, classes=classes)
    except KeyError as exc:
        raise ExportError(str(exc)) from exc
    state = torch.load(src, map_location="cpu", weights_only=True)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise ExportError(f"checkpoint does not match {architecture}: {exc}") from exc
    model.eval()

    manifest = ExportManifest(architecture=architecture, input_size=tuple(input_size))
    layer_docs, tensors, channels = _map_layers(model, manifest, allow_partial)
    if channels is None:
        raise ExportError("no convolutional layers survived the mapping")
    if model.fc.in_features != channels:
        raise ExportError(
            f"head expects {model.fc.in_features} features, layers produce {channels}"
        )

    head_mode = "binary" if model.fc.out_features == 1 else "multiclass"
    in_channels = layer_docs[0]["in_channels"]
    doc = {
        "input": {"channels": in_channels, "height": input_size[0], "width": input_size[1]},
        "layers": layer_docs,
        "head": {
            "mode": head_mode,
            "classes": model.fc.out_features,
            "features": model.fc.in_features,
        },
    }
    tensors["head.weight"] = model.fc.weight.detach().numpy()
    tensors["head.bias"] = model.fc.bias.detach().numpy()
    write_spec(spec_out, doc)
    write_weights(weights_out, tensors)
    manifest.spec_path = str(spec_out)
    manifest.weights_path = str(weights_out)
    manifest.layers.append({"source": "fc Linear", "kind": "head", "name": "head"})

    if verify_clips:
        manifest.verification = _verify(
            model, spec_out, weights_out, in_channels, input_size,
            verify_clips, verify_frames, seed, tolerance,
        )
    return manifest


def _engine_trace(spec_path, weights_path, clip: np.ndarray) -> np.ndarray:
    """Per-step per-class probabilities from the engine CLI (offline mode)."""
    with tempfile.TemporaryDirectory() as tmp:
        clip_path = Path(tmp) / "clip.prvc"
        trace_path = Path(tmp) / "trace.csv"
        write_clip(clip_path, clip)
        proc = subprocess.run(
            [
                sys.executable, "-m", "exitstream.cli", "classify",
                "--spec", str(spec_path), "--weights", str(weights_path),
                "--clip", str(clip_path), "--mode", "offline", "--out", str(trace_path),
            ],
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise ExportError(f"engine classify failed: {proc.stderr.strip()}")
        cells = {}
        with open(trace_path, newline="") as fh:
            for row in csv.DictReader(fh):
                cells[(int(row["step"]), int(row["class"]))] = float(row["probability"])
    steps = max(step for step, _ in cells) + 1
    classes = sorted({cls for _, cls in cells})
    out = np.zeros((steps, len(classes)))
    for (step, cls), value in cells.items():
        out[step, classes.index(cls)] = value
    return out


def _verify(model, spec_path, weights_path, in_channels, input_size,
            clips, frames, seed, tolerance) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(clips):
        clip = rng.standard_normal(
            (in_channels, frames, input_size[0], input_size[1])
        ).astype(np.float32)
        reference = adapted_probabilities(model, torch.from_numpy(clip)).numpy()
        engine = _engine_trace(spec_path, weights_path, clip)
        if engine.shape[0] != reference.shape[0]:
            raise ExportError(
                f"step count mismatch: engine {engine.shape[0]} vs reference {reference.shape[0]}"
            )
        worst = max(worst, float(np.abs(engine - reference).max()))
    return {
        "clips": clips,
        "frames": frames,
        "max_abs_diff": worst,
        "tolerance": tolerance,
        "passed": worst <= tolerance,
    }
