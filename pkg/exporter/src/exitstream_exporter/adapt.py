"""Causally adapted forward pass of a reference model, in its own framework.

This is the verification reference: symmetric temporal padding is replaced by
front replication of the first frame (2*p_t slices), batch norm runs on its
stored statistics, and the head turns per-step cumulative means of the
globally pooled features into per-step probabilities.
"""

import torch
import torch.nn.functional as F
from torch import nn


def _front_replicate(x: torch.Tensor, count: int) -> torch.Tensor:
    if count == 0:
        return x
    return torch.cat([x[:, :, :1].expand(-1, -1, count, -1, -1), x], dim=2)


def adapted_probabilities(model: nn.Module, clip: torch.Tensor) -> torch.Tensor:
    """Per-step class probabilities of the causally padded equivalent model.

    clip: (C, T, H, W) float32. Returns (steps, classes) probabilities
    (sigmoid for a single-output head, softmax otherwise).
    """
    x = clip[None]
    with torch.no_grad():
        for layer in model.features:
            if isinstance(layer, nn.Conv3d):
                x = _front_replicate(x, 2 * layer.padding[0])
                x = F.conv3d(
                    x,
                    layer.weight,
                    layer.bias,
                    stride=layer.stride,
                    padding=(0, layer.padding[1], layer.padding[2]),
                    dilation=layer.dilation,
                    groups=layer.groups,
                )
            elif isinstance(layer, nn.BatchNorm3d):
                x = F.batch_norm(
                    x,
                    layer.running_mean,
                    layer.running_var,
                    layer.weight,
                    layer.bias,
                    training=False,
                    eps=layer.eps,
                )
            elif isinstance(layer, nn.ReLU):
                x = F.relu(x)
            elif isinstance(layer, (nn.AvgPool3d, nn.MaxPool3d)):
                kernel = layer.kernel_size
                stride = layer.stride or kernel
                padding = layer.padding
                pad = padding if isinstance(padding, tuple) else (padding,) * 3
                if pad != (0, 0, 0) and pad[1:] != (0, 0):
                    raise ValueError("spatial pool padding has no causal equivalent")
                x = _front_replicate(x, 2 * pad[0])
                op = F.avg_pool3d if isinstance(layer, nn.AvgPool3d) else F.max_pool3d
                x = op(x, kernel, stride)
            else:
                raise ValueError(f"no causal adaptation for {type(layer).__name__}")
        feats = x.mean(dim=(3, 4))[0].T          # (steps, channels)
        counts = torch.arange(1, feats.shape[0] + 1, dtype=feats.dtype)[:, None]
        aggregated = feats.cumsum(dim=0) / counts
        logits = model.fc(aggregated)
        if logits.shape[1] == 1:
            return torch.sigmoid(logits)
        return torch.softmax(logits, dim=1)
