"""Reference source architectures the exporter knows how to map.

`r3d-tiny` is a reduced R3D-style stack: conv-bn-relu blocks with symmetric
temporal padding, a spatial pooling stage, and a linear head on the globally
pooled features. `r3d-tiny-lstm` exists to exercise the unsupported-layer
path; recurrent layers are outside the adaptation rules.
"""

import torch
from torch import nn


class R3DTiny(nn.Module):
    def __init__(self, classes: int = 4):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv3d(3, 8, kernel_size=(3, 3, 3), stride=(1, 2, 2), padding=(1, 1, 1), bias=False),
            nn.BatchNorm3d(8),
            nn.ReLU(),
            nn.Conv3d(8, 16, kernel_size=(3, 3, 3), stride=(2, 2, 2), padding=(1, 1, 1), bias=False),
            nn.BatchNorm3d(16),
            nn.ReLU(),
            nn.AvgPool3d(kernel_size=(1, 2, 2), stride=(1, 2, 2)),
        )
        self.fc = nn.Linear(16, classes)

    def forward(self, x):
        # standard offline forward: whole clip, global average pool, one logit row
        x = self.features(x)
        x = x.mean(dim=(2, 3, 4))
        return self.fc(x)


class R3DTinyLSTM(nn.Module):
    def __init__(self, classes: int = 4):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv3d(3, 8, kernel_size=(3, 3, 3), stride=(1, 2, 2), padding=(1, 1, 1), bias=False),
            nn.BatchNorm3d(8),
            nn.ReLU(),
            nn.LSTM(8, 8, batch_first=True),
        )
        self.fc = nn.Linear(8, classes)


ARCHITECTURES = {
    "r3d-tiny": R3DTiny,
    "r3d-tiny-lstm": R3DTinyLSTM,
}


def build(architecture: str, classes: int = 4) -> nn.Module:
    if architecture not in ARCHITECTURES:
        raise KeyError(f"unknown architecture {architecture!r}; known: {sorted(ARCHITECTURES)}")
    model = ARCHITECTURES[architecture](classes=classes)
    model.eval()
    return model


def randomize(model: nn.Module, seed: int) -> nn.Module:
    """Give every parameter and running statistic a nontrivial seeded value."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.randn(p.shape, generator=gen) * 0.3)
        for m in model.modules():
            if isinstance(m, nn.BatchNorm3d):
                m.running_mean.copy_(torch.randn(m.running_mean.shape, generator=gen) * 0.2)
                m.running_var.copy_(torch.rand(m.running_var.shape, generator=gen) + 0.5)
    return model
