"""Generator and critic architectures.

The generator is constrained to the engine's layer vocabulary: a dense
projection to a 4x4 feature map, then kernel-4/stride-2/pad-1 transposed
convolutions doubling the side, batch norm + relu on inner blocks (folded
to per-channel affines at export), and a sigmoid output. The critic is a
plain strided-conv stack; no norm layers, as is usual with a gradient
penalty.
"""

from __future__ import annotations

import torch
from torch import nn


class Generator(nn.Module):
    def __init__(self, latent_dim: int = 64, base_channels: int = 64,
                 output_side: int = 64):
        super().__init__()
        n_doublings = (output_side // 4).bit_length() - 1
        if 4 * 2 ** n_doublings != output_side:
            raise ValueError("output_side must be 4 * 2**k")
        self.latent_dim = latent_dim
        self.base_channels = base_channels
        self.output_side = output_side
        self.project = nn.Linear(latent_dim, 4 * 4 * base_channels)
        blocks = []
        ch = base_channels
        for i in range(n_doublings):
            last = i == n_doublings - 1
            out_ch = 1 if last else max(ch // 2, 8)
            if last:
                blocks.append(nn.ConvTranspose2d(ch, out_ch, 4, 2, 1))
            else:
                blocks += [nn.ConvTranspose2d(ch, out_ch, 4, 2, 1, bias=False),
                           nn.BatchNorm2d(out_ch),
                           nn.ReLU()]
            ch = out_ch
        self.blocks = nn.Sequential(*blocks)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = self.project(z)
        x = x.view(-1, self.base_channels, 4, 4)
        return torch.sigmoid(self.blocks(x))


class Critic(nn.Module):
    def __init__(self, base_channels: int = 32, input_side: int = 64):
        super().__init__()
        layers = []
        ch_in, ch_out, side = 1, base_channels, input_side
        while side > 4:
            layers += [nn.Conv2d(ch_in, ch_out, 4, 2, 1),
                       nn.LeakyReLU(0.2)]
            ch_in, ch_out, side = ch_out, ch_out * 2, side // 2
        self.features = nn.Sequential(*layers)
        self.score = nn.Linear(ch_in * side * side, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x)
        return self.score(h.flatten(1))
