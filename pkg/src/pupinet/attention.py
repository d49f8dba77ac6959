"""Multi-scale attention with cross-spatial aggregation for 3D feature maps.

Channel groups are folded into the batch axis so one set of parameters
serves every group. Per group, two branches run in parallel:

  (a) pointwise branch: global average pooling along each spatial axis
      (keeping d, h, w respectively) -> shared 1x1x1 conv over the
      concatenated descriptors -> per-axis sigmoid channel attention,
      followed by group normalization;
  (b) local branch: a 3x3x3 convolution.

Cross-spatial aggregation then softmaxes each branch's globally pooled
channel descriptor and matmuls it against the other branch's flattened
spatial map, summing the two single-channel maps into a spatial weight
field that gates the group through a sigmoid. Output shape always equals
input shape.
"""

from __future__ import annotations

import torch
import torch.nn as nn

__all__ = ["MultiScaleAttention3d", "msa_param_count"]


def msa_param_count(channels: int, groups: int) -> int:
    """Learnable scalar count: 1x1 conv + 3^3 conv + group norm on cg = channels/groups."""
    if channels <= 0 or groups <= 0 or channels % groups:
        raise ValueError(f"channels {channels} must be a positive multiple of groups {groups}")
    cg = channels // groups
    conv1 = cg * cg + cg
    conv3 = cg * cg * 27 + cg
    gn = 2 * cg
    return conv1 + conv3 + gn


class MultiScaleAttention3d(nn.Module):
    def __init__(self, channels: int, groups: int = 4):
        super().__init__()
        if channels <= 0 or groups <= 0 or channels % groups:
            raise ValueError(f"channels {channels} must be a positive multiple of groups {groups}")
        self.channels = channels
        self.groups = groups
        cg = channels // groups
        self.softmax = nn.Softmax(-1)
        self.agp = nn.AdaptiveAvgPool3d(1)
        self.pool_d = nn.AdaptiveAvgPool3d((None, 1, 1))
        self.pool_h = nn.AdaptiveAvgPool3d((1, None, 1))
        self.pool_w = nn.AdaptiveAvgPool3d((1, 1, None))
        self.gn = nn.GroupNorm(cg, cg, eps=1e-5)
        self.conv1 = nn.Conv3d(cg, cg, kernel_size=1)
        self.conv3 = nn.Conv3d(cg, cg, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 5:
            raise ValueError(f"expected (N, C, D, H, W), got shape {tuple(x.shape)}")
        b, c, d, h, w = x.shape
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        cg = c // self.groups
        group_x = x.reshape(b * self.groups, cg, d, h, w)

        # (a) per-axis descriptors -> shared pointwise conv -> channel attention
        x_d = self.pool_d(group_x)
        x_h = self.pool_h(group_x).permute(0, 1, 3, 2, 4)
        x_w = self.pool_w(group_x).permute(0, 1, 4, 3, 2)
        dhw = self.conv1(torch.cat([x_d, x_h, x_w], dim=2))
        x_d, x_h, x_w = torch.split(dhw, [d, h, w], dim=2)
        attn = x_d.sigmoid() * x_h.permute(0, 1, 3, 2, 4).sigmoid() * x_w.permute(0, 1, 4, 3, 2).sigmoid()
        x1 = self.gn(group_x * attn)

        # (b) local detail branch
        x2 = self.conv3(group_x)

        # cross-spatial aggregation: each branch's pooled descriptor
        # (softmaxed over channels) weights the other branch's spatial map
        x11 = self.softmax(self.agp(x1).reshape(b * self.groups, cg, 1).permute(0, 2, 1))
        x12 = x2.reshape(b * self.groups, cg, -1)
        x21 = self.softmax(self.agp(x2).reshape(b * self.groups, cg, 1).permute(0, 2, 1))
        x22 = x1.reshape(b * self.groups, cg, -1)
        weights = (torch.matmul(x11, x12) + torch.matmul(x21, x22)).reshape(b * self.groups, 1, d, h, w)
        return (group_x * weights.sigmoid()).reshape(b, c, d, h, w)
