"""Prototype-mixing segmentation network.

A frozen convolutional backbone yields three feature grids, all at 1/8
of the input resolution (a 400px episode gives three 50x50 grids). For
each level, support and query features are projected to a common width
by a 1x1 conv; the support features are pooled into a single prototype
vector under the (downsampled) support mask; the prototype is tiled
over the query grid, concatenated channel-wise, and fused by a 3x3
conv shared across the levels. The three mixed grids are concatenated
and decoded by three upsampling stages (two convs + bilinear x2 each:
1/8 -> 1/4 -> 1/2 -> full), finishing with a 3x3 conv and a 1x1 conv
onto two logits per pixel (background / foreground).
"""
from __future__ import annotations

import warnings

import torch
import torch.nn.functional as F
from torch import nn


class TinyBackbone(nn.Module):
    """Small stride-8 stand-in for tests and smoke runs. No BatchNorm,
    so freezing it is purely a matter of not updating its weights."""

    out_channels = (32, 48, 64)

    def __init__(self):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.ReLU(inplace=True),
        )
        self.heads = nn.ModuleList(
            [nn.Conv2d(32, c, 3, padding=1) for c in self.out_channels])

    def forward(self, x):
        base = self.trunk(x)
        return tuple(head(base) for head in self.heads)


class ResNetBackbone(nn.Module):
    """ResNet-101 blocks 2-4 with dilation in the last two stages.

    Replacing the strides of the final stages with dilation keeps every
    returned grid at 1/8 resolution instead of 1/16 and 1/32.
    """

    out_channels = (512, 1024, 2048)

    def __init__(self, weights_path: str | None = None):
        super().__init__()
        from torchvision.models import resnet101
        net = resnet101(weights=None, replace_stride_with_dilation=[False, True, True])
        if weights_path:
            net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4

    def forward(self, x):
        x = self.stem(x)
        x = self.layer1(x)
        f2 = self.layer2(x)
        f3 = self.layer3(f2)
        f4 = self.layer4(f3)
        return (f2, f3, f4)


def make_backbone(name: str, weights_path: str | None = None) -> nn.Module:
    if name == "resnet101":
        return ResNetBackbone(weights_path)
    if name == "tiny":
        return TinyBackbone()
    raise ValueError(f"unknown backbone {name!r}")


def masked_prototype(features: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Masked global average pool: (B, C, h, w) x (B, 1, h, w) -> (B, C, 1, 1).

    Samples whose mask is empty at feature resolution fall back to an
    unmasked average of the whole grid (with a warning) — a tiny
    support region can vanish entirely under the 8x downsampling, and
    a zero prototype would be worse than a scene-level one.
    """
    weighted = (features * mask).sum(dim=(2, 3), keepdim=True)
    denom = mask.sum(dim=(2, 3), keepdim=True)
    empty = denom == 0
    if empty.any():
        warnings.warn(
            "support mask is empty at feature resolution; using unmasked pooling",
            RuntimeWarning, stacklevel=2)
        unmasked = features.mean(dim=(2, 3), keepdim=True)
        proto = weighted / denom.clamp(min=1.0)
        return torch.where(empty, unmasked, proto)
    return weighted / denom


class MixingHead(nn.Module):
    """Fuses a support prototype into the query features, per level."""

    def __init__(self, in_channels, dim: int = 256):
        super().__init__()
        self.proj = nn.ModuleList([nn.Conv2d(c, dim, 1) for c in in_channels])
        self.mix = nn.Conv2d(2 * dim, dim, 3, padding=1)  # shared across levels

    def forward(self, support_feats, support_mask, query_feats) -> torch.Tensor:
        outs = []
        for proj, sf, qf in zip(self.proj, support_feats, query_feats):
            mask = F.interpolate(support_mask, size=sf.shape[-2:], mode="nearest")
            s = F.relu(proj(sf))
            q = F.relu(proj(qf))
            proto = masked_prototype(s, mask)
            tiled = proto.expand(-1, -1, q.shape[2], q.shape[3])
            outs.append(F.relu(self.mix(torch.cat([q, tiled], dim=1))))
        return torch.cat(outs, dim=1)


class Decoder(nn.Module):
    """Three (conv, conv, x2 bilinear) stages, then the logit head:
    1/8 -> 1/4 -> 1/2 -> 1/1 of the input resolution."""

    def __init__(self, in_channels: int, dim: int = 256, num_classes: int = 2):
        super().__init__()
        blocks = []
        for i in range(3):
            c_in = in_channels if i == 0 else dim
            blocks.append(nn.Sequential(
                nn.Conv2d(c_in, dim, 3, padding=1), nn.ReLU(inplace=True),
                nn.Conv2d(dim, dim, 3, padding=1), nn.ReLU(inplace=True),
            ))
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Sequential(
            nn.Conv2d(dim, dim, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(dim, num_classes, 1),
        )

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.head(x)


class PrototypeSegmenter(nn.Module):
    """The full network: frozen backbone, mixing head, upsampling decoder."""

    def __init__(self, backbone: str = "resnet101", proj_dim: int = 256,
                 weights_path: str | None = None):
        super().__init__()
        self.backbone_name = backbone
        self.proj_dim = proj_dim
        self.backbone = make_backbone(backbone, weights_path)
        self.head = MixingHead(self.backbone.out_channels, proj_dim)
        self.decoder = Decoder(3 * proj_dim, proj_dim)
        self.backbone.requires_grad_(False)

    def train(self, mode: bool = True):
        # the backbone stays frozen: eval mode pins its norm statistics
        super().train(mode)
        self.backbone.eval()
        return self

    def extract_features(self, images: torch.Tensor):
        """Backbone features for a batch of images: three 1/8-scale grids."""
        return self.backbone(images)

    def forward(self, support_image, support_mask, query_image):
        support_feats = self.extract_features(support_image)
        query_feats = self.extract_features(query_image)
        mixed = self.head(support_feats, support_mask, query_feats)
        return self.decoder(mixed)
