"""Hierarchical recurrent vision backbone in the CORnet-S family.

Four stages named after ventral-stream areas (V1, V2, V4, IT) followed by a
linear decoder.  V1 is feedforward; the later stages are bottleneck blocks
whose convolution weights are shared across recurrent passes, with separate
batch normalization per pass.  Recurrence counts default to (1, 2, 4, 2).

Two configurations are provided: ``full_spec`` (224x224 input, 1000 classes)
and ``tiny_spec`` (32x32 input, 10 classes) for desk-scale experiments.  All
convolutions are bias-free; the batch-norm layers that follow would absorb any
bias, leaving it without gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

STAGE_NAMES = ("V1", "V2", "V4", "IT")

# Total spatial downsampling across the four stages.
_DOWNSAMPLE = 32


@dataclass(frozen=True)
class BackboneSpec:
    """Shape configuration for a backbone instance."""

    name: str
    channels: tuple[int, int, int, int]
    input_size: int
    n_classes: int
    recurrence: tuple[int, int, int, int] = (1, 2, 4, 2)
    norm_mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    norm_std: tuple[float, float, float] = (0.229, 0.224, 0.225)

    def __post_init__(self):
        if len(self.channels) != 4 or any(c < 1 for c in self.channels):
            raise ValueError(f"channels must be four positive ints, got {self.channels}")
        if len(self.recurrence) != 4 or any(t < 1 for t in self.recurrence):
            raise ValueError(f"recurrence must be four ints >= 1, got {self.recurrence}")
        if self.recurrence[0] != 1:
            raise ValueError("the V1 stage is feedforward; recurrence[0] must be 1")
        if self.input_size < _DOWNSAMPLE or self.input_size % _DOWNSAMPLE != 0:
            raise ValueError(
                f"input_size must be a multiple of {_DOWNSAMPLE}, got {self.input_size}"
            )
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")

    @property
    def stage_spatial_sizes(self) -> tuple[int, int, int, int]:
        s = self.input_size
        return (s // 4, s // 8, s // 16, s // 32)

    @property
    def stage_flat_dims(self) -> tuple[int, int, int, int]:
        return tuple(
            c * r * r for c, r in zip(self.channels, self.stage_spatial_sizes)
        )


def full_spec() -> BackboneSpec:
    """ImageNet-scale configuration: 224x224 input, 1000 classes."""
    return BackboneSpec(
        name="full", channels=(64, 128, 256, 512), input_size=224, n_classes=1000
    )


def tiny_spec(n_classes: int = 10) -> BackboneSpec:
    """Desk-scale configuration: 32x32 input, small channel counts."""
    return BackboneSpec(
        name="tiny",
        channels=(16, 32, 64, 128),
        input_size=32,
        n_classes=n_classes,
        norm_mean=(0.5, 0.5, 0.5),
        norm_std=(0.5, 0.5, 0.5),
    )


class FeedforwardStage(nn.Module):
    """V1: strided 7x7 convolution, max-pool, then a 3x3 convolution."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 7, stride=2, padding=3, bias=False)
        self.norm1 = nn.BatchNorm2d(out_channels)
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.norm2 = nn.BatchNorm2d(out_channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.act(self.norm1(self.conv1(x)))
        x = self.pool(x)
        return self.act(self.norm2(self.conv2(x)))


class RecurrentStage(nn.Module):
    """Weight-shared bottleneck block unrolled for a fixed number of passes.

    Each pass runs 1x1 expand, 3x3, 1x1 reduce convolutions with a residual
    connection.  The first pass downsamples (stride 2) and projects the skip
    path; later passes reuse the same convolution weights at stride 1 with
    an identity skip.  Normalization layers are separate per pass.
    """

    expansion = 4

    def __init__(self, in_channels: int, out_channels: int, times: int):
        super().__init__()
        if times < 1:
            raise ValueError(f"times must be >= 1, got {times}")
        self.times = times
        mid = out_channels * self.expansion
        self.conv_input = nn.Conv2d(in_channels, out_channels, 1, bias=False)
        self.skip = nn.Conv2d(out_channels, out_channels, 1, stride=2, bias=False)
        self.norm_skip = nn.BatchNorm2d(out_channels)
        self.conv1 = nn.Conv2d(out_channels, mid, 1, bias=False)
        self.conv2 = nn.Conv2d(mid, mid, 3, stride=2, padding=1, bias=False)
        self.conv3 = nn.Conv2d(mid, out_channels, 1, bias=False)
        self.norm1 = nn.ModuleList(nn.BatchNorm2d(mid) for _ in range(times))
        self.norm2 = nn.ModuleList(nn.BatchNorm2d(mid) for _ in range(times))
        self.norm3 = nn.ModuleList(nn.BatchNorm2d(out_channels) for _ in range(times))
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.conv_input(x)
        for t in range(self.times):
            if t == 0:
                skip = self.norm_skip(self.skip(x))
                self.conv2.stride = (2, 2)
            else:
                skip = x
                self.conv2.stride = (1, 1)
            y = self.act(self.norm1[t](self.conv1(x)))
            y = self.act(self.norm2[t](self.conv2(y)))
            y = self.norm3[t](self.conv3(y))
            x = self.act(y + skip)
        return x


class Backbone(nn.Module):
    """Four-stage recurrent backbone with a linear decoder head."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        c1, c2, c3, c4 = spec.channels
        r = spec.recurrence
        self.V1 = FeedforwardStage(3, c1)
        self.V2 = RecurrentStage(c1, c2, r[1])
        self.V4 = RecurrentStage(c2, c3, r[2])
        self.IT = RecurrentStage(c3, c4, r[3])
        self.decoder = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(c4, spec.n_classes),
        )
        self.register_buffer(
            "input_mean", torch.tensor(spec.norm_mean).view(1, 3, 1, 1)
        )
        self.register_buffer(
            "input_std", torch.tensor(spec.norm_std).view(1, 3, 1, 1)
        )

    def _normalize(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(
                f"expected images of shape [N, 3, H, W], got {tuple(images.shape)}"
            )
        if images.shape[2] != self.spec.input_size or images.shape[3] != self.spec.input_size:
            raise ValueError(
                f"expected {self.spec.input_size}x{self.spec.input_size} images, "
                f"got {images.shape[2]}x{images.shape[3]}"
            )
        return (images - self.input_mean) / self.input_std

    def stage_features(self, images: torch.Tensor) -> dict[str, torch.Tensor]:
        """Final-pass activations of each stage for images scaled to [0, 1]."""
        x = self._normalize(images)
        feats = {}
        for name in STAGE_NAMES:
            x = getattr(self, name)(x)
            feats[name] = x
        return feats

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        feats = self.stage_features(images)
        return self.decoder(feats["IT"])

    def forward_with_features(
        self, images: torch.Tensor
    ) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        feats = self.stage_features(images)
        return self.decoder(feats["IT"]), feats


def build_backbone(spec: BackboneSpec, seed: int = 0) -> Backbone:
    """Construct a backbone with seeded weight initialization."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = Backbone(spec)
    return model
