"""Encoder-decoder architectures mapping two 41^3 mask channels to one 41^3 field.

Three variants share an I/O contract (2x41^3 in, 1x41^3 out, no spatial
cropping): a plain strided encoder-decoder CNN, a U-Net with skip
connections, and an attention U-Net that inserts multi-head self-attention
blocks (with layer norms and a feedforward stage) into the upsampling path.
All of them interpolate the inputs to a power-of-two-friendly 48^3 working
resolution and interpolate the single-channel output back to the native grid.

The lesion task ends in a sigmoid head, the temperature task in a linear
head.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

ARCHS = ("edcnn", "unet", "attn_unet")
TASKS = ("lesion", "temperature")

WORK_SIZE = 48  # internal cubic resolution; divisible by the three stride-2 stages


@dataclass(frozen=True)
class NetSpec:
    arch: str
    task: str
    base_width: int = 16
    attn_heads: int = 4

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.base_width < 1 or self.attn_heads < 1:
            raise ValueError("base_width and attn_heads must be >= 1")

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "task": self.task,
            "base_width": self.base_width,
            "attn_heads": self.attn_heads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        return cls(**d)


def _conv_block(c_in: int, c_out: int, stride: int = 1, leaky: bool = False) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(c_in, c_out, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm3d(c_out),
        nn.LeakyReLU(0.1, inplace=True) if leaky else nn.ReLU(inplace=True),
    )


def _deconv_block(c_in: int, c_out: int, leaky: bool = False) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose3d(c_in, c_out, kernel_size=2, stride=2, bias=False),
        nn.BatchNorm3d(c_out),
        nn.LeakyReLU(0.1, inplace=True) if leaky else nn.ReLU(inplace=True),
    )


def _init_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class _SurrogateBase(nn.Module):
    """Shared input/output plumbing: channel concat, resampling, task head."""

    def __init__(self, spec: NetSpec):
        super().__init__()
        self.spec = spec

    def forward(self, tumor: torch.Tensor, electrode: torch.Tensor | None = None) -> torch.Tensor:
        if electrode is None:  # already stacked (N, 2, D, H, W)
            x = tumor
        else:
            x = torch.cat([tumor, electrode], dim=1)
        if x.shape[1] != 2:
            raise ValueError(f"expected 2 input channels, got {x.shape[1]}")
        native = x.shape[2:]
        x = F.interpolate(x, size=(WORK_SIZE,) * 3, mode="trilinear", align_corners=False)
        y = self._body(x)
        y = F.interpolate(y, size=native, mode="trilinear", align_corners=False)
        if self.spec.task == "lesion":
            y = torch.sigmoid(y)
        return y

    def _body(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class EDCNN(_SurrogateBase):
    """Strided conv encoder and transposed-conv decoder, no skip connections."""

    def __init__(self, spec: NetSpec):
        super().__init__(spec)
        w = spec.base_width
        self.encoder = nn.Sequential(
            _conv_block(2, w, stride=2),        # 48 -> 24
            _conv_block(w, 2 * w, stride=2),    # 24 -> 12
            _conv_block(2 * w, 2 * w),
        )
        self.decoder = nn.Sequential(
            _deconv_block(2 * w, w),            # 12 -> 24
            _conv_block(w, w),
            _deconv_block(w, w // 2),           # 24 -> 48
        )
        self.head = nn.Conv3d(w // 2, 1, kernel_size=1)
        _init_weights(self)

    def _body(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.decoder(self.encoder(x)))


class UNet3D(_SurrogateBase):
    """Symmetric encoder-decoder with skip concatenations and a mid stage."""

    def __init__(self, spec: NetSpec, leaky: bool = False):
        super().__init__(spec)
        w = spec.base_width
        self.stem = _conv_block(2, w, stride=2, leaky=leaky)          # 48 -> 24
        self.enc1 = _conv_block(w, w, leaky=leaky)
        self.down1 = _conv_block(w, 2 * w, stride=2, leaky=leaky)     # 24 -> 12
        self.enc2 = _conv_block(2 * w, 2 * w, leaky=leaky)
        self.down2 = _conv_block(2 * w, 4 * w, stride=2, leaky=leaky)  # 12 -> 6
        self.mid = _conv_block(4 * w, 4 * w, leaky=leaky)
        self.up2 = _deconv_block(4 * w, 2 * w, leaky=leaky)            # 6 -> 12
        self.dec2 = _conv_block(4 * w, 2 * w, leaky=leaky)
        self.up1 = _deconv_block(2 * w, w, leaky=leaky)                # 12 -> 24
        self.dec1 = _conv_block(2 * w, w, leaky=leaky)
        self.head = nn.Conv3d(w, 1, kernel_size=1)
        self.final_up = nn.Upsample(scale_factor=2, mode="trilinear", align_corners=False)
        _init_weights(self)

    def _decode(self, e1: torch.Tensor, e2: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        d2 = self.dec2(torch.cat([self.up2(m), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.final_up(self.head(d1))

    def _body(self, x: torch.Tensor) -> torch.Tensor:
        e1 = self.enc1(self.stem(x))
        e2 = self.enc2(self.down1(e1))
        m = self.mid(self.down2(e2))
        return self._decode(e1, e2, m)


class _SelfAttention3D(nn.Module):
    """Multi-head self-attention over flattened voxels with norm and feedforward."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(channels)
        self.ff = nn.Sequential(
            nn.Linear(channels, 2 * channels),
            nn.GELU(),
            nn.Linear(2 * channels, channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, c, d, h, w = x.shape
        tokens = x.flatten(2).transpose(1, 2)  # (N, voxels, C)
        y = self.norm1(tokens)
        attn_out, _ = self.attn(y, y, y, need_weights=False)
        tokens = tokens + attn_out
        tokens = tokens + self.ff(self.norm2(tokens))
        return tokens.transpose(1, 2).reshape(n, c, d, h, w)


class AttentionUNet3D(UNet3D):
    """U-Net with self-attention interspersed in the upsampling path."""

    def __init__(self, spec: NetSpec):
        super().__init__(spec, leaky=True)
        w = spec.base_width
        self.attn_mid = _SelfAttention3D(4 * w, spec.attn_heads)   # 6^3 tokens
        self.attn_dec2 = _SelfAttention3D(2 * w, spec.attn_heads)  # 12^3 tokens

    def _body(self, x: torch.Tensor) -> torch.Tensor:
        e1 = self.enc1(self.stem(x))
        e2 = self.enc2(self.down1(e1))
        m = self.attn_mid(self.mid(self.down2(e2)))
        d2 = self.attn_dec2(self.dec2(torch.cat([self.up2(m), e2], dim=1)))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.final_up(self.head(d1))


def build_model(spec: NetSpec) -> _SurrogateBase:
    if spec.arch == "edcnn":
        return EDCNN(spec)
    if spec.arch == "unet":
        return UNet3D(spec)
    return AttentionUNet3D(spec)
