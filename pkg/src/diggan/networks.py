"""Encoder, generator and the two conditional discriminators.

Small strided-conv stacks sized to train on CPU in minutes. The block
count adapts to the image size so the same code serves full 128x88 GEIs
and the miniature instances used by the gradient checks. All widths are
configurable; weights initialize fan-in-scaled from an explicit seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .errors import ShapeError

DEFAULT_IMAGE_DIMS = (128, 88)
_LEAK = 0.2


def _auto_blocks(image_dims) -> int:
    h, w = image_dims
    return max(1, min(4, int(math.log2(min(h, w))) - 1))


def _down_dims(image_dims, n_blocks):
    h, w = image_dims
    for _ in range(n_blocks):
        h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ShapeError(f"image {image_dims} too small for {n_blocks} blocks")
    return h, w


class Encoder(nn.Module):
    def __init__(self, d_z, image_dims, base, n_blocks):
        super().__init__()
        layers = []
        c = 1
        for i in range(n_blocks):
            layers += [nn.Conv2d(c, base * 2 ** i, 4, 2, 1), nn.LeakyReLU(_LEAK)]
            c = base * 2 ** i
        self.body = nn.Sequential(*layers)
        h, w = _down_dims(image_dims, n_blocks)
        self.head = nn.Linear(c * h * w, d_z)

    def forward(self, x):
        h = self.body(x)
        return self.head(h.flatten(1))


class Generator(nn.Module):
    def __init__(self, d_z, n_views, image_dims, base, n_blocks):
        super().__init__()
        self.image_dims = tuple(image_dims)
        h, w = image_dims
        self.h0 = -(-h // 2 ** n_blocks)  # ceil division
        self.w0 = -(-w // 2 ** n_blocks)
        self.c0 = base * 2 ** (n_blocks - 1)
        self.fc_in = nn.Linear(d_z + n_views, self.c0 * self.h0 * self.w0)
        layers = []
        c = self.c0
        for i in range(n_blocks - 1, 0, -1):
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(c, base * 2 ** (i - 1), 3, 1, 1),
                nn.LeakyReLU(_LEAK),
            ]
            c = base * 2 ** (i - 1)
        layers += [
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c, 1, 3, 1, 1),
            nn.Sigmoid(),
        ]
        self.body = nn.Sequential(*layers)

    def forward(self, z, v):
        x = torch.cat([z, v], dim=1)
        x = nn.functional.leaky_relu(self.fc_in(x), _LEAK)
        x = x.view(-1, self.c0, self.h0, self.w0)
        x = self.body(x)
        h, w = self.image_dims
        top = (x.shape[2] - h) // 2
        left = (x.shape[3] - w) // 2
        return x[:, :, top : top + h, left : left + w]


class AngleDiscriminator(nn.Module):
    """Conditional discriminator; the view one-hot is broadcast to constant
    feature maps and concatenated after the first convolutional layer."""

    def __init__(self, n_views, image_dims, base, n_blocks):
        super().__init__()
        self.n_views = n_views
        self.conv1 = nn.Conv2d(1, base, 4, 2, 1)
        layers = []
        c = base + n_views
        for i in range(1, n_blocks):
            layers += [nn.Conv2d(c, base * 2 ** i, 4, 2, 1), nn.LeakyReLU(_LEAK)]
            c = base * 2 ** i
        self.body = nn.Sequential(*layers)
        h, w = _down_dims(image_dims, n_blocks)
        self.head = nn.Linear(c * h * w, 1)

    def forward(self, x, v):
        h = nn.functional.leaky_relu(self.conv1(x), _LEAK)
        maps = v[:, :, None, None].expand(-1, self.n_views, h.shape[2], h.shape[3])
        h = torch.cat([h, maps.to(h.dtype)], dim=1)
        h = self.body(h)
        return torch.sigmoid(self.head(h.flatten(1))).squeeze(1)


class IdentityDiscriminator(nn.Module):
    """Pair discriminator; the two images enter stacked as channels."""

    def __init__(self, image_dims, base, n_blocks):
        super().__init__()
        layers = []
        c = 2
        for i in range(n_blocks):
            layers += [nn.Conv2d(c, base * 2 ** i, 4, 2, 1), nn.LeakyReLU(_LEAK)]
            c = base * 2 ** i
        self.body = nn.Sequential(*layers)
        h, w = _down_dims(image_dims, n_blocks)
        self.head = nn.Linear(c * h * w, 1)

    def forward(self, x_a, x_b):
        h = self.body(torch.cat([x_a, x_b], dim=1))
        return torch.sigmoid(self.head(h.flatten(1))).squeeze(1)


@dataclass
class ModelParams:
    encoder: Encoder
    generator: Generator
    d_angle: AngleDiscriminator
    d_id: IdentityDiscriminator
    d_z: int
    n_views: int
    image_dims: tuple
    base_channels: int
    n_blocks: int
    seed: int

    def networks(self):
        return {"encoder": self.encoder, "generator": self.generator,
                "d_angle": self.d_angle, "d_id": self.d_id}

    def arch_hash(self) -> str:
        sig = [f"{self.d_z};{self.n_views};{self.image_dims};"
               f"{self.base_channels};{self.n_blocks}"]
        for name, net in self.networks().items():
            for pname, p in net.named_parameters():
                sig.append(f"{name}.{pname}:{tuple(p.shape)}")
        return hashlib.sha256("|".join(sig).encode()).hexdigest()[:16]

    def state_arrays(self) -> dict:
        out = {}
        for name, net in self.networks().items():
            for pname, p in net.state_dict().items():
                out[f"{name}.{pname}"] = p.detach().cpu().numpy().copy()
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        for name, net in self.networks().items():
            sd = {}
            for pname, p in net.state_dict().items():
                arr = arrays[f"{name}.{pname}"]
                sd[pname] = torch.as_tensor(arr.copy()).to(p.dtype)
            net.load_state_dict(sd)

    @property
    def dtype(self):
        return next(self.encoder.parameters()).dtype


def init_params(
    d_z: int,
    n_views: int,
    image_dims=DEFAULT_IMAGE_DIMS,
    seed: int = 0,
    base_channels: int = 16,
    n_blocks: Optional[int] = None,
    dtype=torch.float32,
) -> ModelParams:
    """Build all four networks with seeded fan-in-scaled init, zero biases."""
    if d_z < 8:
        raise ShapeError(f"d_z must be at least 8, got {d_z}")
    if n_views < 2:
        raise ShapeError(f"need at least 2 views, got {n_views}")
    h, w = image_dims
    if h < 4 or w < 4:
        raise ShapeError(f"image dims too small: {image_dims}")
    if n_blocks is None:
        n_blocks = _auto_blocks(image_dims)
    _down_dims(image_dims, n_blocks)  # validates
    params = ModelParams(
        encoder=Encoder(d_z, image_dims, base_channels, n_blocks),
        generator=Generator(d_z, n_views, image_dims, base_channels, n_blocks),
        d_angle=AngleDiscriminator(n_views, image_dims, base_channels, n_blocks),
        d_id=IdentityDiscriminator(image_dims, base_channels, n_blocks),
        d_z=d_z, n_views=n_views, image_dims=(h, w),
        base_channels=base_channels, n_blocks=n_blocks, seed=seed,
    )
    gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFF)
    for name, net in params.networks().items():
        net.to(dtype)
        net.eval()
        for pname, p in net.named_parameters():
            if p.ndim == 1:  # biases start at zero
                p.data.zero_()
                continue
            fan_in = p[0].numel()
            # Leaky-ReLU-gain scaling inside, plain 1/sqrt(fan_in) at heads.
            if pname.startswith("head"):
                std = 1.0 / math.sqrt(fan_in)
            else:
                std = math.sqrt(2.0 / ((1.0 + _LEAK ** 2) * fan_in))
            p.data.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64)
                         .to(dtype) * std)
    return params


def _to_image_batch(params: ModelParams, x, what: str) -> torch.Tensor:
    arr = x.detach().cpu().numpy() if isinstance(x, torch.Tensor) else np.asarray(x)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != params.image_dims:
        raise ShapeError(
            f"{what} must be (batch, {params.image_dims[0]}, {params.image_dims[1]}),"
            f" got {arr.shape}"
        )
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ShapeError(f"{what} pixels must lie in [0, 1]")
    return torch.as_tensor(arr, dtype=params.dtype)[:, None]


def _to_code_batch(params: ModelParams, z) -> torch.Tensor:
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != params.d_z:
        raise ShapeError(f"latent codes must be (batch, {params.d_z}), got {arr.shape}")
    return torch.as_tensor(arr, dtype=params.dtype)


def _to_view_batch(params: ModelParams, v, batch: int) -> torch.Tensor:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != params.n_views:
        raise ShapeError(f"view vectors must be (batch, {params.n_views}), got {arr.shape}")
    if arr.shape[0] != batch:
        raise ShapeError(f"batch mismatch: {batch} samples vs {arr.shape[0]} view vectors")
    if arr.min() < 0.0 or np.abs(arr.sum(axis=1) - 1.0).max() > 1e-6:
        raise ShapeError("view vectors must be convex combinations (one-hot or blend)")
    return torch.as_tensor(arr, dtype=params.dtype)


def encode(params: ModelParams, x) -> np.ndarray:
    """Map a GEI batch (B, H, W) to latent codes (B, d_z)."""
    xb = _to_image_batch(params, x, "images")
    with torch.no_grad():
        return params.encoder(xb).double().numpy()


def generate(params: ModelParams, z, v) -> np.ndarray:
    """Map latent codes plus target-view vectors to GEIs (B, H, W) in [0,1]."""
    zb = _to_code_batch(params, z)
    vb = _to_view_batch(params, v, zb.shape[0])
    with torch.no_grad():
        return params.generator(zb, vb)[:, 0].double().numpy()


def discriminate_angle(params: ModelParams, x, v) -> np.ndarray:
    """Score in (0,1) that each image matches its claimed view label."""
    xb = _to_image_batch(params, x, "images")
    vb = _to_view_batch(params, v, xb.shape[0])
    with torch.no_grad():
        return params.d_angle(xb, vb).double().numpy()


def discriminate_identity(params: ModelParams, x_a, x_b) -> np.ndarray:
    """Score in (0,1) that the two images share an identity."""
    a = _to_image_batch(params, x_a, "first images")
    b = _to_image_batch(params, x_b, "second images")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"pair batch mismatch: {a.shape[0]} vs {b.shape[0]}")
    with torch.no_grad():
        return params.d_id(a, b).double().numpy()
