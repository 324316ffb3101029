"""Global context-aware attention (GCA) unit.

All tensors are batch-first ``[N, C, H, W]``. Spatial sites are flattened
row-major, so site ``i`` is pixel ``(i // W, i % W)``.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.utils.checkpoint
import torch.nn.functional as F

EPS = 1e-12


def channel_normalize(f: torch.Tensor) -> torch.Tensor:
    """L2-normalize the channel vector at every spatial site."""
    norm = torch.sqrt((f * f).sum(dim=1, keepdim=True))
    return f / (norm + EPS)


def _flatten(f: torch.Tensor) -> torch.Tensor:
    n, c, h, w = f.shape
    return f.reshape(n, c, h * w)


def spatial_correlation(ft: torch.Tensor) -> torch.Tensor:
    """Pairwise dot products between site vectors, shape ``[N, P, P]``."""
    r = _flatten(ft)
    return torch.bmm(r.transpose(1, 2), r)


def global_context_map(c: torch.Tensor) -> torch.Tensor:
    """Column softmax: ``w[i, j] = exp(c[i, j]) / sum_i exp(c[i, j])``.

    ``torch.softmax`` subtracts the column max before exponentiating.
    """
    return torch.softmax(c, dim=1)


def aggregate_global(ft: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Output site ``j`` is ``sum_i w[i, j] * ft[:, i]``."""
    n, c, h, width = ft.shape
    p = h * width
    if w.shape != (n, p, p):
        raise ValueError(f"context map {tuple(w.shape)} does not match feature {tuple(ft.shape)}")
    return torch.bmm(_flatten(ft), w).reshape(n, c, h, width)


def _aggregate_columns(r: torch.Tensor, cols: torch.Tensor) -> torch.Tensor:
    # rows of ``logits_t`` are columns of the correlation map, so the softmax
    # runs over the contiguous last axis; contiguous site-major operands keep
    # bmm and its backward off the strided-copy path
    logits_t = torch.bmm(cols.transpose(1, 2).contiguous(), r)
    rt = r.transpose(1, 2).contiguous()
    return torch.bmm(torch.softmax(logits_t, dim=-1), rt).transpose(1, 2)


def fused_global_aggregate(ft: torch.Tensor, chunk: int | None = None) -> torch.Tensor:
    """Correlation, softmax and aggregation in column blocks of ``chunk`` sites.

    Exact: each column of the context map only depends on its own column of
    the correlation map, so blocks never interact. Peak memory is
    ``P * chunk`` instead of ``P * P``.
    """
    n, c, h, w = ft.shape
    p = h * w
    r = _flatten(ft)
    if chunk is None or chunk >= p:
        return _aggregate_columns(r, r).reshape(n, c, h, w)
    blocks = []
    for start in range(0, p, chunk):
        cols = r[:, :, start:start + chunk]
        if torch.is_grad_enabled() and r.requires_grad:
            blocks.append(torch.utils.checkpoint.checkpoint(_aggregate_columns, r, cols, use_reentrant=False))
        else:
            blocks.append(_aggregate_columns(r, cols))
    return torch.cat(blocks, dim=2).reshape(n, c, h, w)


def residual_fuse(f: torch.Tensor, g: torch.Tensor, delta: torch.Tensor | float) -> torch.Tensor:
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {tuple(f.shape)} vs {tuple(g.shape)}")
    return f + delta * (f * g)


def upsample_to(x: torch.Tensor, size) -> torch.Tensor:
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)


def pool2(x: torch.Tensor) -> torch.Tensor:
    # ceil_mode keeps 1x1 maps alive at tiny test resolutions; identical to
    # floor pooling whenever the side is even.
    return F.max_pool2d(x, kernel_size=2, stride=2, ceil_mode=True)


class ChannelRecalibration(nn.Module):
    """Shared C -> C/r -> C bottleneck over avg- and max-pooled descriptors."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def mlp(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.relu(self.fc1(x)))

    def weights(self, f: torch.Tensor) -> torch.Tensor:
        avg = f.mean(dim=(2, 3))
        mx = f.amax(dim=(2, 3))
        return torch.sigmoid(self.mlp(avg) + self.mlp(mx))

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        return f * self.weights(f)[:, :, None, None]


class SpatialAttention(nn.Module):
    """Sigmoid of a k x k conv over the [channel-mean, channel-max] descriptor."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=True)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        desc = torch.cat([f.mean(dim=1, keepdim=True), f.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(desc))


class FeaturePyramid(nn.Module):
    """Three-level pyramid: stacked 2x max-pools, each level squeezed by a 1x1 conv."""

    levels = 3

    def __init__(self, channels: int):
        super().__init__()
        out = channels // 3
        if out < 1:
            raise ValueError(f"need at least 3 channels to build a pyramid, got {channels}")
        self.out_channels = out
        self.squeeze = nn.ModuleList([nn.Conv2d(channels, out, 1) for _ in range(self.levels)])

    def forward(self, f: torch.Tensor, strict: bool = False) -> list[torch.Tensor]:
        h, w = f.shape[-2:]
        if strict and (h < 4 or w < 4):
            raise ValueError(f"pyramid needs H, W >= 4, got {h}x{w}")
        out = []
        x = f
        for k, conv in enumerate(self.squeeze):
            if k:
                x = pool2(x)
            out.append(conv(x))
        return out


def build_pyramid(pyramid: FeaturePyramid, f: torch.Tensor) -> list[torch.Tensor]:
    """Strict pyramid construction; rejects inputs smaller than 4x4."""
    return pyramid(f, strict=True)


class CascadedAttention(nn.Module):
    """Coarse-to-fine attention over a 3-level pyramid.

    Returns the full-resolution map, the attended level-1 feature and the
    level-0 feature (the latter two feed the enhanced-feature residual).
    """

    def __init__(self, kernel_sizes=(7, 3, 3)):
        super().__init__()
        self.att = nn.ModuleList([SpatialAttention(k) for k in kernel_sizes])

    def forward(self, levels: list[torch.Tensor]):
        d0, d1, d2 = levels
        a2 = self.att[2](d2)
        out2 = d2 * a2 + d2
        a1 = self.att[1](torch.cat([d1, upsample_to(out2, d1.shape[-2:])], dim=1))
        out1 = d1 * a1 + d1
        a0 = self.att[0](torch.cat([d0, upsample_to(out1, d0.shape[-2:])], dim=1))
        return a0, out1, d0


class GCAUnit(nn.Module):
    """Global feature aggregation followed by cascaded pyramid attention.

    ``use_gfa`` switches the aggregation + channel recalibration front end;
    ``use_cpa`` switches between the cascade and a single full-resolution
    spatial attention over the (possibly aggregated) feature. With
    ``attend=False`` no attention is computed at all and the returned map is
    all zeros, which turns the enhanced-feature residual into a plain concat.
    """

    def __init__(self, channels: int, use_gfa: bool = True, use_cpa: bool = True,
                 attend: bool = True, reduction: int = 16, delta_init: float = 0.1,
                 chunk: int | None = 4096):
        super().__init__()
        self.use_gfa = use_gfa and attend
        self.use_cpa = use_cpa and attend
        self.attend = attend
        use_gfa, use_cpa = self.use_gfa, self.use_cpa
        self.chunk = chunk
        if use_gfa:
            self.delta = nn.Parameter(torch.tensor(float(delta_init)))
            self.recalib = ChannelRecalibration(channels, reduction)
        self.pyramid = FeaturePyramid(channels)
        if use_cpa:
            self.cascade = CascadedAttention()
        elif attend:
            self.single = SpatialAttention(7)

    @property
    def out_channels(self) -> int:
        return 2 * self.pyramid.out_channels

    def aggregate(self, f: torch.Tensor) -> torch.Tensor:
        g = fused_global_aggregate(channel_normalize(f), self.chunk)
        return self.recalib(residual_fuse(f, g, self.delta))

    def forward(self, f: torch.Tensor):
        fg = self.aggregate(f) if self.use_gfa else f
        levels = self.pyramid(fg)
        if self.use_cpa:
            return self.cascade(levels)
        if not self.attend:
            return fg.new_zeros(fg.shape[0], 1, *fg.shape[-2:]), levels[1], levels[0]
        return self.single(fg), levels[1], levels[0]
