"""Class-balanced saliency/edge supervision and hard example mining."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from .decoder import DecodedOutputs

CLAMP = 1e-7
CROSS = ndimage.generate_binary_structure(2, 1)


def balance_factors(label: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-sample (alpha, beta) = (negative fraction, positive fraction).

    ``label`` is ``[H, W]`` (scalars returned) or batched ``[N, ...]``.
    """
    flat = label.reshape(-1) if label.dim() == 2 else label.reshape(label.shape[0], -1)
    beta = flat.sum(dim=-1) / flat.shape[-1]
    return 1.0 - beta, beta


def balanced_bce(pred: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """Class-balanced binary cross-entropy, mean-reduced over pixels.

    Positives are weighted by the background fraction and negatives by the
    foreground fraction, computed per image. A 2-D input gives a scalar;
    a batched input gives one loss per sample.
    """
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(label.shape)}")
    label = label.to(pred.dtype)
    alpha, beta = balance_factors(label)
    s = pred.clamp(CLAMP, 1.0 - CLAMP)
    if pred.dim() == 2:
        pos, neg = label * torch.log(s), (1 - label) * torch.log(1 - s)
        return -(alpha * pos + beta * neg).mean()
    shape = (-1,) + (1,) * (pred.dim() - 1)
    term = alpha.reshape(shape) * label * torch.log(s) + beta.reshape(shape) * (1 - label) * torch.log(1 - s)
    return -term.reshape(pred.shape[0], -1).mean(dim=1)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Inner one-pixel boundary: mask minus its 4-connected erosion.

    Pixels outside the image count as background, so a mask touching the
    border gets boundary pixels along the frame.
    """
    m = np.asarray(mask).astype(bool)
    return m & ~ndimage.binary_erosion(m, structure=CROSS, border_value=0)


def edge_labels(mask: np.ndarray) -> np.ndarray:
    """Two-pixel-thick salient edges: boundary dilated by a 2x2 max filter.

    The 2x2 window covers offsets {-1, 0}, so each boundary pixel (r, c)
    marks the block (r..r+1, c..c+1).
    """
    b = mask_boundary(mask).astype(np.uint8)
    return ndimage.maximum_filter(b, size=2, mode="constant", cval=0)


def resize_label(label: torch.Tensor, size) -> torch.Tensor:
    if tuple(label.shape[-2:]) == tuple(size):
        return label
    return F.interpolate(label, size=tuple(size), mode="nearest")


def stage_losses(outputs: DecodedOutputs, mask: torch.Tensor, edge: torch.Tensor):
    """Per-sample (mask loss, edge loss) pairs for every supervised stage.

    ``mask`` and ``edge`` are full-resolution ``[N, 1, H, W]`` labels.
    """
    out = []
    for m, e in zip(outputs.masks, outputs.edges):
        size = m.shape[-2:]
        out.append((balanced_bce(m, resize_label(mask, size)), balanced_bce(e, resize_label(edge, size))))
    return out


def total_loss(outputs: DecodedOutputs, mask: torch.Tensor, edge: torch.Tensor,
               w_m: float = 0.7, w_e: float = 0.3) -> torch.Tensor:
    """Hierarchical loss summed over stages 1-3; one value per sample."""
    return sum(w_m * lm + w_e * le for lm, le in stage_losses(outputs, mask, edge))


def ohem_filter(losses: Sequence[float]) -> list[int]:
    """Indices of the ceil(n/2) highest losses, hardest first; ties keep the lower index."""
    losses = [float(v) for v in losses]
    n = len(losses)
    if n == 0:
        return []
    keep = math.ceil(n / 2)
    return sorted(range(n), key=lambda i: (-losses[i], i))[:keep]
