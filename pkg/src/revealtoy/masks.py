"""Attention mask construction for the two masked-attention paths.

Both masks are additive biases over logits: 0 allows a (query, key) pair,
BLOCKED (-1e9) suppresses it.  After row-max subtraction inside the masked
softmax, exp(BLOCKED + finite) underflows to exactly 0 in f32 and f64, so
blocked keys contribute nothing, bit for bit.

The layer-routing mask (square, over the whole sequence) allows:
  - every query to see TEXT keys,
  - TEXT and BG queries to see everything,
  - COND queries to see COND (plus TEXT via the first rule),
  - FG(i) queries to see FG(i) and the COND tokens inside box i.

The adapter mask (rectangular: BG and FG queries against COND keys) routes
each generated layer to the condition patches it exclusively owns:
  M_0 = complement of all boxes, M_i = box i minus every other box.
Queries whose region is empty are flagged SKIP and bypass the adapter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import BLOCKED
from .tokens import TokenLayout, token_crop_indices

__all__ = [
    "AttentionMask",
    "RegionMasks",
    "OgaAttention",
    "build_raa_mask",
    "build_oga_masks",
    "build_oga_attention_mask",
    "mask_to_pgm",
]


@dataclass(frozen=True)
class AttentionMask:
    """Square additive bias over the full token sequence."""

    bias: np.ndarray  # (L, L) float32 in {0, BLOCKED}

    def __post_init__(self):
        b = np.asarray(self.bias, dtype=np.float32)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError(f"expected square bias, got {b.shape}")
        object.__setattr__(self, "bias", b)

    def validate(self, layout: TokenLayout) -> None:
        if self.bias.shape[0] != layout.L:
            raise ValueError("bias size does not match layout")
        if not np.all(np.any(self.bias == 0.0, axis=1)):
            raise ValueError("found a fully blocked query row")
        text = layout.segment("TEXT")
        if not np.all(self.bias[:, text.sl] == 0.0):
            raise ValueError("TEXT keys must be visible to every query")


@dataclass(frozen=True)
class RegionMasks:
    """Exclusive patch ownership per layer, plus per-box COND token sets."""

    oga: np.ndarray          # (N+1, g, g) bool; row 0 is the background mask
    region_tokens: tuple     # per foreground i, COND-relative token indices R_i

    @property
    def n_layers(self) -> int:
        return self.oga.shape[0] - 1


@dataclass(frozen=True)
class OgaAttention:
    """Rectangular adapter bias: generated-token queries over COND keys."""

    bias: np.ndarray   # (Q, g*g) float32 in {0, BLOCKED}
    skip: np.ndarray   # (Q,) bool; True = row bypasses the adapter
    query_start: int   # sequence index of query row 0 (the first BG token)


def build_raa_mask(layout: TokenLayout, boxes=None) -> AttentionMask:
    boxes = layout.boxes if boxes is None else tuple(boxes)
    L = layout.L
    allowed = np.zeros((L, L), dtype=bool)

    text = layout.segment("TEXT")
    cond = layout.segment("COND")
    bg = layout.segment("BG")
    allowed[:, text.sl] = True
    allowed[text.sl, :] = True
    allowed[bg.sl, :] = True
    allowed[cond.sl, cond.sl] = True
    for i, box in enumerate(boxes):
        fg = layout.segment("FG", i)
        allowed[fg.sl, fg.sl] = True
        r_i = cond.start + token_crop_indices(box, layout.canvas, layout.p)
        allowed[fg.start:fg.stop, r_i] = True

    return AttentionMask(np.where(allowed, 0.0, BLOCKED).astype(np.float32))


def box_patch_mask(box, grid: int, p: int) -> np.ndarray:
    m = np.zeros((grid, grid), dtype=bool)
    m[box.y // p:(box.y + box.h) // p, box.x // p:(box.x + box.w) // p] = True
    return m


def build_oga_masks(boxes, canvas: int, p: int) -> RegionMasks:
    grid = canvas // p
    rasters = [box_patch_mask(b, grid, p) for b in boxes]
    n = len(rasters)
    oga = np.zeros((n + 1, grid, grid), dtype=bool)
    union = np.any(rasters, axis=0) if rasters else np.zeros((grid, grid), bool)
    oga[0] = ~union
    for i in range(n):
        others = [rasters[j] for j in range(n) if j != i]
        taken = np.any(others, axis=0) if others else np.zeros((grid, grid), bool)
        oga[i + 1] = rasters[i] & ~taken
    region = tuple(token_crop_indices(b, canvas, p) for b in boxes)
    return RegionMasks(oga, region)


def build_oga_attention_mask(layout: TokenLayout, masks: RegionMasks) -> OgaAttention:
    g2 = layout.grid * layout.grid
    flat = masks.oga.reshape(masks.oga.shape[0], g2)
    bg = layout.segment("BG")
    rows = [np.broadcast_to(flat[0], (len(bg), g2))]
    for i in range(layout.n_layers):
        fg = layout.segment("FG", i)
        rows.append(np.broadcast_to(flat[i + 1], (len(fg), g2)))
    allowed = np.concatenate(rows, axis=0)
    skip = ~np.any(allowed, axis=1)
    bias = np.where(allowed, 0.0, BLOCKED).astype(np.float32)
    return OgaAttention(bias, skip, bg.start)


def mask_to_pgm(bias: np.ndarray) -> str:
    """Render a bias matrix as a P2 graymap: allowed=255, blocked=0."""
    h, w = bias.shape
    lines = ["P2", f"{w} {h}", "255"]
    for row in (bias == 0.0).astype(int) * 255:
        lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"
