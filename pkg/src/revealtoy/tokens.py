"""Patch tokenization and the unified token sequence.

The "latent" codec is an exact space-to-depth: a (H, W, 4) image becomes
(H/p)*(W/p) tokens of 4*p*p channels, row-major over patches, with channel
layout (dy*p + dx)*4 + c inside a patch.  unpatchify inverts it bit-exactly.

A layout concatenates [TEXT | COND | BG | FG(1..N)] and assigns every token
a (layer, y, x) position triple used by the rotary embedding and the
attention masks.  FG tokens keep the global patch coordinates of their crop,
so an FG token and the COND token of the same canvas patch share (y, x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import BoundingBox, LayeredScene, RgbaImage, gray_background_convert
from .tensor import Tensor, add, mul, rotate_pairs

__all__ = [
    "Segment",
    "TokenLayout",
    "patchify",
    "unpatchify",
    "unpatchify_crop",
    "token_crop_indices",
    "build_layout",
    "build_sequence",
    "rope_tables",
    "apply_rope",
]

TEXT, COND, BG, FG = "TEXT", "COND", "BG", "FG"


@dataclass(frozen=True)
class Segment:
    role: str           # TEXT, COND, BG, or FG
    index: int          # foreground number for FG segments, -1 otherwise
    start: int
    stop: int

    def __len__(self) -> int:
        return self.stop - self.start

    @property
    def sl(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class TokenLayout:
    segments: tuple          # Segment, in order TEXT, COND, BG, FG(1..N)
    positions: np.ndarray    # (L, 3) int32: (layer, y-patch, x-patch)
    canvas: int
    p: int
    boxes: tuple             # grid-snapped BoundingBox per foreground

    @property
    def L(self) -> int:
        return self.segments[-1].stop

    @property
    def token_dim(self) -> int:
        return 4 * self.p * self.p

    @property
    def n_layers(self) -> int:
        return len(self.boxes)

    @property
    def grid(self) -> int:
        return self.canvas // self.p

    def segment(self, role: str, index: int = -1) -> Segment:
        for seg in self.segments:
            if seg.role == role and seg.index == index:
                return seg
        raise KeyError(f"no segment {role}({index})")

    @property
    def gen_slice(self) -> slice:
        """Tokens the model generates: BG plus all FG segments."""
        return slice(self.segment(BG).start, self.L)


def patchify(img: RgbaImage, p: int) -> np.ndarray:
    h, w = img.height, img.width
    if h % p or w % p:
        raise ValueError(f"{h}x{w} image not divisible by patch size {p}")
    gh, gw = h // p, w // p
    arr = img.data.reshape(gh, p, gw, p, 4).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(arr.reshape(gh * gw, 4 * p * p))


def unpatchify(tokens: np.ndarray, canvas: int, p: int) -> RgbaImage:
    g = canvas // p
    if tokens.shape != (g * g, 4 * p * p):
        raise ValueError(f"expected ({g * g}, {4 * p * p}) tokens, got {tokens.shape}")
    arr = tokens.reshape(g, g, p, p, 4).transpose(0, 2, 1, 3, 4)
    data = np.clip(arr.reshape(canvas, canvas, 4), -1.0, 1.0)
    return RgbaImage(data.astype(np.float32))


def unpatchify_crop(tokens: np.ndarray, box: BoundingBox, p: int) -> RgbaImage:
    """Decode a box-cropped token run back to an (h, w, 4) image."""
    gh, gw = box.h // p, box.w // p
    if tokens.shape != (gh * gw, 4 * p * p):
        raise ValueError(f"expected ({gh * gw}, {4 * p * p}) tokens, got {tokens.shape}")
    arr = tokens.reshape(gh, gw, p, p, 4).transpose(0, 2, 1, 3, 4)
    data = np.clip(arr.reshape(box.h, box.w, 4), -1.0, 1.0)
    return RgbaImage(data.astype(np.float32))


def token_crop_indices(box: BoundingBox, canvas: int, p: int) -> np.ndarray:
    """Row-major token indices of the full-canvas grid covered by the box."""
    if not box.is_snapped(p):
        raise ValueError(f"box ({box.x},{box.y},{box.w},{box.h}) not on the {p}-grid")
    gw = canvas // p
    ys = np.arange(box.y // p, (box.y + box.h) // p)
    xs = np.arange(box.x // p, (box.x + box.w) // p)
    return (ys[:, None] * gw + xs[None, :]).reshape(-1)


def build_layout(canvas: int, boxes: list, p: int, k_text: int) -> TokenLayout:
    if not boxes:
        raise ValueError("need at least one foreground box")
    g = canvas // p
    if canvas % p:
        raise ValueError(f"canvas {canvas} not divisible by patch size {p}")
    for box in boxes:
        box.validate(canvas, canvas)
        if not box.is_snapped(p):
            raise ValueError(f"box ({box.x},{box.y},{box.w},{box.h}) not on the {p}-grid")

    grid_y, grid_x = np.divmod(np.arange(g * g, dtype=np.int32), g)
    segments, positions = [], []
    cursor = 0

    def push(role, index, pos):
        nonlocal cursor
        segments.append(Segment(role, index, cursor, cursor + len(pos)))
        positions.append(pos)
        cursor += len(pos)

    text_pos = np.stack([np.zeros(k_text, np.int32), np.zeros(k_text, np.int32),
                         np.arange(k_text, dtype=np.int32)], axis=1)
    push(TEXT, -1, text_pos)
    for layer_axis, role in ((1, COND), (2, BG)):
        pos = np.stack([np.full(g * g, layer_axis, np.int32), grid_y, grid_x], axis=1)
        push(role, -1, pos)
    for i, box in enumerate(boxes):
        # Layer axis: TEXT 0, COND 1, BG 2, then FG layers 3, 4, ...
        idx = token_crop_indices(box, canvas, p)
        pos = np.stack([np.full(len(idx), 3 + i, np.int32),
                        grid_y[idx], grid_x[idx]], axis=1)
        push(FG, i, pos)

    return TokenLayout(tuple(segments), np.concatenate(positions, axis=0),
                       canvas, p, tuple(boxes))


def build_sequence(scene: LayeredScene, p: int, k_text: int):
    """Tokenize a scene: returns (layout, {segment role key: token array}).

    COND carries the composite and is never noised; BG carries the opaque
    background as-is; each FG(i) carries the gray-converted foreground
    cropped to its box.  TEXT has no data tokens (learned embeddings).
    """
    canvas = scene.canvas
    layout = build_layout(canvas, list(scene.boxes), p, k_text)
    cond = patchify(scene.composite, p)
    bg = patchify(scene.background, p)
    data = {"COND": cond, "BG": bg}
    for i, (fg, box) in enumerate(zip(scene.foregrounds, scene.boxes)):
        full = patchify(gray_background_convert(fg), p)
        data[f"FG{i}"] = full[token_crop_indices(box, canvas, p)]
    return layout, data


def rope_tables(positions: np.ndarray, dim_split, base: float = 10000.0):
    """Per-token cos/sin tables of width sum(dim_split).

    Each axis group of size d rotates channel pairs by angle pos * theta_j,
    theta_j = base**(-2j/d).  Tables repeat each angle across its pair so
    the rotation is x*cos + rotate_pairs(x)*sin.
    """
    if any(d % 2 for d in dim_split) or len(dim_split) != 3:
        raise ValueError(f"dim split must be three even sizes, got {dim_split}")
    cos_parts, sin_parts = [], []
    for axis, d in enumerate(dim_split):
        theta = base ** (-2.0 * np.arange(d // 2) / d)
        ang = positions[:, axis, None].astype(np.float64) * theta[None, :]
        ang = np.repeat(ang, 2, axis=1)
        cos_parts.append(np.cos(ang))
        sin_parts.append(np.sin(ang))
    cos = np.concatenate(cos_parts, axis=1).astype(np.float32)
    sin = np.concatenate(sin_parts, axis=1).astype(np.float32)
    return cos, sin


def apply_rope(x: Tensor, positions: np.ndarray, dim_split) -> Tensor:
    """Rotate the trailing head dimension of x by its token's 3-axis angles.

    x has shape (..., L, d_head) with d_head = sum(dim_split); the rotation
    is norm-preserving and relative: dot(rope(q, a), rope(k, b)) depends on
    positions only through a - b per axis.
    """
    cos, sin = rope_tables(positions, dim_split)
    if x.data.shape[-1] != cos.shape[-1]:
        raise ValueError(f"head dim {x.data.shape[-1]} != split total {cos.shape[-1]}")
    return add(mul(x, Tensor(cos)), mul(rotate_pairs(x), Tensor(sin)))
