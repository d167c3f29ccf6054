"""RGBA layer data model, alpha compositing, and PNG round trips.

Images are numpy arrays of shape (H, W, 4) holding float32 values in the
signed range [-1, +1].  Alpha -1 is fully transparent, +1 fully opaque, so
the midpoint 0 corresponds to 50% coverage and to mid-gray after the
gray-background conversion.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

__all__ = [
    "RgbaImage",
    "BoundingBox",
    "LayeredScene",
    "composite_layers",
    "composite_gray_layers",
    "gray_background_convert",
    "quantize",
    "png_encode",
    "png_encode_rgb",
    "png_decode",
    "png_write",
    "png_read",
]


@dataclass(frozen=True)
class RgbaImage:
    """An RGBA raster in the signed [-1, +1] convention."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise ValueError(f"expected (H, W, 4) array, got shape {arr.shape}")
        if arr.size and (arr.max() > 1.0 + 1e-6 or arr.min() < -1.0 - 1e-6):
            raise ValueError("channel values must lie in [-1, +1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def rgb(self) -> np.ndarray:
        return self.data[..., :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.data[..., 3]

    @classmethod
    def opaque(cls, rgb: np.ndarray) -> "RgbaImage":
        """Wrap an (H, W, 3) RGB array with alpha fixed at +1."""
        rgb = np.asarray(rgb, dtype=np.float32)
        a = np.ones(rgb.shape[:2] + (1,), dtype=np.float32)
        return cls(np.concatenate([rgb, a], axis=-1))

    @classmethod
    def transparent(cls, height: int, width: int) -> "RgbaImage":
        out = np.zeros((height, width, 4), dtype=np.float32)
        out[..., 3] = -1.0
        return cls(out)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box: top-left (x, y), extent (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"box field {name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative, got ({self.x}, {self.y})")

    def validate(self, height: int, width: int) -> None:
        if self.x + self.w > width or self.y + self.h > height:
            raise ValueError(
                f"box ({self.x},{self.y},{self.w},{self.h}) exceeds "
                f"{width}x{height} canvas")

    def snapped(self, p: int, height: int, width: int) -> "BoundingBox":
        """Snap outward to the patch grid, then clamp to the canvas."""
        x0 = (self.x // p) * p
        y0 = (self.y // p) * p
        x1 = min(-((-(self.x + self.w)) // p) * p, width)
        y1 = min(-((-(self.y + self.h)) // p) * p, height)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def is_snapped(self, p: int) -> bool:
        return all(v % p == 0 for v in (self.x, self.y, self.w, self.h))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(d["x"], d["y"], d["w"], d["h"])


@dataclass(frozen=True)
class LayeredScene:
    """Composite plus its ground-truth decomposition, back-to-front."""

    composite: RgbaImage
    background: RgbaImage
    foregrounds: tuple
    boxes: tuple
    # Tolerance matches 8-bit storage: re-quantizing the composite moves any
    # channel by at most half a byte step on the signed scale.
    recomposite_tol: float = field(default=1 / 255, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "foregrounds", tuple(self.foregrounds))
        object.__setattr__(self, "boxes", tuple(self.boxes))

    @property
    def n_layers(self) -> int:
        return len(self.foregrounds)

    @property
    def canvas(self) -> int:
        return self.composite.height

    def validate(self) -> None:
        if len(self.foregrounds) != len(self.boxes) or not self.foregrounds:
            raise ValueError("need one box per foreground and at least one layer")
        h, w = self.composite.height, self.composite.width
        for img in (self.background, *self.foregrounds):
            if (img.height, img.width) != (h, w):
                raise ValueError("all layers must share the composite canvas size")
        if not np.all(self.background.alpha == 1.0):
            raise ValueError("background must be fully opaque")
        for i, (fg, box) in enumerate(zip(self.foregrounds, self.boxes)):
            box.validate(h, w)
            outside = np.ones((h, w), dtype=bool)
            outside[box.y:box.y + box.h, box.x:box.x + box.w] = False
            if not np.all(fg.alpha[outside] == -1.0):
                raise ValueError(f"foreground {i} has coverage outside its box")
        recon = composite_layers(self.background, list(self.foregrounds))
        err = np.abs(recon.data - self.composite.data).max()
        if err > self.recomposite_tol + 1e-7:
            raise ValueError(f"composite deviates from layers by {err:.6f}")


def composite_layers(background: RgbaImage, foregrounds: list) -> RgbaImage:
    """Alpha-over the foregrounds onto the background, back to front.

    Coverage a' = (alpha + 1)/2 maps the signed alpha onto [0, 1];
    C = a'*F + (1 - a')*C_below.  The result is fully opaque.
    """
    h, w = background.height, background.width
    out = background.rgb.astype(np.float64).copy()
    for fg in foregrounds:
        if (fg.height, fg.width) != (h, w):
            raise ValueError("layer size does not match background")
        cover = (fg.alpha.astype(np.float64) + 1.0) / 2.0
        out = cover[..., None] * fg.rgb.astype(np.float64) + (1.0 - cover[..., None]) * out
    return RgbaImage.opaque(np.clip(out, -1.0, 1.0).astype(np.float32))


def gray_background_convert(fg: RgbaImage) -> RgbaImage:
    """Scale RGB by coverage (0.5*alpha + 0.5); alpha passes through.

    Fully transparent pixels land on 0, i.e. mid-gray in the signed range.
    """
    cover = 0.5 * fg.alpha + 0.5
    rgb = cover[..., None] * fg.rgb
    return RgbaImage(np.concatenate([rgb, fg.alpha[..., None]], axis=-1))


def composite_gray_layers(background: RgbaImage, gray_layers, boxes) -> RgbaImage:
    """Alpha-over per-box gray-domain crops onto the background.

    Gray-converted RGB is coverage-premultiplied true RGB, so the over
    operator reduces to C = gray + (1 - a')*C_below with no division.
    """
    if len(gray_layers) != len(boxes):
        raise ValueError("layer and box counts differ")
    out = background.rgb.astype(np.float64).copy()
    for img, box in zip(gray_layers, boxes):
        if (img.height, img.width) != (box.h, box.w):
            raise ValueError("layer crop does not match its box")
        sl = (slice(box.y, box.y + box.h), slice(box.x, box.x + box.w))
        cover = (img.alpha.astype(np.float64) + 1.0) / 2.0
        out[sl] = img.rgb.astype(np.float64) + (1.0 - cover[..., None]) * out[sl]
    return RgbaImage.opaque(np.clip(out, -1.0, 1.0).astype(np.float32))


def _to_bytes(img: RgbaImage) -> np.ndarray:
    scaled = np.round((img.data.astype(np.float64) + 1.0) * 127.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def _from_bytes(arr: np.ndarray) -> RgbaImage:
    return RgbaImage(arr.astype(np.float32) / 127.5 - 1.0)


def quantize(img: RgbaImage) -> RgbaImage:
    """Round onto the 8-bit storage grid; PNG round trips become bit-exact."""
    return _from_bytes(_to_bytes(img))


def png_encode(img: RgbaImage) -> bytes:
    """Serialize to 8-bit RGBA PNG; byte k maps back to k/127.5 - 1."""
    buf = io.BytesIO()
    Image.fromarray(_to_bytes(img), mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def png_encode_rgb(img: RgbaImage) -> bytes:
    """Serialize RGB channels only (alpha dropped) to an 8-bit PNG."""
    buf = io.BytesIO()
    Image.fromarray(_to_bytes(img)[..., :3], mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_decode(data: bytes) -> RgbaImage:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGBA"))
    return _from_bytes(arr)


def png_write(img: RgbaImage, path) -> None:
    with open(path, "wb") as f:
        f.write(png_encode(img))


def png_read(path) -> RgbaImage:
    with open(path, "rb") as f:
        return png_decode(f.read())
