"""Procedural layered-scene synthesis, quality filters, and dataset I/O.

Every layer is quantized onto the 8-bit grid before the composite is formed,
so stored scenes round-trip PNG files bit-exactly and the recomposition
error is bounded by half a byte step (1/255 on the signed scale).

Foreground shapes have anti-aliased fractional-alpha edges; boxes are the
tight bounding boxes of the quantized alpha support, snapped outward to the
patch grid.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .images import (
    BoundingBox,
    LayeredScene,
    RgbaImage,
    composite_layers,
    png_read,
    png_write,
    quantize,
)

__all__ = [
    "GeneratorConfig",
    "SceneRecord",
    "DatasetError",
    "generate_scene",
    "generate_dataset",
    "occlusion_filter",
    "consistency_filter",
    "perturb_boxes",
    "dataset_write",
    "dataset_read",
]

FORMAT_VERSION = 1
PERTURB_KINDS = ("excessive", "offset", "inadequate")


@dataclass(frozen=True)
class GeneratorConfig:
    canvas: int = 32
    layers_min: int = 1
    layers_max: int = 3
    shapes: tuple = ("disk", "rectangle", "soft-blob")
    occlusion_min_iou: float = 0.1
    occluded_fraction: float = 0.5
    seed: int = 0
    patch: int = 2

    def __post_init__(self):
        if self.layers_min < 1 or self.layers_max < self.layers_min:
            raise ValueError("need 1 <= layers_min <= layers_max")
        if not 0.0 <= self.occlusion_min_iou < 1.0:
            raise ValueError("occlusion_min_iou must be in [0, 1)")
        if not 0.0 <= self.occluded_fraction <= 1.0:
            raise ValueError("occluded_fraction must be in [0, 1]")
        if self.canvas % self.patch:
            raise ValueError("canvas must be divisible by patch")
        object.__setattr__(self, "shapes", tuple(self.shapes))
        for s in self.shapes:
            if s not in ("disk", "rectangle", "soft-blob"):
                raise ValueError(f"unknown shape kind {s!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shapes"] = list(self.shapes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(**{**d, "shapes": tuple(d.get("shapes", cls.shapes))})


@dataclass(frozen=True)
class SceneRecord:
    scene: LayeredScene
    seed: int
    provenance: dict = field(default_factory=dict, compare=False)


class DatasetError(Exception):
    def __init__(self, scene_id: str, message: str):
        super().__init__(f"{scene_id}: {message}")
        self.scene_id = scene_id


def _smooth_background(rng, canvas: int) -> RgbaImage:
    """Two-tone linear gradient plus a soft radial blotch; always opaque."""
    yy, xx = np.mgrid[0:canvas, 0:canvas] / max(canvas - 1, 1)
    c0, c1, c2 = rng.uniform(-0.85, 0.85, (3, 3))
    ang = rng.uniform(0, 2 * np.pi)
    t = np.cos(ang) * xx + np.sin(ang) * yy
    t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
    rgb = c0 + t[..., None] * (c1 - c0)
    cx, cy, rad = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.3, 0.7)
    w = np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / rad**2))
    rgb = rgb + 0.5 * w[..., None] * (c2 - rgb)
    return RgbaImage.opaque(np.clip(rgb, -0.95, 0.95).astype(np.float32))


def _coverage_supersampled(indicator, canvas: int, ss: int = 4) -> np.ndarray:
    """Mean of a {0,1} indicator over an ss x ss subpixel grid per pixel."""
    offs = (np.arange(ss) + 0.5) / ss
    ys = (np.arange(canvas)[:, None] + offs[None, :]).reshape(-1)
    xs = ys
    sy, sx = np.meshgrid(ys, xs, indexing="ij")
    cover = indicator(sx, sy).astype(np.float64)
    cover = cover.reshape(canvas, ss, canvas, ss).mean(axis=(1, 3))
    return cover


def _draw_shape(rng, cfg: GeneratorConfig) -> RgbaImage:
    canvas = cfg.canvas
    kind = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
    if kind == "disk":
        r = rng.uniform(0.10, 0.30) * canvas
        cx = rng.uniform(r + 1, canvas - r - 1)
        cy = rng.uniform(r + 1, canvas - r - 1)
        cover = _coverage_supersampled(
            lambda sx, sy: (sx - cx) ** 2 + (sy - cy) ** 2 <= r * r, canvas)
    elif kind == "rectangle":
        hw = rng.uniform(0.08, 0.28) * canvas
        hh = rng.uniform(0.08, 0.28) * canvas
        cx = rng.uniform(hw + 1, canvas - hw - 1)
        cy = rng.uniform(hh + 1, canvas - hh - 1)
        cover = _coverage_supersampled(
            lambda sx, sy: (np.abs(sx - cx) <= hw) & (np.abs(sy - cy) <= hh), canvas)
    else:  # soft-blob: compact-support radial falloff with fractional alpha
        r = rng.uniform(0.12, 0.34) * canvas
        cx = rng.uniform(r + 1, canvas - r - 1)
        cy = rng.uniform(r + 1, canvas - r - 1)
        yy, xx = np.mgrid[0:canvas, 0:canvas] + 0.5
        d2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / (r * r)
        cover = np.maximum(0.0, 1.0 - d2) ** 1.5

    base = rng.uniform(-0.9, 0.9, 3)
    tint = rng.uniform(-0.35, 0.35, 3)
    grad = (np.mgrid[0:canvas, 0:canvas][int(rng.integers(2))] / max(canvas - 1, 1))
    rgb = np.clip(base + grad[..., None] * tint, -1.0, 1.0)
    data = np.concatenate(
        [rgb, (2.0 * cover - 1.0)[..., None]], axis=-1).astype(np.float32)
    return quantize(RgbaImage(data))


def _tight_box(fg: RgbaImage, patch: int, canvas: int) -> BoundingBox:
    ys, xs = np.nonzero(fg.alpha > -1.0)
    raw = BoundingBox(int(xs.min()), int(ys.min()),
                      int(xs.max()) + 1 - int(xs.min()),
                      int(ys.max()) + 1 - int(ys.min()))
    return raw.snapped(patch, canvas, canvas)


def _binary_masks(scene: LayeredScene) -> list:
    return [fg.alpha > 0.0 for fg in scene.foregrounds]


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def occlusion_filter(scene: LayeredScene, min_iou: float) -> bool:
    """True iff some pair of binarized alpha masks (alpha > 0) overlaps
    with IoU >= min_iou.  Single-layer scenes never pass."""
    masks = _binary_masks(scene)
    if len(masks) < 2:
        return False
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if _mask_iou(masks[i], masks[j]) >= min_iou:
                return True
    return False


def consistency_filter(scene: LayeredScene, tol: float) -> bool:
    """True iff composite equals background (MAE <= tol) wherever no
    foreground has any coverage."""
    covered = np.zeros((scene.canvas, scene.composite.width), dtype=bool)
    for fg in scene.foregrounds:
        covered |= fg.alpha > -1.0
    outside = ~covered
    if not outside.any():
        return True
    mae = np.abs(scene.composite.rgb[outside] - scene.background.rgb[outside]).mean()
    return bool(mae <= tol)


def generate_scene(cfg: GeneratorConfig, seed: int) -> SceneRecord:
    """Deterministically synthesize one scene from an integer seed."""
    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    n = int(rng.integers(cfg.layers_min, cfg.layers_max + 1))
    want_occluded = n >= 2 and rng.uniform() < cfg.occluded_fraction
    background = quantize(_smooth_background(rng, cfg.canvas))

    for _attempt in range(200):
        fgs = []
        for _ in range(n):
            for _retry in range(8):
                fg = _draw_shape(rng, cfg)
                if np.any(fg.alpha > -1.0):
                    fgs.append(fg)
                    break
            else:
                break
        if len(fgs) != n:
            continue
        boxes = tuple(_tight_box(fg, cfg.patch, cfg.canvas) for fg in fgs)
        comp = quantize(composite_layers(background, fgs))
        scene = LayeredScene(comp, background, tuple(fgs), boxes)
        if want_occluded and not occlusion_filter(scene, cfg.occlusion_min_iou):
            continue
        scene.validate()
        return SceneRecord(scene, int(seed), cfg.to_dict())
    raise RuntimeError(f"scene generation did not converge for seed {seed}")


def generate_dataset(cfg: GeneratorConfig, count: int):
    """Generate `count` scenes on independent derived seeds.

    Returns (records, stats) where stats counts filter outcomes over the
    emitted scenes."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(max(count, 1), np.uint64)
    records = [generate_scene(cfg, int(seeds[i])) for i in range(count)]
    stats = {
        "occlusion_pass": sum(
            occlusion_filter(r.scene, cfg.occlusion_min_iou) for r in records),
        "consistency_pass": sum(
            consistency_filter(r.scene, 1 / 255) for r in records),
        "count": count,
    }
    stats["occlusion_fail"] = count - stats["occlusion_pass"]
    stats["consistency_fail"] = count - stats["consistency_pass"]
    return records, stats


def _snap_edge(v: float, p: int) -> int:
    return int(np.rint(v / p)) * p


def perturb_boxes(boxes, kind: str, lo: float, hi: float, rng,
                  canvas: int, p: int):
    """Degrade boxes per variant kind; fractions lo/hi are relative to box size.

    excessive: w,h scaled by (1+u), center fixed.  inadequate: scaled by
    (1-u).  offset: center translated by (u*w, u*h) with independent random
    signs; translation lands on the patch grid so w,h are preserved exactly.
    Scaled edges snap to the nearest grid line and clamp to the canvas; a
    box collapsing below one patch is redrawn up to 8 times, then errors.
    """
    if kind not in PERTURB_KINDS:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    if not 0.0 <= lo <= hi:
        raise ValueError("need 0 <= lo <= hi")
    out = []
    for bi, box in enumerate(boxes):
        box = box.snapped(p, canvas, canvas)
        for _ in range(8):
            u = float(rng.uniform(lo, hi))
            if kind == "offset":
                sx = 1 if rng.uniform() < 0.5 else -1
                sy = 1 if rng.uniform() < 0.5 else -1
                dx = _snap_edge(u * box.w, p) * sx
                dy = _snap_edge(u * box.h, p) * sy
                nx = int(np.clip(box.x + dx, 0, canvas - box.w))
                ny = int(np.clip(box.y + dy, 0, canvas - box.h))
                out.append(BoundingBox(nx, ny, box.w, box.h))
                break
            scale = 1.0 + u if kind == "excessive" else 1.0 - u
            cx, cy = box.x + box.w / 2.0, box.y + box.h / 2.0
            x0 = max(_snap_edge(cx - box.w * scale / 2.0, p), 0)
            y0 = max(_snap_edge(cy - box.h * scale / 2.0, p), 0)
            x1 = min(_snap_edge(cx + box.w * scale / 2.0, p), canvas)
            y1 = min(_snap_edge(cy + box.h * scale / 2.0, p), canvas)
            if x1 - x0 >= p and y1 - y0 >= p:
                out.append(BoundingBox(x0, y0, x1 - x0, y1 - y0))
                break
        else:
            raise ValueError(f"box {bi} collapsed below one patch after 8 redraws")
    return out


def dataset_write(records, out_dir, cfg: GeneratorConfig = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    config = cfg.to_dict() if cfg is not None else (
        records[0].provenance if records else {})
    canvas = records[0].scene.canvas if records else config.get("canvas", 0)
    manifest = {"count": len(records), "canvas": canvas,
                "config": config, "format_version": FORMAT_VERSION}
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    for i, rec in enumerate(records):
        sdir = os.path.join(out_dir, f"scene_{i:06d}")
        os.makedirs(sdir, exist_ok=True)
        png_write(rec.scene.composite, os.path.join(sdir, "composite.png"))
        png_write(rec.scene.background, os.path.join(sdir, "background.png"))
        for j, fg in enumerate(rec.scene.foregrounds):
            png_write(fg, os.path.join(sdir, f"fg_{j:02d}.png"))
        meta = {"boxes": [b.to_dict() for b in rec.scene.boxes], "seed": rec.seed}
        with open(os.path.join(sdir, "scene.json"), "w") as f:
            json.dump(meta, f, indent=1, sort_keys=True)


def _read_scene_file(sdir: str, scene_id: str, name: str):
    path = os.path.join(sdir, name)
    if not os.path.exists(path):
        raise DatasetError(scene_id, f"missing {name}")
    try:
        if name.endswith(".json"):
            with open(path) as f:
                return json.load(f)
        return png_read(path)
    except DatasetError:
        raise
    except Exception as exc:
        raise DatasetError(scene_id, f"unreadable {name}: {exc}") from exc


def dataset_read(root) -> list:
    manifest_path = os.path.join(root, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DatasetError("manifest", "missing manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    records = []
    for i in range(manifest["count"]):
        scene_id = f"scene_{i:06d}"
        sdir = os.path.join(root, scene_id)
        meta = _read_scene_file(sdir, scene_id, "scene.json")
        comp = _read_scene_file(sdir, scene_id, "composite.png")
        bg = _read_scene_file(sdir, scene_id, "background.png")
        boxes = tuple(BoundingBox.from_dict(b) for b in meta["boxes"])
        fgs = tuple(_read_scene_file(sdir, scene_id, f"fg_{j:02d}.png")
                    for j in range(len(boxes)))
        scene = LayeredScene(comp, bg, fgs, boxes)
        try:
            scene.validate()
        except ValueError as exc:
            raise DatasetError(scene_id, f"invalid scene: {exc}") from exc
        records.append(SceneRecord(scene, int(meta["seed"]), manifest["config"]))
    return records
