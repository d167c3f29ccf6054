"""HTTP service exposing decomposition to the browser UI.

Endpoints (JSON bodies, snake_case keys):
  GET  /api/health           -> {"status": "ok", "checkpoint": id}
  GET  /api/scenes?n=K       -> K fresh synthetic scenes for exploration
  POST /api/decompose        -> background + per-box RGBA layers

Validation failures answer 400 with {"error", "field"}; bodies over 8 MiB
answer 413.  Static UI files are served from `ui_dir` when configured.
Parameters are shared read-only across request threads.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import mimetypes
import os
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import model as M
from .images import (
    BoundingBox,
    composite_gray_layers,
    png_decode,
    png_encode,
    png_encode_rgb,
)
from .scenes import GeneratorConfig, generate_scene

__all__ = ["ServerState", "ApiError", "create_server", "MAX_BODY_BYTES"]

log = logging.getLogger("revealtoy.server")

MAX_BODY_BYTES = 8 * 2**20
MAX_BOXES = 8
MAX_STEPS = 512
MAX_SCENES_PER_CALL = 16
DEFAULT_STEPS = 20


class ApiError(Exception):
    def __init__(self, status: int, error: str, field: str | None = None):
        super().__init__(error)
        self.status = status
        self.error = error
        self.field = field

    def body(self) -> dict:
        out = {"error": self.error}
        if self.field is not None:
            out["field"] = self.field
        return out


@dataclass
class ServerState:
    params: dict
    cfg: M.ModelConfig
    checkpoint_id: str
    ui_dir: str | None = None
    default_steps: int = DEFAULT_STEPS


def _require_int(value, field: str, lo: int, hi: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ApiError(400, f"{field} must be an integer", field)
    if not lo <= value <= hi:
        raise ApiError(400, f"{field} must be in [{lo}, {hi}]", field)
    return value


def _parse_image(body: dict, cfg: M.ModelConfig):
    b64 = body.get("image")
    if not isinstance(b64, str) or not b64:
        raise ApiError(400, "image must be a base64 PNG string", "image")
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as e:
        raise ApiError(400, f"image is not valid base64: {e}", "image")
    try:
        img = png_decode(raw)
    except Exception as e:
        raise ApiError(400, f"image is not a decodable PNG: {e}", "image")
    if (img.height, img.width) != (cfg.canvas, cfg.canvas):
        raise ApiError(
            400, f"image is {img.width}x{img.height}, model expects "
            f"{cfg.canvas}x{cfg.canvas}", "image")
    return img


def _parse_boxes(body: dict, cfg: M.ModelConfig):
    boxes = body.get("boxes")
    if not isinstance(boxes, list) or not 1 <= len(boxes) <= MAX_BOXES:
        raise ApiError(400, f"boxes must be a list of 1..{MAX_BOXES} boxes",
                       "boxes")
    out = []
    for i, b in enumerate(boxes):
        field = f"boxes[{i}]"
        if not isinstance(b, dict):
            raise ApiError(400, f"{field} must be an object", field)
        vals = {}
        for key in ("x", "y", "w", "h"):
            v = b.get(key)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ApiError(400, f"{field}.{key} must be an integer", field)
            vals[key] = v
        if vals["w"] < 1 or vals["h"] < 1:
            raise ApiError(400, f"{field} must have positive extent", field)
        if (vals["x"] < 0 or vals["y"] < 0
                or vals["x"] + vals["w"] > cfg.canvas
                or vals["y"] + vals["h"] > cfg.canvas):
            raise ApiError(400, f"{field} lies outside the image", field)
        out.append(BoundingBox(**vals))
    return out


def _fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])


def _decompose(state: ServerState, body: dict) -> dict:
    t0 = time.monotonic()
    if not isinstance(body, dict):
        raise ApiError(400, "body must be a JSON object", "body")
    img = _parse_image(body, state.cfg)
    boxes = _parse_boxes(body, state.cfg)
    steps = _require_int(body.get("steps", state.default_steps), "steps",
                         1, MAX_STEPS)
    seed = body.get("seed")
    if seed is None:
        seed = _fresh_seed()
    else:
        seed = _require_int(seed, "seed", 0, 2**64 - 1)
    shared = body.get("shared_noise", False)
    if not isinstance(shared, bool):
        raise ApiError(400, "shared_noise must be a boolean", "shared_noise")

    snapped = [b.snapped(state.cfg.patch, state.cfg.canvas, state.cfg.canvas)
               for b in boxes]
    t1 = time.monotonic()
    bg, layers = M.sample_euler(state.params, state.cfg, img, snapped,
                                steps=steps, seed=seed, shared_noise=shared)
    t2 = time.monotonic()
    recomposite = composite_gray_layers(bg, layers, snapped)
    response = {
        "background": base64.b64encode(png_encode_rgb(bg)).decode("ascii"),
        "layers": [
            {"box": box.to_dict(),
             "rgba": base64.b64encode(png_encode(layer)).decode("ascii")}
            for box, layer in zip(snapped, layers)
        ],
        "snapped_boxes": [b.to_dict() for b in snapped],
        "composite": base64.b64encode(png_encode_rgb(recomposite)).decode("ascii"),
        "seed_used": seed,
        "steps": steps,
        "shared_noise": shared,
    }
    t3 = time.monotonic()
    response["timings_ms"] = {
        "validate": round((t1 - t0) * 1000, 3),
        "sample": round((t2 - t1) * 1000, 3),
        "encode": round((t3 - t2) * 1000, 3),
        "total": round((t3 - t0) * 1000, 3),
    }
    return response


def _scenes(state: ServerState, query: dict) -> dict:
    try:
        n = int(query.get("n", ["1"])[0])
    except ValueError:
        raise ApiError(400, "n must be an integer", "n")
    if not 1 <= n <= MAX_SCENES_PER_CALL:
        raise ApiError(400, f"n must be in [1, {MAX_SCENES_PER_CALL}]", "n")
    if "seed" in query:
        try:
            base_seed = int(query["seed"][0])
        except ValueError:
            raise ApiError(400, "seed must be an integer", "seed")
    else:
        base_seed = _fresh_seed()
    gcfg = GeneratorConfig(canvas=state.cfg.canvas, layers_min=1, layers_max=3,
                           patch=state.cfg.patch, seed=base_seed)
    seeds = np.random.SeedSequence(base_seed).generate_state(n, np.uint64)
    scenes = []
    for s in seeds:
        rec = generate_scene(gcfg, int(s))
        scenes.append({
            "composite": base64.b64encode(
                png_encode_rgb(rec.scene.composite)).decode("ascii"),
            "boxes": [b.to_dict() for b in rec.scene.boxes],
            "seed": int(rec.seed),
        })
    return {"scenes": scenes, "canvas": state.cfg.canvas,
            "patch": state.cfg.patch}


def create_server(addr: tuple, state: ServerState) -> ThreadingHTTPServer:
    ui_root = os.path.realpath(state.ui_dir) if state.ui_dir else None

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.info("%s %s", self.address_string(), fmt % args)

        def _send_json(self, status: int, obj: dict):
            data = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _send_file(self, path: str):
            ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
            with open(path, "rb") as f:
                data = f.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _static(self, path: str):
            if ui_root is None:
                raise ApiError(404, "no UI configured")
            rel = path.lstrip("/") or "index.html"
            full = os.path.realpath(os.path.join(ui_root, rel))
            if not (full == ui_root or full.startswith(ui_root + os.sep)):
                raise ApiError(404, "not found")
            if os.path.isdir(full):
                full = os.path.join(full, "index.html")
            if not os.path.isfile(full):
                raise ApiError(404, "not found")
            self._send_file(full)

        def do_GET(self):
            url = urlparse(self.path)
            try:
                if url.path == "/api/health":
                    self._send_json(200, {"status": "ok",
                                          "checkpoint": state.checkpoint_id})
                elif url.path == "/api/scenes":
                    self._send_json(200, _scenes(state, parse_qs(url.query)))
                elif url.path.startswith("/api/"):
                    raise ApiError(404, f"unknown endpoint {url.path}")
                else:
                    self._static(url.path)
            except ApiError as e:
                self._send_json(e.status, e.body())
            except Exception as e:  # pragma: no cover - defensive
                log.exception("GET %s failed", self.path)
                self._send_json(500, {"error": f"internal error: {e}"})

        def do_POST(self):
            url = urlparse(self.path)
            try:
                if url.path != "/api/decompose":
                    raise ApiError(404, f"unknown endpoint {url.path}")
                length = int(self.headers.get("Content-Length") or 0)
                if length > MAX_BODY_BYTES:
                    self.close_connection = True  # body stays unread
                    raise ApiError(413, "request body over 8 MiB", "body")
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError) as e:
                    raise ApiError(400, f"body is not valid JSON: {e}", "body")
                self._send_json(200, _decompose(state, body))
            except ApiError as e:
                self._send_json(e.status, e.body())
            except Exception as e:  # pragma: no cover - defensive
                log.exception("POST %s failed", self.path)
                self._send_json(500, {"error": f"internal error: {e}"})

    return ThreadingHTTPServer(addr, Handler)
