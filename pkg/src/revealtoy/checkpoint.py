"""Binary checkpoint format for named tensors.

Layout (all integers little-endian):
  magic "RVLT" | version u32 | tensor count u32 | per tensor:
  name length u16, name UTF-8, dtype code u8 (0=f32, 1=f64), ndim u8,
  dims u32 each, raw little-endian payload.

Tensors are written in sorted name order, so identical state serializes to
identical bytes.  Optimizer moments ride along under an "opt." prefix and
the step counter as the scalar "meta.step"; a config.json sidecar in the
same directory carries the model and loss configuration.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .model import AdamState, LossConfig, ModelConfig
from .tensor import Tensor

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"RVLT"
VERSION = 1
_DTYPE_TO_CODE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_TO_DTYPE = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


class CheckpointError(Exception):
    pass


def _write_tensor(f, name: str, arr: np.ndarray) -> None:
    if arr.dtype not in _DTYPE_TO_CODE:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
    encoded = name.encode("utf-8")
    f.write(struct.pack("<H", len(encoded)))
    f.write(encoded)
    f.write(struct.pack("<BB", _DTYPE_TO_CODE[arr.dtype], arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def _read_tensor(f):
    (name_len,) = struct.unpack("<H", _read_exact(f, 2))
    name = _read_exact(f, name_len).decode("utf-8")
    code, ndim = struct.unpack("<BB", _read_exact(f, 2))
    if code not in _CODE_TO_DTYPE:
        raise CheckpointError(f"unknown dtype code {code} for {name!r}")
    dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
    dtype = _CODE_TO_DTYPE[code]
    payload = _read_exact(f, int(np.prod(dims, dtype=np.int64)) * dtype.itemsize)
    arr = np.frombuffer(payload, dtype=dtype.newbyteorder("<")).reshape(dims)
    return name, arr.astype(dtype)


def save_checkpoint(path, params: dict, model_cfg: ModelConfig,
                    loss_cfg: LossConfig, step: int = 0,
                    opt: AdamState | None = None) -> None:
    tensors = {}
    for name, p in params.items():
        tensors[name] = p.data if isinstance(p, Tensor) else np.asarray(p)
    tensors["meta.step"] = np.asarray([float(step)], dtype=np.float64)
    if opt is not None:
        for name, m in opt.m.items():
            tensors[f"opt.m.{name}"] = m
        for name, v in opt.v.items():
            tensors[f"opt.v.{name}"] = v

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name in sorted(tensors):
            _write_tensor(f, name, np.asarray(tensors[name]))

    sidecar = os.path.join(os.path.dirname(os.path.abspath(path)), "config.json")
    with open(sidecar, "w") as f:
        json.dump({"model": model_cfg.to_dict(), "loss": loss_cfg.to_dict(),
                   "step": int(step)}, f, indent=1, sort_keys=True)


def load_checkpoint(path):
    """Returns (params, model_cfg, loss_cfg, step, opt_or_None).

    Parameter tensors come back as trainable Tensors; optimizer moments are
    restored when present.
    """
    try:
        f = open(path, "rb")
    except OSError as e:
        raise CheckpointError(f"cannot open checkpoint: {e}") from e
    with f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError("bad magic; not a checkpoint file")
        version, count = struct.unpack("<II", _read_exact(f, 8))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        tensors = dict(_read_tensor(f) for _ in range(count))

    sidecar = os.path.join(os.path.dirname(os.path.abspath(path)), "config.json")
    if not os.path.exists(sidecar):
        raise CheckpointError(f"missing sidecar {sidecar}")
    with open(sidecar) as f:
        cfg = json.load(f)
    model_cfg = ModelConfig.from_dict(cfg["model"])
    loss_cfg = LossConfig.from_dict(cfg["loss"])

    step = int(tensors.pop("meta.step", np.zeros(1))[0])
    params, opt_m, opt_v = {}, {}, {}
    for name, arr in tensors.items():
        if name.startswith("opt.m."):
            opt_m[name[len("opt.m."):]] = arr
        elif name.startswith("opt.v."):
            opt_v[name[len("opt.v."):]] = arr
        else:
            params[name] = Tensor(arr, requires_grad=True)
    opt = None
    if opt_m:
        if set(opt_m) != set(params) or set(opt_v) != set(params):
            raise CheckpointError("optimizer state does not match parameters")
        opt = AdamState(step=step, m=opt_m, v=opt_v)
    return params, model_cfg, loss_cfg, step, opt
