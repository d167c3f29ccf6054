"""Command-line entry points: dataset generation, training, decomposition,
evaluation, gradient checking, and the HTTP service.

Every command taking --seed is bit-reproducible; outputs that depend on wall
time (server timings) never land in seeded artifacts.  The env var
REVEALTOY_LOG selects the log level (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import model as M
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluate import evaluate_model, write_report
from .gradcheck import full_suite
from .images import BoundingBox, png_read, png_write
from .scenes import GeneratorConfig, dataset_read, dataset_write, generate_dataset

log = logging.getLogger("revealtoy.cli")


def _parse_layers(text: str) -> tuple:
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError:
        raise SystemExit(f"--layers expects MIN..MAX, got {text!r}")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        return json.load(f)


def cmd_gen_data(args) -> int:
    lo, hi = _parse_layers(args.layers)
    cfg = GeneratorConfig(canvas=args.size, layers_min=lo, layers_max=hi,
                          occlusion_min_iou=args.occlusion_min_iou,
                          occluded_fraction=args.occluded_fraction,
                          seed=args.seed, patch=args.patch)
    records, stats = generate_dataset(cfg, args.count)
    dataset_write(records, args.out, cfg)
    print(f"wrote {len(records)} scenes to {args.out}")
    print(f"occlusion filter: {stats['occlusion_pass']} pass, "
          f"{stats['occlusion_fail']} fail")
    print(f"consistency filter: {stats['consistency_pass']} pass, "
          f"{stats['consistency_fail']} fail")
    return 0


def _train_configs(args):
    file_cfg = _load_config_file(args.config)
    model_cfg = M.ModelConfig.from_dict({**M.ModelConfig().to_dict(),
                                         **file_cfg.get("model", {})})
    loss_cfg = M.LossConfig.from_dict({**M.LossConfig().to_dict(),
                                       **file_cfg.get("loss", {})})
    train = {"lr": 3e-4, "batch_size": 4, "checkpoint_every": 0}
    train.update(file_cfg.get("train", {}))
    if args.lr is not None:
        train["lr"] = args.lr
    if args.batch_size is not None:
        train["batch_size"] = args.batch_size
    if args.checkpoint_every is not None:
        train["checkpoint_every"] = args.checkpoint_every
    return model_cfg, loss_cfg, train


def run_training(records, model_cfg, loss_cfg, out_dir, steps, seed,
                 lr=3e-4, batch_size=4, checkpoint_every=0, resume=None,
                 log_every=25):
    """Shared training driver; returns (params, opt, metrics list)."""
    os.makedirs(out_dir, exist_ok=True)
    if resume:
        params, model_cfg, loss_cfg, start, opt = load_checkpoint(resume)
        if opt is None:
            opt = M.adam_init(params)
            opt.step = start
    else:
        params = M.init_params(model_cfg, np.random.default_rng(seed))
        opt = M.adam_init(params)

    canvas = records[0].scene.canvas
    if canvas != model_cfg.canvas:
        raise SystemExit(
            f"dataset canvas {canvas} does not match model canvas "
            f"{model_cfg.canvas}")
    for rec in records:
        for b in rec.scene.boxes:
            if not b.is_snapped(model_cfg.patch):
                raise SystemExit(
                    f"dataset box ({b.x},{b.y},{b.w},{b.h}) is not aligned "
                    f"to the model patch {model_cfg.patch}")

    if checkpoint_every <= 0:
        checkpoint_every = max(1, steps // 4)
    rng = np.random.default_rng([seed, opt.step])
    cache: dict = {}
    history = []
    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    with open(metrics_path, "a" if resume else "w") as mf:
        for i in range(steps):
            idx = rng.integers(0, len(records), size=batch_size)
            batch = [records[int(j)] for j in idx]
            if len(cache) > 64:
                cache.clear()
            metrics = M.train_step(params, batch, opt, rng, model_cfg,
                                   loss_cfg, lr=lr, cache=cache)
            history.append(metrics)
            mf.write(json.dumps({k: metrics[k] for k in
                                 ("step", "loss", "fm", "alpha", "orth")})
                     + "\n")
            if opt.step % checkpoint_every == 0 or opt.step == steps:
                save_checkpoint(os.path.join(out_dir, "model.ckpt"), params,
                                model_cfg, loss_cfg, step=opt.step, opt=opt)
            if log_every and opt.step % log_every == 0:
                log.info("step %d loss %.4f (fm %.4f alpha %.4f orth %.4f)",
                         opt.step, metrics["loss"], metrics["fm"],
                         metrics["alpha"], metrics["orth"])
    save_checkpoint(os.path.join(out_dir, "model.ckpt"), params, model_cfg,
                    loss_cfg, step=opt.step, opt=opt)
    return params, opt, history


def cmd_train(args) -> int:
    records = dataset_read(args.data)
    if not records:
        raise SystemExit(f"dataset {args.data} is empty")
    model_cfg, loss_cfg, train = _train_configs(args)
    _, opt, history = run_training(
        records, model_cfg, loss_cfg, args.out, args.steps, args.seed,
        lr=train["lr"], batch_size=int(train["batch_size"]),
        checkpoint_every=int(train["checkpoint_every"]), resume=args.resume)
    print(f"trained to step {opt.step}; final loss {history[-1]['loss']:.4f}; "
          f"checkpoint {os.path.join(args.out, 'model.ckpt')}")
    return 0


def _parse_boxes_arg(text: str) -> list:
    if os.path.exists(text):
        with open(text) as f:
            raw = json.load(f)
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError:
            raise SystemExit(f"--boxes is neither a file nor JSON: {text!r}")
    if not isinstance(raw, list) or not raw:
        raise SystemExit("--boxes must be a non-empty JSON list")
    return raw


def cmd_decompose(args) -> int:
    params, cfg, _, step, _ = load_checkpoint(args.ckpt)
    image = png_read(args.image)
    if (image.height, image.width) != (cfg.canvas, cfg.canvas):
        raise SystemExit(
            f"image is {image.width}x{image.height}, model expects "
            f"{cfg.canvas}x{cfg.canvas}")
    raw_boxes = _parse_boxes_arg(args.boxes)
    if len(raw_boxes) > 8:
        raise SystemExit(f"at most 8 boxes supported, got {len(raw_boxes)}")
    errors, boxes = [], []
    for i, b in enumerate(raw_boxes):
        try:
            box = BoundingBox.from_dict(b)
            if (box.x < 0 or box.y < 0 or box.x + box.w > cfg.canvas
                    or box.y + box.h > cfg.canvas):
                raise ValueError("outside the image")
            boxes.append(box)
        except (ValueError, TypeError, KeyError) as e:
            errors.append(f"box {i}: {e}")
    if errors:
        raise SystemExit("invalid boxes:\n  " + "\n  ".join(errors))

    snapped = [b.snapped(cfg.patch, cfg.canvas, cfg.canvas) for b in boxes]
    bg, layers = M.sample_euler(params, cfg, image, snapped, steps=args.steps,
                                seed=args.seed, shared_noise=args.shared_noise)
    os.makedirs(args.out, exist_ok=True)
    png_write(bg, os.path.join(args.out, "background.png"))
    for i, layer in enumerate(layers):
        png_write(layer, os.path.join(args.out, f"fg_{i:02d}.png"))
    result = {
        "snapped_boxes": [b.to_dict() for b in snapped],
        "requested_boxes": [b.to_dict() for b in boxes],
        "seed": int(args.seed),
        "steps": int(args.steps),
        "shared_noise": bool(args.shared_noise),
        "checkpoint_step": int(step),
    }
    with open(os.path.join(args.out, "result.json"), "w") as f:
        json.dump(result, f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"wrote background + {len(layers)} layers to {args.out}")
    return 0


def cmd_eval(args) -> int:
    params, cfg, loss_cfg, step, _ = load_checkpoint(args.ckpt)
    records = dataset_read(args.data)
    if args.limit:
        records = records[: args.limit]
    report = evaluate_model(
        params, cfg, records, steps=args.steps, seed=args.seed,
        loss_cfg=loss_cfg,
        checkpoint_id=f"{os.path.basename(args.ckpt)}@{step}",
        with_robustness=args.robustness)
    md = write_report(report, args.report)
    print(f"evaluated {report.n_scenes} scenes -> {args.report}, {md}")
    for k, v in report.aggregates.items():
        print(f"  {k}: {v:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    try:
        out = full_suite(seed=args.seed)
    except AssertionError as e:
        print(f"FAIL: {e}")
        return 1
    for name in sorted(out["ops"]):
        print(f"op {name}: max rel err {out['ops'][name]:.3e}")
    print(f"composed loss ({out['param_count']} params): "
          f"max rel err {out['max_composed_error']:.3e}")
    print("gradient checks passed")
    return 0


def cmd_serve(args) -> int:
    from .server import ServerState, create_server

    params, cfg, _, step, _ = load_checkpoint(args.ckpt)
    host, _, port = args.addr.rpartition(":")
    state = ServerState(
        params=params, cfg=cfg,
        checkpoint_id=f"{os.path.basename(args.ckpt)}@{step}",
        ui_dir=args.ui_dir)
    httpd = create_server((host or "127.0.0.1", int(port)), state)
    print(f"serving on http://{httpd.server_address[0]}:"
          f"{httpd.server_address[1]} (checkpoint {state.checkpoint_id})")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="revealtoy",
        description="Layered image decomposition toy: synthesize data, train "
                    "the flow model, decompose images, evaluate, serve.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic layered dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--layers", default="1..3")
    g.add_argument("--occlusion-min-iou", type=float, default=0.1)
    g.add_argument("--occluded-fraction", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--patch", type=int, default=2)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train on a generated dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--resume", default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--checkpoint-every", type=int, default=None)
    t.set_defaults(fn=cmd_train)

    d = sub.add_parser("decompose", help="split an image into layers")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--image", required=True)
    d.add_argument("--boxes", required=True,
                   help="JSON list of {x,y,w,h} or a path to one")
    d.add_argument("--out", required=True)
    d.add_argument("--steps", type=int, default=20)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--shared-noise", action="store_true")
    d.set_defaults(fn=cmd_decompose)

    e = sub.add_parser("eval", help="score a checkpoint against a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--robustness", action="store_true")
    e.add_argument("--steps", type=int, default=20)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--limit", type=int, default=0)
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("serve", help="HTTP decomposition service")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--addr", default="127.0.0.1:8787")
    s.add_argument("--ui-dir", default=None)
    s.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("REVEALTOY_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
