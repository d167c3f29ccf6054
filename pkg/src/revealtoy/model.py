"""Rectified-flow transformer over layered token sequences.

Noise sits at t=1, data at t=0: z_t = t*eps + (1-t)*z_data, with true
velocity v = eps - z_data, so a predicted velocity yields the one-step
reconstruction z_hat = z_t - t*v_hat and Euler integration walks t from 1
down to 0.

Each block is pre-norm self-attention over the full sequence under the
layer-routing mask, an MLP, timestep scale/shift/gate modulation (the gates
and the output head start at zero so an untrained model is the identity
plus bias), and a masked cross-attention adapter that injects each layer's
exclusively owned condition patches.  The output head reads only the
generated (BG and FG) token rows.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .images import RgbaImage
from .masks import build_oga_attention_mask, build_oga_masks, build_raa_mask
from .tensor import Tensor
from .tokens import (
    TokenLayout,
    build_layout,
    build_sequence,
    patchify,
    rope_tables,
    token_crop_indices,
    unpatchify,
    unpatchify_crop,
)

__all__ = [
    "ModelConfig",
    "LossConfig",
    "LayoutBundle",
    "init_params",
    "make_bundle",
    "forward",
    "interpolate",
    "clean_estimate",
    "fm_loss",
    "alpha_loss",
    "orth_loss",
    "total_loss",
    "scene_targets",
    "scene_loss",
    "AdamState",
    "adam_init",
    "adam_apply",
    "train_step",
    "draw_initial_noise",
    "sample_euler",
]


@dataclass(frozen=True)
class ModelConfig:
    token_dim: int = 64
    heads: int = 4
    rope_split: tuple = (4, 6, 6)
    blocks: int = 4
    mlp_ratio: int = 4
    patch: int = 2
    k_text: int = 4
    canvas: int = 32
    use_raa: bool = True
    use_oga: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rope_split", tuple(self.rope_split))
        if self.token_dim % self.heads:
            raise ValueError("token_dim must divide evenly into heads")
        if sum(self.rope_split) != self.head_dim or any(d % 2 for d in self.rope_split):
            raise ValueError(
                f"rope split {self.rope_split} must be even parts summing to "
                f"head dim {self.head_dim}")
        if self.canvas % self.patch:
            raise ValueError("canvas must be divisible by patch")

    @property
    def head_dim(self) -> int:
        return self.token_dim // self.heads

    @property
    def in_dim(self) -> int:
        return 4 * self.patch * self.patch

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rope_split"] = list(self.rope_split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "rope_split": tuple(d["rope_split"])})


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.95
    gamma: float = 1.5
    eps_log: float = 1e-6
    eps_cos: float = 1e-6
    lambda_alpha: float = 1.0
    lambda_orth: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if self.gamma <= 0 or self.lambda_alpha < 0 or self.lambda_orth < 0:
            raise ValueError("gamma must be positive and weights non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


def init_params(cfg: ModelConfig, rng, dtype=np.float32) -> dict:
    """Named parameter tensors.  Modulation, adapter outputs, and the head
    are zero-initialised so the untrained model is input-independent."""
    D, H = cfg.token_dim, cfg.mlp_ratio * cfg.token_dim
    std = 0.02

    def normal(*shape):
        return rng.standard_normal(shape) * std

    def zeros(*shape):
        return np.zeros(shape)

    spec = {
        "text_emb": normal(cfg.k_text, D),
        "in_proj_w": normal(cfg.in_dim, D),
        "in_proj_b": zeros(D),
        "t_mlp1_w": normal(D, D),
        "t_mlp1_b": zeros(D),
        "t_mlp2_w": normal(D, D),
        "t_mlp2_b": zeros(D),
        "head_ln_g": np.ones(D),
        "head_ln_b": zeros(D),
        "head_w": zeros(D, cfg.in_dim),
        "head_b": zeros(cfg.in_dim),
    }
    for b in range(cfg.blocks):
        spec.update({
            f"blk{b}_mod_w": zeros(D, 6 * D),
            f"blk{b}_mod_b": zeros(6 * D),
            f"blk{b}_qkv_w": normal(D, 3 * D),
            f"blk{b}_qkv_b": zeros(3 * D),
            f"blk{b}_attn_out_w": normal(D, D),
            f"blk{b}_attn_out_b": zeros(D),
            f"blk{b}_mlp1_w": normal(D, H),
            f"blk{b}_mlp1_b": zeros(H),
            f"blk{b}_mlp2_w": normal(H, D),
            f"blk{b}_mlp2_b": zeros(D),
            f"blk{b}_oga_q_w": normal(D, D),
            f"blk{b}_oga_q_b": zeros(D),
            f"blk{b}_oga_kv_w": normal(D, 2 * D),
            f"blk{b}_oga_kv_b": zeros(2 * D),
            f"blk{b}_oga_out_w": zeros(D, D),
            f"blk{b}_oga_out_b": zeros(D),
        })
    return {k: Tensor(v.astype(dtype), requires_grad=True) for k, v in spec.items()}


def param_count(params: dict) -> int:
    return sum(p.size for p in params.values())


@dataclass(frozen=True)
class LayoutBundle:
    """Layout plus every precomputed constant the forward pass needs."""

    layout: TokenLayout
    raa_bias: Tensor            # (L, L)
    oga_bias: np.ndarray        # (Q, g*g)
    oga_nonskip: np.ndarray     # indices into the Q generated rows
    rope_cos: np.ndarray        # (L, head_dim)
    rope_sin: np.ndarray
    gen_segments: tuple         # (role, index, lo, hi) relative to gen rows

    @property
    def gen_count(self) -> int:
        return self.gen_segments[-1][3]


def make_bundle(layout: TokenLayout, cfg: ModelConfig, dtype=np.float32) -> LayoutBundle:
    if cfg.use_raa:
        raa = build_raa_mask(layout).bias
    else:
        raa = np.zeros((layout.L, layout.L), dtype=np.float32)
    oga = build_oga_attention_mask(
        layout, build_oga_masks(layout.boxes, layout.canvas, layout.p))
    cos, sin = rope_tables(layout.positions, cfg.rope_split)
    gen_start = layout.gen_slice.start
    segments = []
    for seg in layout.segments:
        if seg.role in ("BG", "FG"):
            segments.append((seg.role, seg.index,
                             seg.start - gen_start, seg.stop - gen_start))
    return LayoutBundle(
        layout=layout,
        raa_bias=Tensor(raa.astype(dtype)),
        oga_bias=oga.bias.astype(dtype),
        oga_nonskip=np.nonzero(~oga.skip)[0],
        rope_cos=cos.astype(dtype),
        rope_sin=sin.astype(dtype),
        gen_segments=tuple(segments),
    )


def _timestep_features(t: float, dim: int, dtype) -> np.ndarray:
    """Sinusoidal features of the scalar time, shaped (1, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = 1000.0 * float(t) * freqs
    feats = np.concatenate([np.cos(args), np.sin(args)])
    if feats.size < dim:
        feats = np.concatenate([feats, np.zeros(dim - feats.size)])
    return feats.reshape(1, dim).astype(dtype)


def _split_heads(x: Tensor, heads: int, d: int) -> Tensor:
    L = x.data.shape[0]
    return T.transpose(T.reshape(x, (L, heads, d)), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    heads, L, d = x.data.shape
    return T.reshape(T.transpose(x, (1, 0, 2)), (L, heads * d))


def _rope(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    return T.add(T.mul(x, Tensor(cos)), T.mul(T.rotate_pairs(x), Tensor(sin)))


def _linear(x: Tensor, params: dict, name: str) -> Tensor:
    return T.add(T.matmul(x, params[f"{name}_w"]), params[f"{name}_b"])


def forward(params: dict, cfg: ModelConfig, bundle: LayoutBundle,
            cond_tokens: np.ndarray, z_t: np.ndarray, t: float) -> Tensor:
    """Predict per-token velocity for the generated (BG + FG) rows.

    cond_tokens: (g*g, 4p^2) condition patches; z_t: (Q, 4p^2) noisy
    generation tokens laid out per bundle.gen_segments.
    """
    layout = bundle.layout
    dtype = params["in_proj_w"].dtype
    D, heads, d = cfg.token_dim, cfg.heads, cfg.head_dim
    cond = layout.segment("COND")
    gen_start = layout.gen_slice.start
    if cond_tokens.shape[0] != len(cond) or z_t.shape[0] != bundle.gen_count:
        raise ValueError("token counts do not match layout")

    x_cond = _linear(Tensor(np.asarray(cond_tokens, dtype)), params, "in_proj")
    x_gen = _linear(Tensor(np.asarray(z_t, dtype)), params, "in_proj")
    x = T.concat([params["text_emb"], x_cond, x_gen], axis=0)

    t_feats = Tensor(_timestep_features(t, D, dtype))
    t_vec = _linear(T.silu(_linear(t_feats, params, "t_mlp1")), params, "t_mlp2")
    t_act = T.silu(t_vec)

    scale = Tensor(np.asarray(1.0 / np.sqrt(d), dtype))
    nonskip = bundle.oga_nonskip

    for b in range(cfg.blocks):
        mod = _linear(t_act, params, f"blk{b}_mod")
        shift_a, scale_a, gate_a, shift_m, scale_m, gate_m = (
            T.take(mod, (slice(None), slice(i * D, (i + 1) * D)))
            for i in range(6))

        h = T.layer_norm(x)
        h = T.add(T.mul(h, T.add(scale_a, 1.0)), shift_a)
        qkv = _linear(h, params, f"blk{b}_qkv")
        q = _split_heads(T.take(qkv, (slice(None), slice(0, D))), heads, d)
        k = _split_heads(T.take(qkv, (slice(None), slice(D, 2 * D))), heads, d)
        v = _split_heads(T.take(qkv, (slice(None), slice(2 * D, 3 * D))), heads, d)
        q = _rope(q, bundle.rope_cos, bundle.rope_sin)
        k = _rope(k, bundle.rope_cos, bundle.rope_sin)
        logits = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), scale)
        probs = T.softmax_masked(logits, bundle.raa_bias)
        attn = _linear(_merge_heads(T.matmul(probs, v)), params, f"blk{b}_attn_out")
        x = T.add(x, T.mul(gate_a, attn))

        h = T.layer_norm(x)
        h = T.add(T.mul(h, T.add(scale_m, 1.0)), shift_m)
        mlp = _linear(T.silu(_linear(h, params, f"blk{b}_mlp1")), params, f"blk{b}_mlp2")
        x = T.add(x, T.mul(gate_m, mlp))

        if cfg.use_oga and len(nonskip):
            x_gen_rows = T.take(x, (slice(gen_start, layout.L),))
            x_cond_rows = T.take(x, (cond.sl,))
            q2 = _linear(T.layer_norm(x_gen_rows), params, f"blk{b}_oga_q")
            q2 = T.gather_rows(q2, nonskip)
            kv = _linear(T.layer_norm(x_cond_rows), params, f"blk{b}_oga_kv")
            k2 = T.take(kv, (slice(None), slice(0, D)))
            v2 = T.take(kv, (slice(None), slice(D, 2 * D)))
            qh = _split_heads(q2, heads, d)
            kh = _split_heads(k2, heads, d)
            vh = _split_heads(v2, heads, d)
            qh = _rope(qh, bundle.rope_cos[gen_start:][nonskip],
                       bundle.rope_sin[gen_start:][nonskip])
            kh = _rope(kh, bundle.rope_cos[cond.sl], bundle.rope_sin[cond.sl])
            logits2 = T.mul(T.matmul(qh, T.transpose(kh, (0, 2, 1))), scale)
            probs2 = T.softmax_masked(logits2, Tensor(bundle.oga_bias[nonskip]))
            out2 = _linear(_merge_heads(T.matmul(probs2, vh)), params, f"blk{b}_oga_out")
            delta = T.scatter_rows(out2, gen_start + nonskip, layout.L)
            x = T.add(x, delta)

    y = T.take(x, (slice(gen_start, layout.L),))
    y = T.layer_norm(y, params["head_ln_g"], params["head_ln_b"])
    return _linear(y, params, "head")


# -- rectified-flow algebra ----------------------------------------------------


def interpolate(z_data: np.ndarray, eps: np.ndarray, t: float):
    """Linear interpolant and its constant velocity: noise at t=1."""
    if z_data.shape != eps.shape:
        raise ValueError("z_data and eps shapes differ")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    tt = z_data.dtype.type(t)
    z_t = tt * eps + (1 - tt) * z_data
    v_t = eps - z_data
    return z_t, v_t


def clean_estimate(z_t, v_hat, t: float):
    """One-step reconstruction z_hat = z_t - t * v_hat; works on Tensors
    (gradients flow through v_hat) and plain arrays alike."""
    if isinstance(v_hat, Tensor):
        zt = z_t if isinstance(z_t, Tensor) else Tensor(np.asarray(z_t, v_hat.dtype))
        return T.sub(zt, T.mul(v_hat, float(t)))
    return z_t - z_t.dtype.type(t) * v_hat


# -- losses ----------------------------------------------------------------------


def _per_layer(tokens, segments):
    return [T.take(tokens, (slice(lo, hi),)) if isinstance(tokens, Tensor)
            else tokens[lo:hi] for _, _, lo, hi in segments]


def fm_loss(v_hat_layers, v_true_layers) -> Tensor:
    """Sum over layers of the per-layer token MSE."""
    if len(v_hat_layers) != len(v_true_layers):
        raise ValueError("layer counts differ")
    total = None
    for vh, vt in zip(v_hat_layers, v_true_layers):
        diff = T.sub(vh, Tensor(np.asarray(vt, vh.dtype)) if not isinstance(vt, Tensor) else vt)
        term = T.tmean(T.mul(diff, diff))
        total = term if total is None else T.add(total, term)
    return total


def _token_alpha(tokens: Tensor, p: int) -> Tensor:
    n = tokens.data.shape[0]
    px = T.reshape(tokens, (n, p * p, 4))
    return T.take(px, (Ellipsis, 3))


def _token_rgb_pixels(tokens, p: int):
    if isinstance(tokens, Tensor):
        n = tokens.data.shape[0]
        px = T.take(T.reshape(tokens, (n, p * p, 4)), (Ellipsis, slice(0, 3)))
        return T.reshape(px, (n * p * p, 3))
    n = tokens.shape[0]
    return tokens.reshape(n, p * p, 4)[..., :3].reshape(n * p * p, 3)


def alpha_loss(z_hat_fg_layers, gt_fg_layers, p: int, cfg: LossConfig) -> Tensor:
    """Soft penalty on alpha deviation, summed over foreground layers.

    Alphas map to coverage a' = (alpha+1)/2 (predictions clamped into the
    valid range first), the scaled gap is delta = tau*|a_hat' - a'|, and each
    layer contributes the pixel mean of -(delta^gamma) * log(1 - delta + eps).
    """
    total = Tensor(np.asarray(0.0))
    for z_hat, gt in zip(z_hat_fg_layers, gt_fg_layers):
        a_hat = T.clamp(_token_alpha(z_hat, p), -1.0, 1.0)
        a_hat = T.mul(T.add(a_hat, 1.0), 0.5)
        gt_a = (np.asarray(gt).reshape(gt.shape[0], p * p, 4)[..., 3] + 1.0) * 0.5
        delta = T.mul(T.absolute(T.sub(a_hat, Tensor(gt_a.astype(a_hat.dtype)))),
                      cfg.tau)
        log_term = T.log(T.add(T.neg(delta), 1.0 + cfg.eps_log))
        per_px = T.neg(T.mul(T.power(delta, cfg.gamma), log_term))
        total = T.add(total, T.tmean(per_px))
    return total


def _mean_region_cos(bg_px, fg_px, eps_cos: float):
    """Mean pixel-wise cosine between two (P, 3) RGB fields (Tensor path)."""
    tiny = 1e-24
    num = T.tsum(T.mul(bg_px, fg_px), axis=-1)
    na = T.sqrt(T.add(T.tsum(T.mul(bg_px, bg_px), axis=-1), tiny))
    nb = T.sqrt(T.add(T.tsum(T.mul(fg_px, fg_px), axis=-1), tiny))
    cos = T.div(num, T.add(T.mul(na, nb), eps_cos))
    valid = ((na.data >= eps_cos) & (nb.data >= eps_cos)).astype(cos.dtype)
    return T.tmean(T.mul(cos, Tensor(valid)))


def _mean_region_cos_np(bg_px: np.ndarray, fg_px: np.ndarray, eps_cos: float) -> float:
    num = (bg_px * fg_px).sum(axis=-1)
    na = np.sqrt((bg_px * bg_px).sum(axis=-1))
    nb = np.sqrt((fg_px * fg_px).sum(axis=-1))
    cos = num / (na * nb + eps_cos)
    cos[(na < eps_cos) | (nb < eps_cos)] = 0.0
    return float(cos.mean())


def orth_loss(z_hat_bg, z_hat_fg_layers, gt_bg, gt_fg_layers,
              layout: TokenLayout, cfg: LossConfig) -> Tensor:
    """Per-box gap between predicted and ground-truth background/foreground
    RGB alignment: sum_j |mean-cos(pred bg, pred fg_j) - mean-cos(GT pair)|,
    the cosine taken per pixel over the box region."""
    p = layout.p
    total = Tensor(np.asarray(0.0))
    gt_bg = np.asarray(gt_bg, dtype=np.float64)
    for j, box in enumerate(layout.boxes):
        idx = token_crop_indices(box, layout.canvas, p)
        if idx.size == 0:
            continue
        bg_px = _token_rgb_pixels(T.gather_rows(z_hat_bg, idx), p)
        fg_px = _token_rgb_pixels(z_hat_fg_layers[j], p)
        sim_pred = _mean_region_cos(bg_px, fg_px, cfg.eps_cos)
        sim_gt = _mean_region_cos_np(
            _token_rgb_pixels(gt_bg[idx], p),
            _token_rgb_pixels(np.asarray(gt_fg_layers[j], np.float64), p),
            cfg.eps_cos)
        total = T.add(total, T.absolute(T.sub(sim_pred, float(sim_gt))))
    return total


def total_loss(fm: Tensor, alpha: Tensor, orth: Tensor, cfg: LossConfig) -> Tensor:
    return T.add(fm, T.add(T.mul(alpha, cfg.lambda_alpha),
                           T.mul(orth, cfg.lambda_orth)))


# -- training --------------------------------------------------------------------


def scene_targets(scene, cfg: ModelConfig):
    """Tokenize a scene into (layout, cond tokens, stacked gen tokens)."""
    layout, data = build_sequence(scene, cfg.patch, cfg.k_text)
    gen = np.concatenate(
        [data["BG"]] + [data[f"FG{i}"] for i in range(layout.n_layers)], axis=0)
    return layout, data["COND"], gen.astype(np.float32)


def scene_loss(params, cfg: ModelConfig, loss_cfg: LossConfig,
               bundle: LayoutBundle, cond: np.ndarray, z_data: np.ndarray,
               t: float, eps: np.ndarray):
    """Forward plus the three loss components for one scene at one time."""
    z_t, v_t = interpolate(z_data, eps, t)
    v_hat = forward(params, cfg, bundle, cond, z_t, t)
    segs = bundle.gen_segments
    fm = fm_loss(_per_layer(v_hat, segs), _per_layer(v_t, segs))

    z_hat = clean_estimate(z_t, v_hat, t)
    hat_layers = _per_layer(z_hat, segs)
    gt_layers = _per_layer(z_data, segs)
    alpha = alpha_loss(hat_layers[1:], gt_layers[1:], cfg.patch, loss_cfg)
    orth = orth_loss(hat_layers[0], hat_layers[1:], gt_layers[0], gt_layers[1:],
                     bundle.layout, loss_cfg)
    return fm, alpha, orth


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict) -> AdamState:
    return AdamState(
        step=0,
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        v={k: np.zeros_like(p.data) for k, p in params.items()},
    )


def adam_apply(params: dict, state: AdamState, lr: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * (g * g)
        mhat = state.m[name] / (1 - beta1**t)
        vhat = state.v[name] / (1 - beta2**t)
        p.data = (p.data - lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype)


def train_step(params: dict, records, opt: AdamState, rng,
               cfg: ModelConfig, loss_cfg: LossConfig, lr: float = 3e-4,
               cache: dict | None = None) -> dict:
    """One optimizer update over a batch of scene records."""
    if cache is None:
        cache = {}
    fm_b = alpha_b = orth_b = None
    for rec in records:
        key = id(rec)
        if key not in cache:
            layout, cond, gen = scene_targets(rec.scene, cfg)
            cache[key] = (make_bundle(layout, cfg, params["in_proj_w"].dtype.type),
                          cond, gen)
        bundle, cond, z_data = cache[key]
        t = float(rng.uniform())
        eps = rng.standard_normal(z_data.shape).astype(z_data.dtype)
        fm, alpha, orth = scene_loss(params, cfg, loss_cfg, bundle, cond,
                                     z_data, t, eps)
        fm_b = fm if fm_b is None else T.add(fm_b, fm)
        alpha_b = alpha if alpha_b is None else T.add(alpha_b, alpha)
        orth_b = orth if orth_b is None else T.add(orth_b, orth)

    n = float(len(records))
    fm_b = T.mul(fm_b, 1.0 / n)
    alpha_b = T.mul(alpha_b, 1.0 / n)
    orth_b = T.mul(orth_b, 1.0 / n)
    loss = total_loss(fm_b, alpha_b, orth_b, loss_cfg)
    if not np.isfinite(loss.data):
        raise RuntimeError(
            f"non-finite loss: fm={fm_b.data} alpha={alpha_b.data} "
            f"orth={orth_b.data} at step {opt.step + 1}")
    loss.backward()
    adam_apply(params, opt, lr)
    return {"loss": float(loss.data), "fm": float(fm_b.data),
            "alpha": float(alpha_b.data), "orth": float(orth_b.data),
            "step": opt.step}


# -- sampling --------------------------------------------------------------------


def draw_initial_noise(layout: TokenLayout, rng, shared_noise: bool) -> np.ndarray:
    """Initial z at t=1: one canvas field for BG, then per-FG canvas fields
    cropped to each box.  With shared_noise all FG crops come from a single
    common field, so overlapping boxes start from identical values."""
    g2 = layout.grid * layout.grid
    dim = layout.token_dim
    parts = [rng.standard_normal((g2, dim))]
    common = rng.standard_normal((g2, dim)) if shared_noise else None
    for box in layout.boxes:
        field_i = common if shared_noise else rng.standard_normal((g2, dim))
        parts.append(field_i[token_crop_indices(box, layout.canvas, layout.p)])
    return np.concatenate(parts, axis=0).astype(np.float32)


def sample_euler(params: dict, cfg: ModelConfig, composite: RgbaImage, boxes,
                 steps: int, seed: int, shared_noise: bool = False,
                 bundle: LayoutBundle | None = None,
                 on_step=None):
    """Integrate the learned velocity from t=1 to t=0 and decode layers.

    Returns (background RgbaImage, list of per-box RgbaImage crops in the
    gray-converted domain).  `on_step(k, t_next, z, v)` is called after each
    Euler update with the updated state and the velocity just applied.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if composite.height != cfg.canvas or composite.width != cfg.canvas:
        raise ValueError(
            f"composite is {composite.width}x{composite.height}, "
            f"model expects {cfg.canvas}x{cfg.canvas}")
    boxes = tuple(boxes)
    for b in boxes:
        if not b.is_snapped(cfg.patch):
            raise ValueError(f"box ({b.x},{b.y},{b.w},{b.h}) not grid-snapped")
    if bundle is None:
        layout = build_layout(cfg.canvas, list(boxes), cfg.patch, cfg.k_text)
        bundle = make_bundle(layout, cfg, params["in_proj_w"].dtype.type)
    layout = bundle.layout
    cond = patchify(composite, cfg.patch)

    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    z = draw_initial_noise(layout, rng, shared_noise)
    dt = 1.0 / steps
    with T.no_grad():
        for k in range(steps):
            t = 1.0 - k * dt
            v = forward(params, cfg, bundle, cond, z, t).data
            z = (z - dt * v).astype(z.dtype)
            if on_step is not None:
                on_step(k, 1.0 - (k + 1) * dt, z, v)

    segs = bundle.gen_segments
    z = np.clip(z, -1.0, 1.0)  # decoded tokens are images again
    bg_tokens = z[segs[0][2]:segs[0][3]]
    background = unpatchify(bg_tokens.astype(np.float64), cfg.canvas, cfg.patch)
    layers = []
    for (role, idx, lo, hi), box in zip(segs[1:], layout.boxes):
        layers.append(unpatchify_crop(z[lo:hi].astype(np.float64), box, cfg.patch))
    return background, layers
