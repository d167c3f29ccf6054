"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def finite_difference(f: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar ``f()`` w.r.t. ``param``.

    Perturbs ``param.data`` in place and restores it; ``f`` must rebuild the
    graph from the current parameter values on every call.
    """
    flat = param.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f().item()
        flat[i] = orig - h
        lo = f().item()
        flat[i] = orig
        grad[i] = (hi - lo) / (2.0 * h)
    return grad.reshape(param.data.shape)


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced to the maximum."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(f: Callable[[], Tensor], params: Mapping[str, Tensor],
                    h: float = 1e-5, tol: float = 1e-4) -> dict[str, float]:
    """Compare backward() gradients of ``f()`` against central differences.

    Returns the max relative error per parameter; raises AssertionError on
    the first parameter exceeding ``tol``.
    """
    root = f()
    root.backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}
    errors = {}
    for name, p in params.items():
        numeric = finite_difference(f, p, h=h)
        err = max_rel_error(analytic[name], numeric)
        errors[name] = err
        if err > tol:
            raise AssertionError(
                f"gradient check failed for {name!r}: rel err {err:.3e} > {tol:.1e}")
    return errors


def _op_cases(rng) -> dict[str, tuple]:
    """One scalar-valued probe per differentiable op.  Inputs keep a margin
    from kinks (|x| at 0, clamp edges) so central differences stay valid."""
    from . import tensor as T

    def t(shape, lo=-1.0, hi=1.0, margin=0.0):
        vals = rng.uniform(lo, hi, shape)
        if margin:
            vals = np.where(np.abs(vals) < margin,
                            vals + np.sign(vals + 0.5) * margin, vals)
        return Tensor(vals, requires_grad=True)

    a = t((3, 4))
    b = t((3, 4))
    pos = t((3, 4), 0.3, 2.0)
    off0 = t((3, 4), margin=0.2)
    mat_a = t((3, 5))
    mat_b = t((5, 2))
    bat_a = t((2, 3, 4))
    bat_b = t((2, 4, 3))
    even = t((2, 4))
    logits = t((2, 4, 4))
    bias = np.where(rng.uniform(size=(4, 4)) < 0.3, T.BLOCKED, 0.0)
    bias[:, 0] = 0.0  # keep every row attendable
    gath = t((6, 3))
    idx = np.array([0, 2, 2, 5])
    const_t = Tensor(rng.standard_normal((2, 3, 4)))
    const_sm = Tensor(rng.standard_normal((4, 4)))
    const_ln = Tensor(rng.standard_normal((3, 4)))

    return {
        "add": ({"a": a, "b": b}, lambda: T.tsum(T.add(a, b))),
        "sub": ({"a": a, "b": b}, lambda: T.tsum(T.sub(a, b))),
        "mul": ({"a": a, "b": b}, lambda: T.tsum(T.mul(a, b))),
        "div": ({"a": a, "b": pos}, lambda: T.tsum(T.div(a, pos))),
        "neg": ({"a": a}, lambda: T.tsum(T.mul(T.neg(a), T.neg(a)))),
        "power": ({"a": pos}, lambda: T.tsum(T.power(pos, 1.5))),
        "absolute": ({"a": off0}, lambda: T.tsum(T.absolute(off0))),
        "log": ({"a": pos}, lambda: T.tsum(T.log(pos))),
        "sqrt": ({"a": pos}, lambda: T.tsum(T.sqrt(pos))),
        "silu": ({"a": a}, lambda: T.tsum(T.silu(a))),
        "clamp": ({"a": a}, lambda: T.tsum(T.clamp(a, -2.0, 2.0))),
        "tsum_axis": ({"a": a}, lambda: T.tsum(T.mul(T.tsum(a, axis=0), T.tsum(a, axis=0)))),
        "tmean": ({"a": a}, lambda: T.tmean(T.mul(a, a))),
        "reshape": ({"a": a}, lambda: T.tsum(T.mul(T.reshape(a, (4, 3)), 2.0))),
        "transpose": ({"a": bat_a}, lambda: T.tsum(T.mul(T.transpose(bat_a, (1, 0, 2)), T.transpose(const_t, (1, 0, 2))))),
        "concat": ({"a": a, "b": b}, lambda: T.tsum(T.mul(T.concat([a, b], axis=0), 0.5))),
        "take": ({"a": a}, lambda: T.tsum(T.take(a, (slice(1, 3), slice(0, 2))))),
        "gather_rows": ({"a": gath}, lambda: T.tsum(T.mul(T.gather_rows(gath, idx), T.gather_rows(gath, idx)))),
        "scatter_rows": ({"a": gath}, lambda: T.tsum(T.mul(T.scatter_rows(gath, np.arange(2, 8), 10), 1.5))),
        "rotate_pairs": ({"a": even}, lambda: T.tsum(T.mul(T.rotate_pairs(even), even))),
        "matmul2d": ({"a": mat_a, "b": mat_b}, lambda: T.tsum(T.matmul(mat_a, mat_b))),
        "matmul3d": ({"a": bat_a, "b": bat_b}, lambda: T.tsum(T.matmul(bat_a, bat_b))),
        "softmax_masked": ({"a": logits}, lambda: T.tsum(T.mul(T.softmax_masked(logits, Tensor(bias)), const_sm))),
        "layer_norm": ({"a": a}, lambda: T.tsum(T.mul(T.layer_norm(a), const_ln))),
    }


def full_suite(seed: int = 0) -> dict:
    """The complete finite-difference pass: every differentiable op at
    tolerance 1e-4, then the composed training loss of a sub-2k-parameter
    float64 model at 1e-3.  Raises AssertionError on the first failure."""
    from . import model as M
    from .scenes import GeneratorConfig, generate_scene

    rng = np.random.default_rng(seed)
    op_errors = {}
    for name, (params, fn) in _op_cases(rng).items():
        errs = check_gradients(fn, params, tol=1e-4)
        op_errors[name] = max(errs.values())

    cfg = M.ModelConfig(token_dim=6, heads=1, rope_split=(2, 2, 2), blocks=1,
                        mlp_ratio=2, patch=2, k_text=2, canvas=8)
    params = M.init_params(cfg, rng, dtype=np.float64)
    for name in params:
        if "ln" not in name:
            params[name].data = rng.standard_normal(params[name].data.shape) * 0.05
    n_params = M.param_count(params)
    assert n_params <= 2000, f"suite model has {n_params} params"

    rec = generate_scene(GeneratorConfig(canvas=8, layers_min=2, layers_max=2,
                                         patch=2, seed=seed), seed)
    layout, cond, gen = M.scene_targets(rec.scene, cfg)
    bundle = M.make_bundle(layout, cfg, np.float64)
    z_data = gen.astype(np.float64)
    eps = rng.standard_normal(z_data.shape)
    loss_cfg = M.LossConfig()

    def composed():
        fm, al, orth = M.scene_loss(params, cfg, loss_cfg, bundle, cond,
                                    z_data, 0.37, eps)
        return M.total_loss(fm, al, orth, loss_cfg)

    composed_errors = check_gradients(composed, params, tol=1e-3)
    return {
        "ops": op_errors,
        "composed": composed_errors,
        "param_count": n_params,
        "max_op_error": max(op_errors.values()),
        "max_composed_error": max(composed_errors.values()),
    }
