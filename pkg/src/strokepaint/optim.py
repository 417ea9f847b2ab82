"""Patch-batched stroke optimization.

Each patch owns a disjoint block of parameters and its own additive loss
term, so patches are optimized independently (and optionally in parallel);
results are bitwise independent of the worker count. Within one patch, every
iteration renders all live strokes, composites them in index order, and
back-propagates through the blend chain in reverse, accumulating exact
gradients for all 13 parameters per stroke. Updates use Adam followed by a
projection into the stroke parameter box. The best iterate seen is returned,
so the final loss never exceeds the initial loss.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericFault
from .losses import (
    LossWeights,
    default_feature_extractor,
    l1_loss,
    l1_loss_grad,
    perceptual_loss,
    perceptual_loss_grad,
)
from .renderer import RenderWindows, render_windows, window_geometry_grads
from .strokes import PATCH_SIDE, StrokeBatch, clamp_params


@dataclass(frozen=True)
class OptimizerSettings:
    lr: float = 0.02
    lr_end: float | None = 0.002  # cosine decay target; None keeps lr constant
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0)


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    settings: OptimizerSettings,
    lr: float | None = None,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; pure, returns new params and state."""
    if params.shape != grads.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericFault("non-finite gradient")
    if lr is None:
        lr = settings.lr
    step = state.step + 1
    m = settings.beta1 * state.m + (1.0 - settings.beta1) * grads
    v = settings.beta2 * state.v + (1.0 - settings.beta2) * grads * grads
    m_hat = m / (1.0 - settings.beta1**step)
    v_hat = v / (1.0 - settings.beta2**step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + settings.eps)
    return new_params, AdamState(m, v, step)


def cosine_lr(iteration: int, total: int, lr: float, lr_end: float | None) -> float:
    if lr_end is None or total <= 1:
        return lr
    frac = iteration / (total - 1)
    return lr_end + 0.5 * (lr - lr_end) * (1.0 + math.cos(math.pi * frac))


def composite_params(
    base: np.ndarray,
    params: np.ndarray,
    mask: np.ndarray | None = None,
    *,
    literal_masking: bool = False,
    side: int = PATCH_SIDE,
    want_pre: bool = False,
):
    """Composite strokes (rows of `params`) onto a copy of `base` in index order.

    This is the one canonical blend path: the optimizer forward, the final
    paste, and record replay all run through it, which is what makes replay
    reproduce the painting bit for bit. Returns (M, rw, pre) where `pre`
    holds each stroke's window content before its own blend (None unless
    requested).
    """
    M = base.copy()
    n = params.shape[0]
    if n == 0:
        return M, None, None
    rw = render_windows(params, side)
    pre = np.empty((n, rw.height, rw.width, 3), dtype=np.float64) if want_pre else None
    for i in range(n):
        win = rw.window(i)
        block = M[win]
        if want_pre:
            pre[i] = block
        a = rw.alpha[i]
        premult = a[:, :, None] * params[i, 10:13]
        if mask is None:
            M[win] = block * (1.0 - a)[:, :, None] + premult
        else:
            mwin = mask[win]
            if literal_masking:
                M[win] = block * (1.0 - a)[:, :, None] + premult * mwin[:, :, None]
            else:
                M[win] = block * (1.0 - a * mwin)[:, :, None] + premult * mwin[:, :, None]
    return M, rw, pre


def _patch_loss(M, ref, w_alpha, w_beta, fx):
    loss = w_alpha * l1_loss(M, ref)
    if w_beta > 0.0:
        loss += w_beta * perceptual_loss(M, ref, fx)
    return loss


def _patch_loss_grad(M, ref, w_alpha, w_beta, fx):
    g = w_alpha * l1_loss_grad(M, ref)
    if w_beta > 0.0:
        g = g + w_beta * perceptual_loss_grad(M, ref, fx)
    return g


def _optimize_one_patch(args) -> np.ndarray:
    (
        params0, active, ref, canvas0, mask,
        w_alpha, w_beta, iterations, settings, side, scale, literal, fx,
    ) = args
    act = np.flatnonzero(active)
    if act.size == 0 or iterations < 1:
        return params0.copy()
    params = params0.copy()
    state = AdamState.zeros(params.shape)
    best_loss = math.inf
    best = params.copy()

    for it in range(iterations):
        M, rw, pre = composite_params(
            canvas0, params[act], mask, literal_masking=literal, side=side, want_pre=True
        )
        loss = _patch_loss(M, ref, w_alpha, w_beta, fx)
        if loss < best_loss:
            best_loss = loss
            best = params.copy()

        G = scale * _patch_loss_grad(M, ref, w_alpha, w_beta, fx)
        upstream = np.zeros((act.size, rw.height, rw.width), dtype=np.float64)
        grads = np.zeros_like(params)
        for i in range(act.size - 1, -1, -1):
            win = rw.window(i)
            g = G[win]
            a = rw.alpha[i]
            col = params[act[i], 10:13]
            if mask is None:
                grads[act[i], 10:13] = (g * a[:, :, None]).sum(axis=(0, 1))
                upstream[i] = (g * (col[None, None, :] - pre[i])).sum(axis=-1)
                G[win] = g * (1.0 - a)[:, :, None]
            else:
                mwin = mask[win]
                am = a * mwin
                grads[act[i], 10:13] = (g * am[:, :, None]).sum(axis=(0, 1))
                if literal:
                    upstream[i] = (g * (col[None, None, :] * mwin[:, :, None] - pre[i])).sum(axis=-1)
                    G[win] = g * (1.0 - a)[:, :, None]
                else:
                    upstream[i] = (g * (col[None, None, :] - pre[i])).sum(axis=-1) * mwin
                    G[win] = g * (1.0 - am)[:, :, None]
        grads[act, :10] = window_geometry_grads(rw, upstream)

        if not np.all(np.isfinite(grads)):
            raise NumericFault(f"non-finite gradient at iteration {it}")
        lr = cosine_lr(it, iterations, settings.lr, settings.lr_end)
        params, state = adam_step(params, grads, state, settings, lr=lr)
        params = clamp_params(params)

    M, _, _ = composite_params(canvas0, params[act], mask, literal_masking=literal, side=side)
    if _patch_loss(M, ref, w_alpha, w_beta, fx) < best_loss:
        best = params
    return best


def optimize_patch_batch(
    batch: StrokeBatch,
    ref_patches: np.ndarray,
    canvas_patches: np.ndarray,
    mask_patches: np.ndarray | None = None,
    weights: LossWeights = LossWeights(),
    iterations: int = 100,
    settings: OptimizerSettings = OptimizerSettings(),
    *,
    side: int = PATCH_SIDE,
    workers: int = 1,
    feature_extractor=None,
    literal_masking: bool = False,
    total_patches: int | None = None,
) -> StrokeBatch:
    """Jointly optimize all strokes of a batch against their reference patches.

    canvas_patches hold the incoming canvas content the strokes composite
    onto. The per-patch loss is alpha * L1 + beta * perceptual, averaged over
    `total_patches` (defaults to the batch size). Inactive strokes are left
    untouched.
    """
    weights.validate()
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    n = batch.n_patches
    for name, arr, ndim in (
        ("ref_patches", ref_patches, 4),
        ("canvas_patches", canvas_patches, 4),
    ):
        if arr.shape[0] != n or arr.ndim != ndim:
            raise ValueError(f"{name} must be ({n}, side, side, 3), got {arr.shape}")
    if mask_patches is not None and mask_patches.shape[0] != n:
        raise ValueError(f"mask_patches must have {n} entries, got {mask_patches.shape}")
    fx = feature_extractor
    if weights.beta > 0.0:
        if fx is None:
            fx = default_feature_extractor()
        if not hasattr(fx, "input_grad"):
            raise ValueError("optimizing with beta > 0 requires a feature extractor with input_grad")
    scale = 1.0 / (total_patches if total_patches else n)

    tasks = [
        (
            batch.params[i].copy(), batch.active[i].copy(),
            np.asarray(ref_patches[i], dtype=np.float64),
            np.asarray(canvas_patches[i], dtype=np.float64),
            None if mask_patches is None else np.asarray(mask_patches[i], dtype=np.float64),
            weights.alpha, weights.beta, iterations, settings, side, scale,
            literal_masking, fx,
        )
        for i in range(n)
    ]
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            results = list(pool.map(_optimize_one_patch, tasks, chunksize=1))
    else:
        results = [_optimize_one_patch(t) for t in tasks]

    new_params = np.stack(results, axis=0)
    return StrokeBatch(
        new_params, batch.patch_origins.copy(),
        layer_id=batch.layer_id, pass_index=batch.pass_index, label=batch.label,
        active=batch.active.copy(),
    )
