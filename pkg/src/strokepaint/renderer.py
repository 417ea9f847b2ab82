"""Analytically differentiable stroke rasterizer.

Coverage model
--------------
The centerline Q(t) = (1-t)^2 P0 + 2t(1-t) P1 + t^2 P2 is sampled at
CURVE_SAMPLES fixed parameter values t_u = u/(S-1). For a pixel center p the
nearest sample u* = argmin_u ||p - Q(t_u)|| selects the local curve parameter;
with d = ||p - Q(t_u*)|| in pixels, r(t) = (1-t) r0 + t r2 and
o(t) = (1-t) o0 + t o2, coverage is

    alpha(p) = o(t_u*) * sigmoid((r(t_u*) * side - d) / AA_SIGMA)

and the premultiplied color map is alpha * (col_r, col_g, col_b).

Gradients
---------
Exact derivatives of the model above under the frozen-argmin convention: u*
is treated as locally constant and d, r, o, and the sigmoid are differentiated
analytically. At sample-switch boundaries this is a subgradient; finite
difference checks exclude pixels whose argmin flips under the probe.

Evaluation is restricted to the stroke's bounding box inflated by
max(r0, r2) * side + BBOX_MARGIN * AA_SIGMA; outside, alpha is exactly 0
(sigmoid(-BBOX_MARGIN) < 1e-3, below the alpha floor anything downstream
cares about). Pass full_footprint=True to evaluate every pixel of the patch,
e.g. for gradient checks where the cutoff would add spurious discontinuities.

All arithmetic is elementwise on float64 and carries no cross-stroke
reductions, so rendering B strokes batched is bitwise identical to rendering
them one at a time, and results do not depend on worker or chunk counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .strokes import N_PARAMS, PATCH_SIDE, Stroke

CURVE_SAMPLES = 24
AA_SIGMA = 1.0      # antialias falloff width, px
BBOX_MARGIN = 8.0   # extra sigmas around the radius-inflated bbox
MIN_PATCH_SIDE = 8
_CHUNK_BYTES = 48 << 20

_T = np.linspace(0.0, 1.0, CURVE_SAMPLES)
_BW0 = (1.0 - _T) ** 2
_BW1 = 2.0 * _T * (1.0 - _T)
_BW2 = _T**2


@dataclass
class PatchBuffer:
    """Rendered stroke (or evolving canvas patch): premultiplied rgb + alpha."""

    rgb: np.ndarray    # (side, side, 3)
    alpha: np.ndarray  # (side, side)


@dataclass
class StrokeGradient:
    """Per-parameter gradient rasters of one rendered stroke.

    d_alpha[k] is d(alpha)/d(param_k); d_rgb[k, c] is the derivative of the
    premultiplied color channel c. Parameter order matches PARAM_NAMES.
    """

    d_alpha: np.ndarray  # (13, side, side)
    d_rgb: np.ndarray    # (13, 3, side, side)


@dataclass
class RenderWindows:
    """Batched per-stroke render state on per-stroke windows.

    Windows share a common (height, width); each stroke's window is anchored
    at (row0[b], col0[b]) inside the patch and fully covers that stroke's own
    tight bounding box. sig (and hence alpha) is zeroed outside the tight box,
    which keeps batched output identical to single-stroke output.
    """

    side: int
    params: np.ndarray   # (B, 13)
    row0: np.ndarray     # (B,)
    col0: np.ndarray     # (B,)
    height: int
    width: int
    alpha: np.ndarray    # (B, h, w)
    sig: np.ndarray      # sigmoid factor, zeroed outside the tight box
    o_val: np.ndarray    # o(t*) interpolated opacity
    t_sel: np.ndarray    # t at the selected sample
    nx: np.ndarray       # (p - q)_x / d, 0 where d == 0
    ny: np.ndarray

    @property
    def count(self) -> int:
        return self.params.shape[0]

    def window(self, b: int) -> tuple[slice, slice]:
        return (
            slice(int(self.row0[b]), int(self.row0[b]) + self.height),
            slice(int(self.col0[b]), int(self.col0[b]) + self.width),
        )

    def alpha_full(self, b: int) -> np.ndarray:
        out = np.zeros((self.side, self.side), dtype=np.float64)
        out[self.window(b)] = self.alpha[b]
        return out


def _curve_points(params: np.ndarray, side: int) -> tuple[np.ndarray, np.ndarray]:
    """Sampled centerline in centered pixel units, shape (B, S)."""
    cx = params[:, 0::2][:, :3] - 0.5  # x0, x1, x2
    cy = params[:, 1::2][:, :3] - 0.5
    qx = (cx[:, 0:1] * _BW0 + cx[:, 1:2] * _BW1 + cx[:, 2:3] * _BW2) * side
    qy = (cy[:, 0:1] * _BW0 + cy[:, 1:2] * _BW1 + cy[:, 2:3] * _BW2) * side
    return qx, qy


def _tight_bounds(params, qx, qy, side):
    """Per-stroke inclusive-exclusive pixel bounds of the rendered footprint."""
    pad = np.maximum(params[:, 6], params[:, 7]) * side + BBOX_MARGIN * AA_SIGMA
    half = side * 0.5
    col_lo = np.clip(np.floor(qx.min(axis=1) + half - pad).astype(np.int64) - 1, 0, side)
    col_hi = np.clip(np.ceil(qx.max(axis=1) + half + pad).astype(np.int64) + 1, 0, side)
    row_lo = np.clip(np.floor(qy.min(axis=1) + half - pad).astype(np.int64) - 1, 0, side)
    row_hi = np.clip(np.ceil(qy.max(axis=1) + half + pad).astype(np.int64) + 1, 0, side)
    return row_lo, row_hi, col_lo, col_hi


def render_windows(params: np.ndarray, side: int = PATCH_SIDE, full_footprint: bool = False) -> RenderWindows:
    """Rasterize a batch of strokes, shape (B, 13), onto per-stroke windows."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim == 1:
        params = params[None, :]
    if params.ndim != 2 or params.shape[1] != N_PARAMS:
        raise ValueError(f"params must be (B, {N_PARAMS}), got {params.shape}")
    if side < MIN_PATCH_SIDE:
        raise ValueError(f"patch side must be >= {MIN_PATCH_SIDE}, got {side}")
    n = params.shape[0]
    qx, qy = _curve_points(params, side)

    if full_footprint:
        row_lo = np.zeros(n, dtype=np.int64)
        col_lo = np.zeros(n, dtype=np.int64)
        row_hi = np.full(n, side, dtype=np.int64)
        col_hi = np.full(n, side, dtype=np.int64)
        height = width = side
        row0 = row_lo
        col0 = col_lo
    else:
        row_lo, row_hi, col_lo, col_hi = _tight_bounds(params, qx, qy, side)
        height = int((row_hi - row_lo).max(initial=1))
        width = int((col_hi - col_lo).max(initial=1))
        row0 = np.clip(row_lo, 0, side - height)
        col0 = np.clip(col_lo, 0, side - width)

    half = side * 0.5
    alpha = np.empty((n, height, width), dtype=np.float64)
    sig = np.empty_like(alpha)
    o_val = np.empty_like(alpha)
    t_sel = np.empty_like(alpha)
    nx = np.empty_like(alpha)
    ny = np.empty_like(alpha)

    # Nearest-sample selection runs in float32 (running minimum, contiguous);
    # the selected distance and everything downstream stay float64. The
    # selection is part of the model definition and is identical across
    # batched/single calls, chunk splits, and worker counts.
    per_stroke = height * width * 8
    chunk = max(1, _CHUNK_BYTES // max(per_stroke, 1))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        sl = slice(lo, hi)
        b = hi - lo
        px = (col0[sl, None] + np.arange(width)[None, :]) + 0.5 - half   # (b, w)
        py = (row0[sl, None] + np.arange(height)[None, :]) + 0.5 - half  # (b, h)
        px32 = px.astype(np.float32)
        py32 = py.astype(np.float32)
        qx32 = qx[sl].astype(np.float32)
        qy32 = qy[sl].astype(np.float32)
        best_d2 = np.empty((b, height, width), dtype=np.float32)
        u = np.zeros((b, height, width), dtype=np.int8)
        for k in range(CURVE_SAMPLES):
            sx = px32 - qx32[:, k : k + 1]
            sy = py32 - qy32[:, k : k + 1]
            d2k = (sy * sy)[:, :, None] + (sx * sx)[:, None, :]
            if k == 0:
                best_d2[...] = d2k
            else:
                closer = d2k < best_d2
                np.copyto(best_d2, d2k, where=closer)
                np.copyto(u, np.int8(k), where=closer)
        bi = np.arange(b)[:, None, None]
        dx_sel = px[:, None, :] - qx[sl][bi, u]
        dy_sel = py[:, :, None] - qy[sl][bi, u]
        d = np.sqrt(dx_sel * dx_sel + dy_sel * dy_sel)
        t = _T[u]
        r_px = ((1.0 - t) * params[sl, 6, None, None] + t * params[sl, 7, None, None]) * side
        o = (1.0 - t) * params[sl, 8, None, None] + t * params[sl, 9, None, None]
        s = expit((r_px - d) / AA_SIGMA)
        if not full_footprint:
            rows = row0[sl, None, None] + np.arange(height)[None, :, None]
            cols = col0[sl, None, None] + np.arange(width)[None, None, :]
            inside = (
                (rows >= row_lo[sl, None, None]) & (rows < row_hi[sl, None, None])
                & (cols >= col_lo[sl, None, None]) & (cols < col_hi[sl, None, None])
            )
            s = np.where(inside, s, 0.0)
        safe_d = np.where(d > 0.0, d, 1.0)
        nx[sl] = np.where(d > 0.0, dx_sel / safe_d, 0.0)
        ny[sl] = np.where(d > 0.0, dy_sel / safe_d, 0.0)
        sig[sl] = s
        o_val[sl] = o
        t_sel[sl] = t
        alpha[sl] = o * s

    return RenderWindows(
        side=side, params=params, row0=row0, col0=col0,
        height=height, width=width,
        alpha=alpha, sig=sig, o_val=o_val, t_sel=t_sel, nx=nx, ny=ny,
    )


def window_geometry_grads(rw: RenderWindows, upstream: np.ndarray) -> np.ndarray:
    """Reduce an upstream dL/d(alpha) window field to per-stroke gradients.

    Returns (B, 10): derivatives with respect to the six control coordinates,
    two radii and two opacities. Color gradients do not pass through alpha and
    are handled by the caller.
    """
    side = rw.side
    s1 = rw.sig * (1.0 - rw.sig)
    common = rw.o_val * s1 * (1.0 / AA_SIGMA)
    t = rw.t_sel
    one_t = 1.0 - t
    w0 = one_t * one_t
    w1 = 2.0 * t * one_t
    w2 = t * t
    gqx = upstream * common * rw.nx
    gqy = upstream * common * rw.ny
    out = np.empty((rw.count, 10), dtype=np.float64)
    out[:, 0] = side * (gqx * w0).sum(axis=(1, 2))
    out[:, 1] = side * (gqy * w0).sum(axis=(1, 2))
    out[:, 2] = side * (gqx * w1).sum(axis=(1, 2))
    out[:, 3] = side * (gqy * w1).sum(axis=(1, 2))
    out[:, 4] = side * (gqx * w2).sum(axis=(1, 2))
    out[:, 5] = side * (gqy * w2).sum(axis=(1, 2))
    ec = upstream * common
    out[:, 6] = side * (ec * one_t).sum(axis=(1, 2))
    out[:, 7] = side * (ec * t).sum(axis=(1, 2))
    es = upstream * rw.sig
    out[:, 8] = (es * one_t).sum(axis=(1, 2))
    out[:, 9] = (es * t).sum(axis=(1, 2))
    return out


def render_stroke(stroke, side: int = PATCH_SIDE, *, full_footprint: bool = False) -> PatchBuffer:
    """Rasterize one stroke to a full-patch alpha map and premultiplied color map."""
    params = stroke.as_array() if isinstance(stroke, Stroke) else np.asarray(stroke, dtype=np.float64)
    rw = render_windows(params, side, full_footprint=full_footprint)
    alpha = rw.alpha_full(0)
    rgb = alpha[:, :, None] * params.reshape(-1)[10:13]
    return PatchBuffer(rgb=rgb, alpha=alpha)


def render_stroke_with_grad(
    stroke, side: int = PATCH_SIDE, *, full_footprint: bool = False
) -> tuple[PatchBuffer, StrokeGradient]:
    """Rasterize one stroke together with per-pixel gradients for all 13 parameters."""
    params = stroke.as_array() if isinstance(stroke, Stroke) else np.asarray(stroke, dtype=np.float64)
    params = params.reshape(-1)
    rw = render_windows(params, side, full_footprint=full_footprint)
    win = rw.window(0)
    alpha_w = rw.alpha[0]
    col = params[10:13]

    s1 = rw.sig[0] * (1.0 - rw.sig[0])
    common = rw.o_val[0] * s1 * (1.0 / AA_SIGMA)
    t = rw.t_sel[0]
    one_t = 1.0 - t
    w0 = one_t * one_t
    w1 = 2.0 * t * one_t
    w2 = t * t
    gqx = common * rw.nx[0] * side
    gqy = common * rw.ny[0] * side

    d_alpha = np.zeros((N_PARAMS, side, side), dtype=np.float64)
    d_alpha[0][win] = gqx * w0
    d_alpha[1][win] = gqy * w0
    d_alpha[2][win] = gqx * w1
    d_alpha[3][win] = gqy * w1
    d_alpha[4][win] = gqx * w2
    d_alpha[5][win] = gqy * w2
    d_alpha[6][win] = common * one_t * side
    d_alpha[7][win] = common * t * side
    d_alpha[8][win] = rw.sig[0] * one_t
    d_alpha[9][win] = rw.sig[0] * t

    alpha = rw.alpha_full(0)
    d_rgb = np.zeros((N_PARAMS, 3, side, side), dtype=np.float64)
    for k in range(10):
        for c in range(3):
            d_rgb[k, c] = d_alpha[k] * col[c]
    for c in range(3):
        d_rgb[10 + c, c] = alpha

    buf = PatchBuffer(rgb=alpha[:, :, None] * col, alpha=alpha)
    return buf, StrokeGradient(d_alpha=d_alpha, d_rgb=d_rgb)
