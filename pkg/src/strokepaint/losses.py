"""Reconstruction objectives.

The pixel term is mean absolute difference; the perceptual term is one minus
the mean per-position cosine similarity between two feature stacks. Mean (not
sum) reductions keep the loss weights scale-free across patch counts and
feature sizes.

The built-in feature extractor is a fixed linear filter pyramid: at scales
{1, 1/2, 1/4, 1/8} it emits five channels per level (luminance, horizontal
and vertical gradients of luminance, and two diagonally oriented
difference-of-Gaussian responses). Being linear, it has an exact adjoint,
so perceptual gradients with respect to the input raster are analytic. Any
object with the same call signature can stand in; optimization with a
perceptual weight additionally requires an `input_grad` method.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .compositing import Canvas
from .strokes import PATCH_SIDE

FeatureStack = list  # list of (channels, H_l, W_l) arrays

_LUM_WEIGHTS = np.array([0.299, 0.587, 0.114])

_KX = np.array([[-0.5, 0.0, 0.5]])
_KY = _KX.T


def _oriented_dog(ux: float, uy: float, size: int = 5, sigma: float = 1.0, delta: float = 1.0) -> np.ndarray:
    r = size // 2
    y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    pos = np.exp(-((x - delta * ux) ** 2 + (y - delta * uy) ** 2) / (2.0 * sigma**2))
    neg = np.exp(-((x + delta * ux) ** 2 + (y + delta * uy) ** 2) / (2.0 * sigma**2))
    k = pos - neg
    k = 0.5 * (k - k[::-1, ::-1])  # exactly antisymmetric
    return k / (np.abs(k).sum() / 2.0)


_K45 = _oriented_dog(np.sqrt(0.5), -np.sqrt(0.5))
_K135 = _oriented_dog(np.sqrt(0.5), np.sqrt(0.5))


def _conv2_edge(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """2-d correlation with edge-replicated borders (same size)."""
    kh, kw = k.shape
    rh, rw = kh // 2, kw // 2
    h, w = x.shape
    xp = np.pad(x, ((rh, rh), (rw, rw)), mode="edge")
    out = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            if k[i, j] != 0.0:
                out += k[i, j] * xp[i : i + h, j : j + w]
    return out


def _conv2_edge_adjoint(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Exact adjoint of _conv2_edge as a linear map (pad foldback included)."""
    kh, kw = k.shape
    rh, rw = kh // 2, kw // 2
    h, w = g.shape
    gp = np.zeros((h + 2 * rh, w + 2 * rw), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            if k[i, j] != 0.0:
                gp[i : i + h, j : j + w] += k[i, j] * g
    mid = gp[:, rw : rw + w].copy()
    if rw:
        mid[:, 0] += gp[:, :rw].sum(axis=1)
        mid[:, -1] += gp[:, rw + w :].sum(axis=1)
    out = mid[rh : rh + h].copy()
    if rh:
        out[0] += mid[:rh].sum(axis=0)
        out[-1] += mid[rh + h :].sum(axis=0)
    return out


def _pool2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling; trailing odd row/column is dropped."""
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    return x[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _pool2_adjoint(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=np.float64)
    h2, w2 = g.shape
    out[: 2 * h2, : 2 * w2] = np.repeat(np.repeat(g, 2, axis=0), 2, axis=1) * 0.25
    return out


@dataclass
class PyramidFeatureExtractor:
    """Fixed-filter 4-level feature pyramid over luminance."""

    levels: int = 4
    eps: float = 1e-8
    kernels: tuple = field(default=( _KX, _KY, _K45, _K135), repr=False)

    def __call__(self, raster: np.ndarray) -> FeatureStack:
        raster = np.asarray(raster, dtype=np.float64)
        if raster.ndim != 3 or raster.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) raster, got {raster.shape}")
        lum = raster @ _LUM_WEIGHTS
        stack = []
        for level in range(self.levels):
            if level > 0:
                if min(lum.shape) < 2:
                    break
                lum = _pool2(lum)
            maps = [lum] + [_conv2_edge(lum, k) for k in self.kernels]
            stack.append(np.stack(maps, axis=0))
        return stack

    def input_grad(self, raster: np.ndarray, grad_stack: FeatureStack) -> np.ndarray:
        """Adjoint of __call__: map feature-space gradients back to the raster."""
        raster = np.asarray(raster, dtype=np.float64)
        lum_shapes = []
        lum = raster @ _LUM_WEIGHTS
        for level in range(len(grad_stack)):
            if level > 0:
                lum = _pool2(lum)
            lum_shapes.append(lum.shape)
        g_lum = np.zeros(lum_shapes[-1], dtype=np.float64)
        for level in range(len(grad_stack) - 1, -1, -1):
            g = grad_stack[level]
            g_lum += g[0]
            for ch, k in enumerate(self.kernels, start=1):
                g_lum += _conv2_edge_adjoint(g[ch], k)
            if level > 0:
                g_lum = _pool2_adjoint(g_lum, lum_shapes[level - 1])
        return g_lum[:, :, None] * _LUM_WEIGHTS


def default_feature_extractor() -> PyramidFeatureExtractor:
    """The deterministic built-in extractor used when none is supplied."""
    return PyramidFeatureExtractor()


@dataclass(frozen=True)
class LossWeights:
    """Weights of the pixel and perceptual terms."""

    alpha: float = 1.0
    beta: float = 0.0

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError(f"need alpha, beta >= 0 and alpha + beta > 0, got {self}")


def l1_loss(canvas: np.ndarray, reference: np.ndarray) -> float:
    """Mean absolute difference over all pixels and channels."""
    if canvas.shape != reference.shape:
        raise ValueError(f"shape mismatch: {canvas.shape} vs {reference.shape}")
    return float(np.mean(np.abs(canvas - reference)))


def l1_loss_grad(canvas: np.ndarray, reference: np.ndarray) -> np.ndarray:
    if canvas.shape != reference.shape:
        raise ValueError(f"shape mismatch: {canvas.shape} vs {reference.shape}")
    return np.sign(canvas - reference) / canvas.size


def _cosine_maps(stack_a: FeatureStack, stack_b: FeatureStack, eps: float):
    if len(stack_a) != len(stack_b):
        raise ValueError("feature stacks have different depths")
    for fa, fb in zip(stack_a, stack_b):
        if fa.shape != fb.shape:
            raise ValueError(f"feature map shape mismatch: {fa.shape} vs {fb.shape}")
        na = np.sqrt((fa * fa).sum(axis=0)) + eps
        nb = np.sqrt((fb * fb).sum(axis=0)) + eps
        yield (fa * fb).sum(axis=0) / (na * nb)


def perceptual_loss(canvas: np.ndarray, reference: np.ndarray, fx, *, mode: str = "one-minus-cos") -> float:
    """Cosine dissimilarity between feature stacks of the two rasters.

    "one-minus-cos" returns 1 - mean cosine (range [0, 2], 0 iff positively
    parallel everywhere); "negative-cos" returns -mean cosine. Both have
    identical gradients.
    """
    if canvas.shape != reference.shape:
        raise ValueError(f"shape mismatch: {canvas.shape} vs {reference.shape}")
    eps = getattr(fx, "eps", 1e-8)
    total = 0.0
    count = 0
    for cos in _cosine_maps(fx(canvas), fx(reference), eps):
        total += cos.sum()
        count += cos.size
    mean_cos = total / count
    if mode == "one-minus-cos":
        return float(1.0 - mean_cos)
    if mode == "negative-cos":
        return float(-mean_cos)
    raise ValueError(f"unknown perceptual mode {mode!r}")


def perceptual_loss_grad(canvas: np.ndarray, reference: np.ndarray, fx) -> np.ndarray:
    """d(perceptual_loss)/d(canvas); requires fx.input_grad."""
    eps = getattr(fx, "eps", 1e-8)
    stack_c = fx(canvas)
    stack_r = fx(reference)
    count = sum(f.shape[1] * f.shape[2] for f in stack_c)
    grad_stack = []
    for w, v in zip(stack_c, stack_r):
        norm_w = np.sqrt((w * w).sum(axis=0))
        nw = norm_w + eps
        nv = np.sqrt((v * v).sum(axis=0)) + eps
        dot = (w * v).sum(axis=0)
        w_hat = np.where(norm_w > 0.0, w / np.where(norm_w > 0.0, norm_w, 1.0), 0.0)
        dcos_dw = v / (nv * nw) - (dot / (nv * nw * nw)) * w_hat
        grad_stack.append(-dcos_dw / count)
    return fx.input_grad(canvas, grad_stack)


def combined_loss(canvas, reference, weights: LossWeights, fx=None) -> float:
    """Mean over patches of alpha * pixel loss + beta * perceptual loss.

    Accepts a single (H, W, 3) pair or stacked (N, H, W, 3) patch sets. With
    beta = 0 the extractor is never invoked.
    """
    weights.validate()
    canvas = np.asarray(canvas, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if canvas.shape != reference.shape:
        raise ValueError(f"shape mismatch: {canvas.shape} vs {reference.shape}")
    if canvas.ndim == 3:
        canvas = canvas[None]
        reference = reference[None]
    if weights.beta > 0 and fx is None:
        fx = default_feature_extractor()
    total = 0.0
    for c, r in zip(canvas, reference):
        term = weights.alpha * l1_loss(c, r)
        if weights.beta > 0:
            term += weights.beta * perceptual_loss(c, r, fx)
        total += term
    return total / canvas.shape[0]


def patch_error_map(canvas: Canvas, reference: Canvas) -> np.ndarray:
    """Per-grid-patch mean L1 restricted to unpadded pixels.

    Patches that lie entirely inside the padding report 0 error.
    """
    if canvas.padded_shape != reference.padded_shape or (
        canvas.height0 != reference.height0 or canvas.width0 != reference.width0
    ):
        raise ValueError("canvas geometries do not match")
    gh, gw = canvas.grid_shape
    s = PATCH_SIDE
    diff = np.abs(canvas.rgb - reference.rgb).sum(axis=2)
    valid = np.zeros(canvas.padded_shape, dtype=np.float64)
    valid[: canvas.height0, : canvas.width0] = 1.0
    sums = (diff * valid).reshape(gh, s, gw, s).sum(axis=(1, 3))
    counts = valid.reshape(gh, s, gw, s).sum(axis=(1, 3)) * 3.0
    return np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)


def whole_image_l1(canvas: Canvas, reference: Canvas) -> float:
    """Mean L1 over the unpadded region."""
    return l1_loss(canvas.unpadded(), reference.unpadded())


FEATURE_FILE_MAGIC = b"FEATSTACK1\n"


def write_feature_file(path, stack: FeatureStack) -> None:
    """Persist a feature stack: text header (level count, shapes), then dense float32 maps."""
    with open(path, "wb") as f:
        f.write(FEATURE_FILE_MAGIC)
        f.write(f"levels {len(stack)}\n".encode("ascii"))
        for fm in stack:
            c, h, w = fm.shape
            f.write(f"shape {c} {h} {w}\n".encode("ascii"))
        for fm in stack:
            f.write(np.ascontiguousarray(fm, dtype="<f4").tobytes())


def read_feature_file(path) -> FeatureStack:
    with open(path, "rb") as f:
        if f.read(len(FEATURE_FILE_MAGIC)) != FEATURE_FILE_MAGIC:
            raise ValueError(f"{path}: not a feature stack file")
        header = f.readline().split()
        if len(header) != 2 or header[0] != b"levels":
            raise ValueError(f"{path}: malformed level count")
        n_levels = int(header[1])
        shapes = []
        for _ in range(n_levels):
            tok = f.readline().split()
            if len(tok) != 4 or tok[0] != b"shape":
                raise ValueError(f"{path}: malformed shape record")
            shapes.append(tuple(int(t) for t in tok[1:]))
        stack = []
        for c, h, w in shapes:
            raw = f.read(c * h * w * 4)
            if len(raw) != c * h * w * 4:
                raise ValueError(f"{path}: truncated feature data")
            stack.append(np.frombuffer(raw, dtype="<f4").reshape(c, h, w).astype(np.float64))
    return stack


@dataclass
class PrecomputedFeatures:
    """Feature 'extractor' that serves stacks loaded from files, keyed by raster id.

    Useful for plugging in activations exported from an external network:
    register each raster with its stack, then pass this object wherever an
    extractor is expected (metrics only; it has no input_grad).
    """

    eps: float = 1e-8
    _stacks: dict = field(default_factory=dict)

    def register(self, raster: np.ndarray, stack: FeatureStack) -> None:
        self._stacks[id(raster)] = stack

    def __call__(self, raster: np.ndarray) -> FeatureStack:
        try:
            return self._stacks[id(raster)]
        except KeyError:
            raise KeyError("raster was not registered with this extractor") from None
