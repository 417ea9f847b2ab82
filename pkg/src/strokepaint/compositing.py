"""Canvas management and soft stroke blending.

Canvases carry edge-replication padding up to the next multiple of the patch
side; padding never leaks into user-visible outputs or metrics. Blending is
the standard over-composite with premultiplied stroke color,

    out = base * (1 - alpha) + rgb

and the layer-confined variant multiplies both alpha and color by the layer
mask by default (out = base * (1 - alpha * m) + rgb * m). The verbatim
variant that leaves alpha unmasked is available behind `mask_alpha=False`;
it darkens masked-out pixels under opaque strokes, which is rarely wanted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .renderer import PatchBuffer
from .strokes import PATCH_SIDE


@dataclass
class Canvas:
    """Padded RGB raster plus the bookkeeping to recover the original size."""

    rgb: np.ndarray
    height0: int
    width0: int
    pad_bottom: int
    pad_right: int

    @property
    def padded_shape(self) -> tuple[int, int]:
        return self.rgb.shape[0], self.rgb.shape[1]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.rgb.shape[0] // PATCH_SIDE, self.rgb.shape[1] // PATCH_SIDE

    @property
    def n_patches(self) -> int:
        gh, gw = self.grid_shape
        return gh * gw

    def unpadded(self) -> np.ndarray:
        return self.rgb[: self.height0, : self.width0]

    def copy(self) -> "Canvas":
        return Canvas(self.rgb.copy(), self.height0, self.width0, self.pad_bottom, self.pad_right)


@dataclass
class SemanticMask:
    """Binary region mask for one layer, padded to canvas geometry."""

    mask: np.ndarray
    layer_id: int
    label: int
    pixel_area: int

    def __post_init__(self):
        self.mask = np.asarray(self.mask)
        if self.mask.dtype != bool:
            self.mask = self.mask != 0


def pad_to_grid(img: np.ndarray) -> Canvas:
    """Edge-replicate an (H, W, 3) raster up to the next multiple of the patch side."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a nonempty (H, W, 3) raster, got {img.shape}")
    h0, w0 = img.shape[:2]
    pad_b = (-h0) % PATCH_SIDE
    pad_r = (-w0) % PATCH_SIDE
    padded = np.pad(img, ((0, pad_b), (0, pad_r), (0, 0)), mode="edge")
    return Canvas(padded, h0, w0, pad_b, pad_r)


def pad_mask_to_grid(mask: np.ndarray, canvas: Canvas) -> np.ndarray:
    """Pad a (H0, W0) mask with edge replication to match a canvas."""
    mask = np.asarray(mask)
    if mask.shape != (canvas.height0, canvas.width0):
        raise ValueError(f"mask shape {mask.shape} does not match canvas {canvas.height0}x{canvas.width0}")
    return np.pad(mask, ((0, canvas.pad_bottom), (0, canvas.pad_right)), mode="edge")


def blend(base: np.ndarray, stroke: PatchBuffer) -> np.ndarray:
    """Soft-composite a rendered stroke over a patch."""
    if base.shape[:2] != stroke.alpha.shape or base.shape != stroke.rgb.shape:
        raise ValueError(f"shape mismatch: base {base.shape}, stroke {stroke.rgb.shape}")
    return base * (1.0 - stroke.alpha)[:, :, None] + stroke.rgb


def blend_masked(
    base: np.ndarray,
    stroke: PatchBuffer,
    mask_patch: np.ndarray,
    *,
    mask_alpha: bool = True,
) -> np.ndarray:
    """Composite a stroke confined to a layer mask.

    mask_alpha=True (default): out = base * (1 - alpha * m) + rgb * m.
    mask_alpha=False (verbatim variant): out = base * (1 - alpha) + rgb * m.
    """
    if base.shape[:2] != stroke.alpha.shape or mask_patch.shape != stroke.alpha.shape:
        raise ValueError(f"shape mismatch: base {base.shape}, mask {mask_patch.shape}")
    m = mask_patch.astype(np.float64) if mask_patch.dtype != np.float64 else mask_patch
    if mask_alpha:
        return base * (1.0 - stroke.alpha * m)[:, :, None] + stroke.rgb * m[:, :, None]
    return base * (1.0 - stroke.alpha)[:, :, None] + stroke.rgb * m[:, :, None]


def grid_origins(canvas: Canvas) -> np.ndarray:
    """(n, 2) array of all grid patch origins, row-major."""
    gh, gw = canvas.grid_shape
    rows, cols = np.meshgrid(np.arange(gh), np.arange(gw), indexing="ij")
    return np.stack([rows.ravel(), cols.ravel()], axis=1) * PATCH_SIDE


def origin_of_index(canvas: Canvas, index: int) -> tuple[int, int]:
    gh, gw = canvas.grid_shape
    if not 0 <= index < gh * gw:
        raise ValueError(f"patch index {index} outside {gh}x{gw} grid")
    return (index // gw) * PATCH_SIDE, (index % gw) * PATCH_SIDE


def _check_origin(canvas: Canvas, row: int, col: int) -> None:
    h, w = canvas.padded_shape
    if row % PATCH_SIDE or col % PATCH_SIDE:
        raise ValueError(f"origin ({row}, {col}) not aligned to the {PATCH_SIDE} grid")
    if not (0 <= row <= h - PATCH_SIDE and 0 <= col <= w - PATCH_SIDE):
        raise ValueError(f"origin ({row}, {col}) out of bounds for {h}x{w} canvas")


def crop_patches(canvas: Canvas, origins: np.ndarray) -> np.ndarray:
    """Copy out (n, side, side, 3) patches at the given aligned origins."""
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    out = np.empty((len(origins), PATCH_SIDE, PATCH_SIDE, 3), dtype=np.float64)
    for i, (r, c) in enumerate(origins):
        _check_origin(canvas, int(r), int(c))
        out[i] = canvas.rgb[r : r + PATCH_SIDE, c : c + PATCH_SIDE]
    return out


def crop_mask_patches(mask: np.ndarray, origins: np.ndarray) -> np.ndarray:
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    out = np.empty((len(origins), PATCH_SIDE, PATCH_SIDE), dtype=np.float64)
    for i, (r, c) in enumerate(origins):
        out[i] = mask[r : r + PATCH_SIDE, c : c + PATCH_SIDE]
    return out


def paste_patches(canvas: Canvas, patches: np.ndarray, origins: np.ndarray) -> Canvas:
    """Write patches back at their origins; mutates and returns the canvas."""
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    if len(patches) != len(origins):
        raise ValueError("patches and origins length mismatch")
    for patch, (r, c) in zip(patches, origins):
        _check_origin(canvas, int(r), int(c))
        if patch.shape != (PATCH_SIDE, PATCH_SIDE, 3):
            raise ValueError(f"patch shape {patch.shape} is not ({PATCH_SIDE}, {PATCH_SIDE}, 3)")
        canvas.rgb[r : r + PATCH_SIDE, c : c + PATCH_SIDE] = patch
    return canvas
