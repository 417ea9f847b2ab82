"""Dynamic attention: which grid patches an optimization round works on.

Uniform attention visits every patch that intersects the active layer's mask;
selective attention picks the highest-error patches, recomputed from the
current canvas before every selective round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compositing import Canvas, SemanticMask
from .errors import ConfigError
from .strokes import PATCH_SIDE


@dataclass
class AttentionMap:
    mode: str                       # "uniform" | "selective"
    selected: list[int]             # flat row-major patch indices, in visit order
    budget: int | None = None       # selection budget (selective only)
    errors: np.ndarray | None = None  # error snapshot that justified the selection


def _eligible(grid_shape: tuple[int, int], mask: SemanticMask | None) -> np.ndarray:
    gh, gw = grid_shape
    if mask is None:
        return np.ones(gh * gw, dtype=bool)
    m = mask.mask
    if m.shape != (gh * PATCH_SIDE, gw * PATCH_SIDE):
        raise ValueError(f"mask shape {m.shape} does not match a {gh}x{gw} patch grid")
    cover = m.reshape(gh, PATCH_SIDE, gw, PATCH_SIDE).any(axis=(1, 3))
    return cover.ravel()


def uniform_patches(canvas: Canvas, mask: SemanticMask | None = None) -> AttentionMap:
    """All grid patches in row-major order; masked layers keep only overlapping ones."""
    eligible = _eligible(canvas.grid_shape, mask)
    return AttentionMap(mode="uniform", selected=[int(i) for i in np.flatnonzero(eligible)])


def select_top_v(errors: np.ndarray, budget: int, mask: SemanticMask | None = None) -> AttentionMap:
    """The `budget` eligible patches with the largest error.

    Ties break toward the smaller row-major index; output is ordered by
    descending error. Fewer eligible patches than the budget selects all.
    """
    if budget < 1:
        raise ConfigError(f"selection budget must be >= 1, got {budget}")
    errors = np.asarray(errors, dtype=np.float64)
    if errors.ndim != 2:
        raise ValueError(f"errors must be a 2-d patch grid, got shape {errors.shape}")
    if not np.all(np.isfinite(errors)) or np.any(errors < 0):
        raise ValueError("errors must be finite and non-negative")
    eligible = _eligible(errors.shape, mask)
    flat = errors.ravel()
    candidates = sorted(np.flatnonzero(eligible), key=lambda i: (-flat[i], i))
    return AttentionMap(
        mode="selective",
        selected=[int(i) for i in candidates[:budget]],
        budget=budget,
        errors=errors.copy(),
    )
