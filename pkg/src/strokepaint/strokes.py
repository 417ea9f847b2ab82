"""Brush stroke primitives.

A stroke is a 13-parameter tuple: the three control points of a quadratic
Bezier centerline (patch-normalized coordinates), radius and opacity at the
two endpoints (both linearly interpolated along the curve), and an RGB color.
Batches hold the dense per-patch parameter matrix that the optimizer updates
in place, plus the patch placement metadata needed to put strokes back onto
the full canvas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericFault

PATCH_SIDE = 128

PARAM_NAMES = (
    "x0", "y0", "x1", "y1", "x2", "y2",
    "r0", "r2", "o0", "o2",
    "col_r", "col_g", "col_b",
)
N_PARAMS = len(PARAM_NAMES)

# Clamp floor for radii: one pixel at patch scale. Prevents vanishing strokes
# and divide-by-radius blowups during optimization.
MIN_RADIUS = 1.0 / PATCH_SIDE
MAX_RADIUS = 0.5

PARAM_LOW = np.array(
    [0, 0, 0, 0, 0, 0, MIN_RADIUS, MIN_RADIUS, 0, 0, 0, 0, 0], dtype=np.float64
)
PARAM_HIGH = np.array(
    [1, 1, 1, 1, 1, 1, MAX_RADIUS, MAX_RADIUS, 1, 1, 1, 1, 1], dtype=np.float64
)


@dataclass(frozen=True)
class Stroke:
    """One brush stroke; all fields patch-normalized."""

    x0: float
    y0: float
    x1: float
    y1: float
    x2: float
    y2: float
    r0: float
    r2: float
    o0: float
    o2: float
    col_r: float
    col_g: float
    col_b: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "Stroke":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got shape {arr.shape}")
        return cls(*(float(v) for v in arr))

    def is_valid(self) -> bool:
        return param_violation(self.as_array()) is None


def param_violation(arr: np.ndarray) -> str | None:
    """Name of the first violated invariant of a 13-vector, or None if valid."""
    if not np.all(np.isfinite(arr)):
        return "non-finite value"
    for i in (0, 1, 2, 3, 4, 5, 8, 9, 10, 11, 12):
        if not (0.0 <= arr[i] <= 1.0):
            return f"{PARAM_NAMES[i]} outside [0, 1]"
    for i in (6, 7):
        if not (0.0 < arr[i] <= MAX_RADIUS):
            return f"{PARAM_NAMES[i]} outside (0, {MAX_RADIUS}]"
    return None


@dataclass
class StrokeBatch:
    """Dense stroke parameters for the patches optimized together in one round.

    params has shape (n_patches, strokes_per_patch, 13). patch_origins holds
    (row, col) pixel offsets of each patch's top-left corner in the padded
    canvas, always multiples of PATCH_SIDE. `active` marks strokes that are
    still alive (mask filtering and the paste guard deactivate rows without
    reshaping the dense array).
    """

    params: np.ndarray
    patch_origins: np.ndarray
    layer_id: int = 0
    pass_index: int = 0
    label: int | None = None
    active: np.ndarray | None = None

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        self.patch_origins = np.asarray(self.patch_origins, dtype=np.int64)
        if self.params.ndim != 3 or self.params.shape[2] != N_PARAMS:
            raise ValueError(f"params must be (n, t, {N_PARAMS}), got {self.params.shape}")
        if self.patch_origins.shape != (self.params.shape[0], 2):
            raise ValueError("patch_origins must be (n_patches, 2)")
        if self.active is None:
            self.active = np.ones(self.params.shape[:2], dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool)
            if self.active.shape != self.params.shape[:2]:
                raise ValueError("active must be (n_patches, strokes_per_patch)")

    @property
    def n_patches(self) -> int:
        return self.params.shape[0]

    @property
    def strokes_per_patch(self) -> int:
        return self.params.shape[1]

    def active_count(self) -> int:
        return int(self.active.sum())

    def copy(self) -> "StrokeBatch":
        return StrokeBatch(
            self.params.copy(), self.patch_origins.copy(),
            layer_id=self.layer_id, pass_index=self.pass_index, label=self.label,
            active=self.active.copy(),
        )

    def validate(self, padded_shape: tuple[int, int] | None = None) -> None:
        bad = ~np.isfinite(self.params)
        if bad.any():
            p, s, _ = np.argwhere(bad)[0]
            raise NumericFault(f"non-finite stroke parameter at patch {p}, stroke {s}")
        for p in range(self.n_patches):
            for s in range(self.strokes_per_patch):
                v = param_violation(self.params[p, s])
                if v is not None:
                    raise ValueError(f"patch {p}, stroke {s}: {v}")
        if np.any(self.patch_origins % PATCH_SIDE != 0):
            raise ValueError("patch origins must be multiples of the patch side")
        if padded_shape is not None:
            h, w = padded_shape
            oob = (
                (self.patch_origins[:, 0] < 0)
                | (self.patch_origins[:, 1] < 0)
                | (self.patch_origins[:, 0] + PATCH_SIDE > h)
                | (self.patch_origins[:, 1] + PATCH_SIDE > w)
            )
            if oob.any():
                raise ValueError(f"patch origin out of canvas: {self.patch_origins[np.argmax(oob)]}")


def _grid_shape(count: int) -> tuple[int, int]:
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    return rows, cols


def init_strokes(
    patch_count: int,
    strokes_per_patch: int,
    thickness: float,
    reference_patches: np.ndarray,
    *,
    patch_origins: np.ndarray | None = None,
    layer_id: int = 0,
    pass_index: int = 0,
    label: int | None = None,
) -> StrokeBatch:
    """Lay out strokes on a regular grid over each patch.

    Midpoints sit at the centers of the most-square grid with ceil(sqrt(t))
    columns; start/end points are offset half a cell horizontally so the
    initial stroke is a short dab with usable tangent gradients rather than a
    degenerate point. Color is sampled from the reference patch under the
    midpoint; radii are `thickness` at both ends, opacity 1.
    """
    if strokes_per_patch < 1:
        raise ConfigError(f"strokes_per_patch must be >= 1, got {strokes_per_patch}")
    if not (math.isfinite(thickness) and 0.0 < thickness <= MAX_RADIUS):
        raise ConfigError(f"thickness must be in (0, {MAX_RADIUS}], got {thickness}")
    reference_patches = np.asarray(reference_patches, dtype=np.float64)
    if reference_patches.ndim != 4 or reference_patches.shape[3] != 3:
        raise ValueError("reference_patches must be (n, side, side, 3)")
    if reference_patches.shape[0] != patch_count:
        raise ValueError(
            f"patch_count {patch_count} != len(reference_patches) {reference_patches.shape[0]}"
        )
    side = reference_patches.shape[1]

    rows, cols = _grid_shape(strokes_per_patch)
    cell_w = 1.0 / cols
    cell_h = 1.0 / rows
    t_idx = np.arange(strokes_per_patch)
    gx = (t_idx % cols + 0.5) * cell_w
    gy = (t_idx // cols + 0.5) * cell_h

    params = np.zeros((patch_count, strokes_per_patch, N_PARAMS), dtype=np.float64)
    params[:, :, 0] = gx - 0.5 * cell_w  # x0
    params[:, :, 1] = gy
    params[:, :, 2] = gx                 # x1 (midpoint / control)
    params[:, :, 3] = gy
    params[:, :, 4] = gx + 0.5 * cell_w  # x2
    params[:, :, 5] = gy
    params[:, :, 6] = thickness
    params[:, :, 7] = thickness
    params[:, :, 8] = 1.0
    params[:, :, 9] = 1.0

    # Nearest-pixel sample under the midpoint: floor of the pixel coordinate.
    px = np.minimum((gx * side).astype(np.int64), side - 1)
    py = np.minimum((gy * side).astype(np.int64), side - 1)
    params[:, :, 10:13] = reference_patches[:, py, px, :]

    if patch_origins is None:
        patch_origins = np.zeros((patch_count, 2), dtype=np.int64)
    return StrokeBatch(
        params, patch_origins,
        layer_id=layer_id, pass_index=pass_index, label=label,
    )


def clamp_params(params: np.ndarray) -> np.ndarray:
    """Project a parameter array (... x 13) into the invariant box."""
    return np.clip(params, PARAM_LOW, PARAM_HIGH)


def clamp_strokes(batch: StrokeBatch) -> StrokeBatch:
    """Project every stroke into the invariant box; idempotent.

    Non-finite entries are a numeric fault, not something to clamp over.
    """
    bad = ~np.isfinite(batch.params)
    if bad.any():
        p, s, _ = np.argwhere(bad)[0]
        raise NumericFault(f"non-finite stroke parameter at patch {p}, stroke {s}")
    return StrokeBatch(
        clamp_params(batch.params), batch.patch_origins,
        layer_id=batch.layer_id, pass_index=batch.pass_index, label=batch.label,
        active=batch.active.copy(),
    )
