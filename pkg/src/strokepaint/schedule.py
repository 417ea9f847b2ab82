"""Pass scheduling: stroke budgets, thickness progression, layer ordering.

The realistic style grows the per-patch stroke budget as (p+5)^2 across
passes while halving stroke thickness (a_p = 2^(1-p) * a_1), the classic
coarse-to-fine progression. Painterly and abstract styles keep a flat budget
of 16 strokes per patch unless overridden. Within each pass, layers are
visited in descending mask area, so large background regions are painted
before foreground subjects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .config import StyleConfig
from .errors import ConfigError
from .strokes import MIN_RADIUS


@dataclass(frozen=True)
class LayerSpec:
    """One semantic layer as the scheduler sees it."""

    layer_id: int
    label: int | None
    pixel_area: int


@dataclass(frozen=True)
class ScheduleEntry:
    pass_index: int        # 1-based
    layer_id: int
    label: int | None
    attention: str
    v_patches: int | None
    strokes_per_patch: int
    thickness: float
    iterations: int


def schedule_strokes(pass_index: int, cfg: StyleConfig, layer_id: int | None = None) -> int:
    """Per-patch stroke budget for a pass under the configured style."""
    if pass_index < 1:
        raise ConfigError(f"pass index must be >= 1, got {pass_index}")
    if layer_id is not None and cfg.style == "abstract":
        override = cfg.layer_overrides.get(layer_id)
        if override is not None and override.strokes is not None:
            return override.strokes
    if cfg.strokes_per_patch is not None:
        return cfg.strokes_per_patch
    if cfg.style == "realistic":
        return (pass_index + 5) ** 2
    return 16


def schedule_thickness(pass_index: int, base_thickness: float) -> float:
    """Thickness halves every pass, floored at the minimum radius."""
    if pass_index < 1:
        raise ConfigError(f"pass index must be >= 1, got {pass_index}")
    return max(MIN_RADIUS, 2.0 ** (1 - pass_index) * base_thickness)


def build_schedule(cfg: StyleConfig, layers: Sequence[LayerSpec]) -> list[ScheduleEntry]:
    """Enumerate (pass, layer) optimization rounds in execution order."""
    if not layers:
        raise ConfigError("at least one layer is required")
    known = {layer.layer_id for layer in layers}
    for layer_id in cfg.layer_overrides:
        if layer_id not in known:
            raise ConfigError(f"layer override references unknown layer {layer_id}")
    ordered = sorted(layers, key=lambda l: (-l.pixel_area, l.layer_id))
    entries: list[ScheduleEntry] = []
    for p in range(1, cfg.passes + 1):
        for layer in ordered:
            override = cfg.layer_overrides.get(layer.layer_id) if cfg.style == "abstract" else None
            layer_passes = cfg.passes
            v = cfg.v_patches
            if override is not None:
                if override.passes is not None:
                    layer_passes = override.passes
                if override.v_patches is not None:
                    v = override.v_patches
            if p > layer_passes:
                continue
            entries.append(
                ScheduleEntry(
                    pass_index=p,
                    layer_id=layer.layer_id,
                    label=layer.label,
                    attention=cfg.attention,
                    v_patches=v,
                    strokes_per_patch=schedule_strokes(p, cfg, layer.layer_id),
                    thickness=schedule_thickness(p, cfg.thickness_base),
                    iterations=cfg.iterations,
                )
            )
    return entries
