"""User-facing configuration: style presets and validation.

Resolution precedence is preset < config file < command-line flags; the fully
resolved config is echoed into the run manifest so experiments are auditable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .strokes import MAX_RADIUS, MIN_RADIUS

STYLES = ("realistic", "painterly", "abstract")
ATTENTION_MODES = ("uniform", "selective")
PERC_MODES = ("one-minus-cos", "negative-cos")


@dataclass(frozen=True)
class LayerOverride:
    """Per-layer knobs for the abstract style; None falls back to the global value."""

    passes: int | None = None
    strokes: int | None = None
    v_patches: int | None = None


@dataclass
class StyleConfig:
    style: str = "realistic"
    passes: int = 4
    strokes_per_patch: int | None = None   # None: style rule decides per pass
    thickness_base: float = 8.0 / 128.0    # first-pass radius; halves each pass
    attention: str = "uniform"
    v_patches: int | None = None
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.5                     # mask-confinement threshold
    layer_overrides: dict[int, LayerOverride] = field(default_factory=dict)
    iterations: int = 250
    lr: float = 0.02
    lr_end: float = 0.002
    seed: int = 0
    paper_literal_masking: bool = False
    perc_mode: str = "one-minus-cos"
    workers: int = 1

    def validate(self) -> None:
        if self.style not in STYLES:
            raise ConfigError(f"unknown style {self.style!r}, expected one of {STYLES}")
        if self.passes < 1:
            raise ConfigError(f"passes must be >= 1, got {self.passes}")
        if self.strokes_per_patch is not None and self.strokes_per_patch < 1:
            raise ConfigError(f"strokes-per-patch must be >= 1, got {self.strokes_per_patch}")
        if not (math.isfinite(self.thickness_base) and MIN_RADIUS <= self.thickness_base <= MAX_RADIUS):
            raise ConfigError(
                f"thickness must be in [{MIN_RADIUS}, {MAX_RADIUS}], got {self.thickness_base}"
            )
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(f"unknown attention mode {self.attention!r}")
        if self.attention == "selective" and (self.v_patches is None or self.v_patches < 1):
            raise ConfigError("selective attention requires a positive --v-patches budget")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError(f"need alpha, beta >= 0 with alpha + beta > 0, got {self.alpha}, {self.beta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not (math.isfinite(self.lr) and self.lr > 0) or not (math.isfinite(self.lr_end) and self.lr_end > 0):
            raise ConfigError(f"learning rates must be positive, got {self.lr}, {self.lr_end}")
        if self.perc_mode not in PERC_MODES:
            raise ConfigError(f"unknown perc_mode {self.perc_mode!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        for layer_id, ov in self.layer_overrides.items():
            if layer_id < 0:
                raise ConfigError(f"layer override id must be >= 0, got {layer_id}")
            for name, value in (("passes", ov.passes), ("strokes", ov.strokes), ("v_patches", ov.v_patches)):
                if value is not None and value < 1:
                    raise ConfigError(f"layer {layer_id} override {name} must be >= 1, got {value}")


# Preset values the style names resolve to before file/flag overrides.
STYLE_PRESETS: dict[str, dict] = {
    "realistic": dict(
        passes=4, strokes_per_patch=None, attention="uniform", v_patches=None,
        alpha=1.0, beta=0.01, iterations=250,
    ),
    "painterly": dict(
        passes=3, strokes_per_patch=16, attention="selective", v_patches=8,
        alpha=1.0, beta=0.0, iterations=150,
    ),
    "abstract": dict(
        passes=3, strokes_per_patch=16, attention="selective", v_patches=8,
        alpha=1.0, beta=0.0, iterations=150,
    ),
}

_FIELD_NAMES = {f.name for f in fields(StyleConfig)}


def resolve_config(style: str, *override_layers: dict) -> StyleConfig:
    """Build a config from a style preset plus override layers, lowest precedence first.

    Override dicts map StyleConfig field names to values; None values and
    missing keys leave the lower layer untouched.
    """
    if style not in STYLE_PRESETS:
        raise ConfigError(f"unknown style {style!r}, expected one of {STYLES}")
    cfg = StyleConfig(style=style)
    cfg = replace(cfg, **STYLE_PRESETS[style])
    for layer in override_layers:
        if not layer:
            continue
        unknown = set(layer) - _FIELD_NAMES
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        updates = {k: v for k, v in layer.items() if v is not None}
        if "layer_overrides" in updates:
            merged = dict(cfg.layer_overrides)
            merged.update(updates["layer_overrides"])
            updates["layer_overrides"] = merged
        cfg = replace(cfg, **updates)
    cfg.validate()
    return cfg
