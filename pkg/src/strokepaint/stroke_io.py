"""Versioned text serialization of stroke records.

The file is the painting: replaying it over the recorded flat-color canvas
reproduces the output raster exactly, which is what downstream consumers
(plotters, robotic painters) need. Floats are written with Python's shortest
round-trip repr, so parsing returns bit-identical values and files diff
cleanly line by line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StrokeFileError
from .strokes import N_PARAMS, PARAM_NAMES, PATCH_SIDE, StrokeBatch, param_violation

FORMAT_NAME = "paintfile"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class PaintingMeta:
    """Geometry and initialization needed to replay a stroke record."""

    height: int
    width: int
    pad_bottom: int
    pad_right: int
    init_color: tuple[float, float, float]

    @property
    def padded_shape(self) -> tuple[int, int]:
        return self.height + self.pad_bottom, self.width + self.pad_right


def _fmt(x: float) -> str:
    return repr(float(x))


def write_strokes(batches: list[StrokeBatch], meta: PaintingMeta) -> bytes:
    """Serialize recorded batches in compositing order. Inactive strokes are omitted."""
    for b in batches:
        b.validate(meta.padded_shape)
    lines = [
        f"{FORMAT_NAME} {FORMAT_VERSION}",
        f"canvas {meta.height} {meta.width}",
        f"pad {meta.pad_bottom} {meta.pad_right}",
        "init_color " + " ".join(_fmt(c) for c in meta.init_color),
        "fields " + " ".join(PARAM_NAMES),
        f"entries {len(batches)}",
    ]
    for b in batches:
        label = "none" if b.label is None else str(b.label)
        kept = [p for p in range(b.n_patches) if b.active[p].any()]
        lines.append(f"entry pass {b.pass_index} layer {b.layer_id} label {label} patches {len(kept)}")
        for p in kept:
            alive = np.flatnonzero(b.active[p])
            r, c = b.patch_origins[p]
            lines.append(f"patch {int(r)} {int(c)} strokes {len(alive)}")
            for s in alive:
                lines.append(" ".join(_fmt(v) for v in b.params[p, s]))
    return ("\n".join(lines) + "\n").encode("ascii")


class _Reader:
    def __init__(self, data: bytes):
        self.offsets: list[int] = []
        self.lines: list[str] = []
        pos = 0
        for raw in data.split(b"\n"):
            text = raw.decode("ascii", errors="replace").strip()
            if text:
                self.offsets.append(pos)
                self.lines.append(text)
            pos += len(raw) + 1
        self.i = 0

    @property
    def offset(self) -> int:
        if self.i < len(self.offsets):
            return self.offsets[self.i]
        return self.offsets[-1] if self.offsets else 0

    def next(self, what: str) -> str:
        if self.i >= len(self.lines):
            raise StrokeFileError(f"unexpected end of file, expected {what}", self.offset)
        line = self.lines[self.i]
        self.i += 1
        return line

    def fail(self, message: str):
        off = self.offsets[self.i - 1] if self.i > 0 else 0
        raise StrokeFileError(message, off)


def _expect_int(reader: _Reader, token: str, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        reader.fail(f"expected integer {what}, got {token!r}")


def read_strokes(data: bytes) -> tuple[list[StrokeBatch], PaintingMeta]:
    """Parse and validate a stroke file; inverse of write_strokes."""
    r = _Reader(data)

    head = r.next("header").split()
    if len(head) != 2 or head[0] != FORMAT_NAME:
        r.fail(f"not a {FORMAT_NAME} file")
    if head[1] != str(FORMAT_VERSION):
        r.fail(f"unsupported format version {head[1]}, expected {FORMAT_VERSION}")

    tok = r.next("canvas size").split()
    if len(tok) != 3 or tok[0] != "canvas":
        r.fail("expected 'canvas H W'")
    height = _expect_int(r, tok[1], "canvas height")
    width = _expect_int(r, tok[2], "canvas width")

    tok = r.next("padding").split()
    if len(tok) != 3 or tok[0] != "pad":
        r.fail("expected 'pad BOTTOM RIGHT'")
    pad_bottom = _expect_int(r, tok[1], "pad bottom")
    pad_right = _expect_int(r, tok[2], "pad right")

    tok = r.next("init color").split()
    if len(tok) != 4 or tok[0] != "init_color":
        r.fail("expected 'init_color R G B'")
    try:
        init_color = tuple(float(v) for v in tok[1:4])
    except ValueError:
        r.fail("init_color values must be floats")

    tok = r.next("field list").split()
    if tok[0] != "fields" or tuple(tok[1:]) != PARAM_NAMES:
        r.fail("field list does not match the 13 stroke parameters")

    tok = r.next("entry count").split()
    if len(tok) != 2 or tok[0] != "entries":
        r.fail("expected 'entries N'")
    n_entries = _expect_int(r, tok[1], "entry count")

    meta = PaintingMeta(height, width, pad_bottom, pad_right, init_color)
    padded_h, padded_w = meta.padded_shape

    batches: list[StrokeBatch] = []
    for _ in range(n_entries):
        tok = r.next("entry record").split()
        if (
            len(tok) != 9
            or tok[0] != "entry" or tok[1] != "pass" or tok[3] != "layer"
            or tok[5] != "label" or tok[7] != "patches"
        ):
            r.fail("expected 'entry pass P layer K label L patches N'")
        pass_index = _expect_int(r, tok[2], "pass index")
        layer_id = _expect_int(r, tok[4], "layer id")
        label = None if tok[6] == "none" else _expect_int(r, tok[6], "label value")
        n_patches = _expect_int(r, tok[8], "patch count")

        origins: list[tuple[int, int]] = []
        patch_params: list[np.ndarray] = []
        for _ in range(n_patches):
            tok = r.next("patch record").split()
            if len(tok) != 5 or tok[0] != "patch" or tok[3] != "strokes":
                r.fail("expected 'patch ROW COL strokes N'")
            row = _expect_int(r, tok[1], "patch row")
            col = _expect_int(r, tok[2], "patch col")
            n_strokes = _expect_int(r, tok[4], "stroke count")
            if row % PATCH_SIDE or col % PATCH_SIDE:
                r.fail(f"patch origin ({row}, {col}) not aligned to the {PATCH_SIDE} grid")
            if not (0 <= row <= padded_h - PATCH_SIDE and 0 <= col <= padded_w - PATCH_SIDE):
                r.fail(f"patch origin ({row}, {col}) outside the padded canvas")
            strokes = np.empty((n_strokes, N_PARAMS), dtype=np.float64)
            for s in range(n_strokes):
                vals = r.next("stroke record").split()
                if len(vals) != N_PARAMS:
                    r.fail(f"expected {N_PARAMS} stroke values, got {len(vals)}")
                try:
                    strokes[s] = [float(v) for v in vals]
                except ValueError:
                    r.fail("stroke values must be floats")
                violation = param_violation(strokes[s])
                if violation is not None:
                    r.fail(f"invalid stroke: {violation}")
            origins.append((row, col))
            patch_params.append(strokes)

        max_t = max((p.shape[0] for p in patch_params), default=0)
        max_t = max(max_t, 1)
        n = len(origins)
        params = np.zeros((n, max_t, N_PARAMS), dtype=np.float64)
        params[:, :, 6:8] = 1.0 / PATCH_SIDE  # keep padding rows inside the box
        active = np.zeros((n, max_t), dtype=bool)
        for p, arr in enumerate(patch_params):
            params[p, : arr.shape[0]] = arr
            active[p, : arr.shape[0]] = True
        batches.append(
            StrokeBatch(
                params, np.array(origins, dtype=np.int64).reshape(n, 2),
                layer_id=layer_id, pass_index=pass_index, label=label, active=active,
            )
        )
    if r.i < len(r.lines):
        r.fail("trailing data after the declared entries")
    return batches, meta
