"""CSV and PGM readers/writers.

CSV holds full-precision floats: one value per line for signals, one
comma-separated row per line for images, optionally preceded by a single
non-numeric header line.  PGM (P2 ASCII or P5 binary, maxval <= 255) is used
for 8-bit images and previews; a JSON sidecar records how a preview maps back
to real values.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .grids import GridGeometry, ScalarGrid

__all__ = [
    "FormatError",
    "read_csv",
    "write_csv",
    "read_pgm",
    "write_pgm",
    "write_preview",
    "read_preview",
    "read_array",
    "spacing_header",
    "parse_spacing_header",
    "read_grid",
    "write_grid",
]


class FormatError(ValueError):
    """Malformed or out-of-range file content."""


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv(path) -> tuple[np.ndarray, str | None]:
    """Read a CSV signal or image; returns ``(values, header)``."""
    path = Path(path)
    lines = path.read_text().splitlines()
    header = None
    rows = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        cells = [c.strip() for c in text.split(",")]
        if not rows and header is None and not all(_is_number(c) for c in cells):
            header = line.rstrip("\n")
            continue
        try:
            row = [float(c) for c in cells]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric value in {text!r}") from None
        if not all(math.isfinite(v) for v in row):
            raise FormatError(f"{path}:{lineno}: non-finite value")
        if rows and len(row) != len(rows[0]):
            raise FormatError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise FormatError(f"{path}: no data")
    arr = np.array(rows, dtype=float)
    if arr.shape[1] == 1:
        arr = arr[:, 0]
    return arr, header


def write_csv(path, values, header: str | None = None) -> Path:
    path = Path(path)
    arr = np.asarray(values, dtype=float)
    if arr.ndim not in (1, 2):
        raise ValueError("only 1D and 2D arrays can be written as CSV")
    out = []
    if header is not None:
        out.append(header)
    if arr.ndim == 1:
        out.extend(repr(float(v)) for v in arr)
    else:
        out.extend(",".join(repr(float(v)) for v in row) for row in arr)
    path.write_text("\n".join(out) + "\n")
    return path


def _pgm_tokens(data: bytes, count: int):
    """Header tokens of a PGM file and the offset just past the last one."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise FormatError(f"truncated PGM header at offset {pos}")
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append((data[start:pos], start))
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 graymap with maxval <= 255 as an integer array."""
    path = Path(path)
    data = path.read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    magic = tokens[0][0]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: unsupported magic {magic!r} at offset 0")
    fields = []
    for tok, off in tokens[1:]:
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"{path}: malformed header field {tok!r} at offset {off}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: invalid dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise FormatError(f"{path}: maxval {maxval} outside 1..255")
    count = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        raw = data[pos : pos + count]
        if len(raw) < count:
            raise FormatError(f"{path}: truncated pixel data, expected {count} bytes at offset {pos}, got {len(raw)}")
        arr = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
        bad = np.flatnonzero(arr > maxval)
        if bad.size:
            raise FormatError(f"{path}: value {arr[bad[0]]} exceeds maxval at offset {pos + bad[0]}")
    else:
        body = data[pos:]
        vals = []
        for lineno, line in enumerate(body.splitlines(), start=1):
            line = line.split(b"#", 1)[0]
            for tok in line.split():
                try:
                    v = int(tok)
                except ValueError:
                    raise FormatError(f"{path}: non-integer pixel {tok!r} in data line {lineno}") from None
                if not 0 <= v <= maxval:
                    raise FormatError(f"{path}: pixel {v} outside 0..{maxval} in data line {lineno}")
                vals.append(v)
        if len(vals) < count:
            raise FormatError(f"{path}: truncated pixel data, expected {count} values, got {len(vals)}")
        arr = np.asarray(vals[:count], dtype=np.int64)
    return arr.reshape(height, width)


def write_pgm(path, image, binary: bool = True, maxval: int = 255) -> Path:
    """Write integer values in ``[0, maxval]`` as P5 (default) or P2."""
    path = Path(path)
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError("PGM images must be 2D")
    if not 1 <= maxval <= 255:
        raise ValueError("maxval must lie in 1..255")
    if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
        raise ValueError("PGM values must be integers")
    if arr.min() < 0 or arr.max() > maxval:
        raise ValueError(f"PGM values must lie in [0, {maxval}]")
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode()
    if binary:
        path.write_bytes(header + arr.tobytes())
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in arr)
        path.write_bytes(header + rows.encode() + b"\n")
    return path


def write_preview(path, values, lo: float | None = None, hi: float | None = None) -> Path:
    """Linearly map ``[lo, hi]`` (default: data range) to ``[0, 255]`` and
    write a P5 preview plus a ``.json`` sidecar with the mapping."""
    path = Path(path)
    v = np.asarray(values, dtype=float)
    lo = float(v.min()) if lo is None else float(lo)
    hi = float(v.max()) if hi is None else float(hi)
    scale = (hi - lo) / 255.0 if hi > lo else 0.0
    q = np.zeros_like(v) if scale == 0 else np.round((np.clip(v, lo, hi) - lo) / scale)
    write_pgm(path, q)
    sidecar = {"offset": lo, "scale": scale, "source_min": float(v.min()), "source_max": float(v.max())}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_preview(path) -> np.ndarray:
    """Undo :func:`write_preview` (exact up to the recorded quantization)."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    return read_pgm(path) * meta["scale"] + meta["offset"]


def read_array(path) -> np.ndarray:
    """Read a CSV or PGM file as floats, chosen by extension."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        return read_pgm(path).astype(float)
    return read_csv(path)[0]


def spacing_header(spacing) -> str:
    """CSV header line recording the grid spacing, e.g. ``spacing=0.008``."""
    return "spacing=" + ";".join(repr(float(h)) for h in spacing)


def parse_spacing_header(header: str | None) -> tuple[float, ...] | None:
    if not header or not header.strip().startswith("spacing="):
        return None
    body = header.strip()[len("spacing=") :]
    try:
        return tuple(float(t) for t in body.split(";"))
    except ValueError:
        raise FormatError(f"malformed spacing header {header!r}") from None


def read_grid(path, spacing=None) -> ScalarGrid:
    """Load a CSV or PGM file as a ScalarGrid.

    Explicit ``spacing`` wins over a CSV spacing header; the fallback is unit
    spacing.
    """
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        arr, header = read_pgm(path).astype(float), None
    else:
        arr, header = read_csv(path)
    if spacing is None:
        spacing = parse_spacing_header(header)
    return ScalarGrid(GridGeometry(arr.shape, tuple(spacing or ())), arr)


def write_grid(path, grid: ScalarGrid, lo: float | None = None, hi: float | None = None) -> Path:
    """Write a grid as CSV with a spacing header, or as a PGM preview."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        if grid.geometry.ndim != 2:
            raise ValueError("PGM output needs a 2D grid")
        return write_preview(path, grid.values, lo, hi)
    return write_csv(path, grid.values, header=spacing_header(grid.geometry.spacing))
