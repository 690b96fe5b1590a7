"""Dense 2D grid type, the FCT1 binary tensor-file format, PGM export,
and CSV emission.

Tensor file layout (bit-exact, little-endian):
  bytes 0-3   ASCII "FCT1"
  bytes 4-7   u32 header byte length L
  bytes 8..   UTF-8 JSON {"dtype": "f32"|"f64", "shape": [rows, cols],
              "kind": "image"|"sinogram"|"generic", "meta": {...}}
  remainder   rows*cols scalars, little-endian, row-major
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    HeaderError,
    NonFiniteError,
    TruncatedPayloadError,
)

MAGIC = b"FCT1"
KINDS = ("image", "sinogram", "generic")
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


@dataclass
class Grid2D:
    """Row-major 2D real grid with a semantic kind and free-form meta.

    `data` is held as float64 and marked read-only; operations produce new
    grids rather than mutating.
    """

    data: np.ndarray
    kind: str = "generic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"Grid2D requires a non-empty 2D array, got shape {arr.shape}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("grid contains NaN or Inf")
        arr = arr.copy()  # own the buffer so freezing never touches the caller's array
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def write_tensor(grid: Grid2D, path, dtype: str = "f64") -> None:
    """Serialize a grid to the FCT1 format. Rejects non-finite values."""
    if dtype not in _DTYPES:
        raise HeaderError(f"unsupported dtype {dtype!r}")
    if not np.all(np.isfinite(grid.data)):
        raise NonFiniteError(f"refusing to write non-finite values to {path}")
    header = {
        "dtype": dtype,
        "shape": [grid.rows, grid.cols],
        "kind": grid.kind,
        "meta": {str(k): str(v) for k, v in grid.meta.items()},
    }
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(grid.data, dtype=_DTYPES[dtype]).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint32(len(hdr)).astype("<u4").tobytes())
            fh.write(hdr)
            fh.write(payload)
    except OSError as exc:
        raise HeaderError(f"cannot write tensor file {path}: {exc}") from exc


def read_tensor(path) -> Grid2D:
    """Read an FCT1 file back into a Grid2D (always float64 in memory)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise HeaderError(f"cannot read tensor file {path}: {exc}") from exc
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an FCT1 tensor file")
    hdr_len = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if len(blob) < 8 + hdr_len:
        raise TruncatedPayloadError(f"{path}: header truncated")
    try:
        header = json.loads(blob[8 : 8 + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"{path}: malformed header: {exc}") from exc
    try:
        dtype = _DTYPES[header["dtype"]]
        rows, cols = (int(v) for v in header["shape"])
        kind = header["kind"]
        meta = dict(header.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"{path}: incomplete header: {exc}") from exc
    if rows < 1 or cols < 1 or kind not in KINDS:
        raise HeaderError(f"{path}: invalid shape/kind in header")
    payload = blob[8 + hdr_len :]
    expected = rows * cols * dtype.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, header requires {expected}"
        )
    data = np.frombuffer(payload[:expected], dtype=dtype).reshape(rows, cols)
    return Grid2D(data.astype(np.float64), kind=kind, meta=meta)


def export_pgm(grid: Grid2D, path, window: tuple[float, float]) -> None:
    """8-bit binary PGM with values windowed to [lo, hi], round half up."""
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError(f"degenerate window ({lo}, {hi})")
    scaled = np.clip((grid.data - lo) / (hi - lo), 0.0, 1.0)
    pix = np.floor(255.0 * scaled + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.cols} {grid.rows}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def write_csv(path, header: list[str], rows) -> None:
    """CSV with '.' decimals, '\\n' line endings, header always present.

    Floats are rendered with repr-level precision; infinities as 'inf'.
    """
    def fmt(v):
        if isinstance(v, float):
            if math.isinf(v):
                return "inf" if v > 0 else "-inf"
            return repr(v)
        if isinstance(v, (np.floating,)):
            return fmt(float(v))
        if isinstance(v, (np.integer,)):
            return str(int(v))
        return str(v)

    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
