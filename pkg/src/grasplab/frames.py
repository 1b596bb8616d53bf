"""Sensor frames and their binary PPM/PGM persistence.

Frames hold quantized integer codes: 8-bit for rgb and tactile images, 16-bit
hundredths of a millimetre for depth.  Renderers quantize on construction, so a
frame written to disk and read back is bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

KINDS = ("rgb", "depth", "tactile")
TAGS = ("Ta", "Tb", "Tc")
DEPTH_SCALE = 100.0  # codes per mm


class ShapeMismatch(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SensorFrame:
    kind: str
    codes: np.ndarray
    timestamp_tag: str = "Tb"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.timestamp_tag not in TAGS:
            raise ValueError(f"unknown timestamp tag {self.timestamp_tag!r}")
        want = np.uint16 if self.kind == "depth" else np.uint8
        if self.codes.dtype != want:
            raise TypeError(f"{self.kind} frames store {want.__name__} codes, got {self.codes.dtype}")
        nd = 2 if self.kind == "depth" else 3
        if self.codes.ndim != nd or (nd == 3 and self.codes.shape[2] != 3):
            raise ShapeMismatch(f"bad {self.kind} frame shape {self.codes.shape}")
        self.codes.setflags(write=False)

    @classmethod
    def from_values(cls, kind: str, values: np.ndarray, tag: str = "Tb") -> "SensorFrame":
        """Quantize float values ([0,1] intensities, or mm for depth)."""
        values = np.asarray(values, dtype=float)
        if kind == "depth":
            codes = np.clip(np.round(values * DEPTH_SCALE), 0, 65535).astype(np.uint16)
        else:
            codes = np.clip(np.round(values * 255.0), 0, 255).astype(np.uint8)
        return cls(kind, codes, tag)

    @property
    def data(self) -> np.ndarray:
        if self.kind == "depth":
            return self.codes / DEPTH_SCALE
        return self.codes / 255.0

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.kind == "depth" else 3

    def retag(self, tag: str) -> "SensorFrame":
        return SensorFrame(self.kind, self.codes, tag)

    def __eq__(self, other):
        if not isinstance(other, SensorFrame):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.timestamp_tag == other.timestamp_tag
            and self.codes.shape == other.codes.shape
            and bool(np.array_equal(self.codes, other.codes))
        )

    def __hash__(self):
        return hash((self.kind, self.timestamp_tag, self.codes.shape, self.codes.tobytes()))


# --- Netpbm I/O -----------------------------------------------------------------------


def _read_header(buf: bytes, path) -> tuple[str, int, int, int, int]:
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4:
        while i < len(buf) and buf[i:i + 1].isspace():
            i += 1
        if buf[i:i + 1] == b"#":
            while i < len(buf) and buf[i:i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j:j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError(f"{path}: truncated header")
        fields.append(buf[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    try:
        magic = fields[0].decode()
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError as e:
        raise FormatError(f"{path}: bad header ({e})") from None
    return magic, w, h, maxval, i + 1


def write_frame(frame: SensorFrame, path) -> Path:
    """Write ``frame`` as P6 (rgb/tactile, 8-bit) or P5 (depth, 16-bit)."""
    path = Path(path)
    h, w = frame.codes.shape[:2]
    if frame.kind == "depth":
        header = f"P5\n{w} {h}\n65535\n".encode()
        body = frame.codes.astype(">u2").tobytes()
    else:
        header = f"P6\n{w} {h}\n255\n".encode()
        body = frame.codes.tobytes()
    path.write_bytes(header + body)
    return path


def read_frame(path, kind: str, tag: str) -> SensorFrame:
    path = Path(path)
    buf = path.read_bytes()
    magic, w, h, maxval, start = _read_header(buf, path)
    if kind == "depth":
        if magic != "P5" or maxval != 65535:
            raise FormatError(f"{path}: expected 16-bit P5, got {magic} maxval {maxval}")
        n = w * h * 2
        raw = np.frombuffer(buf[start:start + n], dtype=">u2")
        if raw.size != w * h:
            raise FormatError(f"{path}: truncated raster")
        codes = raw.astype(np.uint16).reshape(h, w)
    else:
        if magic != "P6" or maxval != 255:
            raise FormatError(f"{path}: expected 8-bit P6, got {magic} maxval {maxval}")
        n = w * h * 3
        raw = np.frombuffer(buf[start:start + n], dtype=np.uint8)
        if raw.size != n:
            raise FormatError(f"{path}: truncated raster")
        codes = raw.reshape(h, w, 3).copy()
    return SensorFrame(kind, codes, tag)
