"""Readers and writers for Middlebury ``.flo`` flow files and binary PGM images."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

FLO_MAGIC = 202021.25
FLO_HEADER = 12


class FloError(ValueError):
    pass


class FloMagicError(FloError):
    pass


class FloTruncatedError(FloError):
    def __init__(self, path, expected, actual):
        super().__init__(f"{path}: truncated flow file, expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class FloDimensionError(FloError):
    pass


class PGMError(ValueError):
    pass


def read_flo(path) -> np.ndarray:
    """Read a ``.flo`` file into an ``(H, W, 2)`` float32 array of (u, v)."""
    data = Path(path).read_bytes()
    if len(data) < FLO_HEADER:
        raise FloTruncatedError(path, FLO_HEADER, len(data))
    magic = np.frombuffer(data, "<f4", 1, 0)[0]
    if magic != np.float32(FLO_MAGIC):
        raise FloMagicError(f"{path}: bad magic {float(magic)!r}, expected {FLO_MAGIC}")
    w, h = (int(v) for v in np.frombuffer(data, "<i4", 2, 4))
    if w <= 0 or h <= 0:
        raise FloDimensionError(f"{path}: nonpositive dimensions {w} x {h}")
    expected = FLO_HEADER + 8 * w * h
    if len(data) < expected:
        raise FloTruncatedError(path, expected, len(data))
    return np.frombuffer(data, "<f4", 2 * w * h, FLO_HEADER).reshape(h, w, 2).copy()


def write_flo(path, flow):
    flow = np.asarray(flow, dtype="<f4")
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError("flow must have shape (H, W, 2)")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(np.array([FLO_MAGIC], "<f4").tobytes())
        f.write(np.array([w, h], "<i4").tobytes())
        f.write(flow.tobytes())


_PGM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pgm(path, normalize=True) -> np.ndarray:
    """Read a binary (P5) PGM.

    With ``normalize`` the samples are rescaled to ``[0, 255]`` floats so 8-
    and 16-bit files share one intensity scale; otherwise raw integers are
    returned.
    """
    data = Path(path).read_bytes()
    pos, fields = 0, []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise PGMError(f"{path}: incomplete PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise PGMError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(v) for v in fields[1:])
    except ValueError as exc:
        raise PGMError(f"{path}: malformed header") from exc
    if w <= 0 or h <= 0 or not 0 < maxval <= 65535:
        raise PGMError(f"{path}: bad header values {w} x {h}, maxval {maxval}")
    pos += 1  # single whitespace before the raster
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    n = w * h * dtype.itemsize
    if len(data) - pos < n:
        raise PGMError(f"{path}: truncated raster, expected {n} bytes, got {len(data) - pos}")
    img = np.frombuffer(data, dtype, w * h, pos).reshape(h, w)
    if normalize:
        return img.astype(float) * (255.0 / maxval)
    return img.astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path, image, maxval=255):
    """Write integer samples in ``[0, maxval]`` (16-bit big-endian above 255)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if not 0 < maxval <= 65535:
        raise ValueError("maxval must lie in 1..65535")
    if img.min(initial=0) < 0 or img.max(initial=0) > maxval:
        raise ValueError("samples outside [0, maxval]")
    dtype = "u1" if maxval < 256 else ">u2"
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode())
        f.write(np.rint(img).astype(dtype).tobytes())


def quantize(image, maxval=65535):
    """Map ``[0, 255]`` intensities to integer samples for :func:`write_pgm`."""
    return np.rint(np.clip(image, 0, 255) * (maxval / 255.0))


def load_sequence(directory):
    """Frames of a directory of ``.pgm`` files in name order, ``(F, H, W)``."""
    files = sorted(Path(directory).glob("*.pgm"))
    if len(files) < 2:
        raise ValueError(f"{directory}: need at least two .pgm frames, found {len(files)}")
    frames = [read_pgm(f) for f in files]
    if any(f.shape != frames[0].shape for f in frames):
        raise ValueError(f"{directory}: frames differ in size")
    return np.stack(frames)
