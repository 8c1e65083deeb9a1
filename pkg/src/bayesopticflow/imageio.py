"""Netpbm PGM reading/writing, intensity normalization and bilinear resizing.

Synthetic second images can leave ``[0, 1]``. When written by
:func:`to_raw` they carry an ``intensity-range lo hi`` comment so that
:func:`normalize` maps the integer samples back onto ``[lo, hi]``
instead of ``[0, 1]``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, PGMParseError
from .grid import GridSpec, ImageField

_WS = b" \t\n\r\v\f"
_RANGE_RE = re.compile(r"^\s*intensity-range\s+(\S+)\s+(\S+)\s*$")


@dataclass(frozen=True)
class RawImage:
    """Grayscale raster, ``pixels[row, col]`` with row 0 at the top."""

    width: int
    height: int
    maxval: int
    pixels: np.ndarray = field(repr=False)
    comments: tuple[str, ...] = ()

    def __post_init__(self):
        if not 1 <= self.maxval <= 65535:
            raise DomainError(f"maxval must be in 1..65535, got {self.maxval}")
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width):
            raise DomainError(f"pixel array shape {px.shape} != ({self.height}, {self.width})")
        if px.size and (px.min() < 0 or px.max() > self.maxval):
            raise DomainError("pixel values outside 0..maxval")
        object.__setattr__(self, "pixels", px.astype(np.int64))


class _Header:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.comments = []

    def skip(self):
        data = self.data
        while self.pos < len(data):
            c = data[self.pos:self.pos + 1]
            if c in _WS and c:
                self.pos += 1
            elif c == b"#":
                end = data.find(b"\n", self.pos)
                end = len(data) if end < 0 else end
                self.comments.append(data[self.pos + 1:end].decode("latin-1").strip())
                self.pos = end
            else:
                break

    def integer(self, what: str) -> int:
        self.skip()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos:self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            if start >= len(self.data):
                raise PGMParseError(f"truncated header, expected {what}", start)
            raise PGMParseError(f"expected {what}", start)
        return int(self.data[start:self.pos])


def read_pgm(data: bytes) -> RawImage:
    """Parse a plain (``P2``) or raw (``P5``) PGM."""
    if len(data) < 2:
        raise PGMParseError("truncated magic number", 0)
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMParseError(f"unsupported magic {magic!r}, only P2/P5 grayscale", 0)
    h = _Header(data)
    h.pos = 2
    width = h.integer("width")
    height = h.integer("height")
    maxval = h.integer("maxval")
    if width < 1 or height < 1:
        raise PGMParseError("width and height must be positive", h.pos)
    if not 1 <= maxval <= 65535:
        raise PGMParseError(f"maxval {maxval} outside 1..65535", h.pos)
    count = width * height

    if magic == b"P5":
        if h.pos >= len(data) or data[h.pos:h.pos + 1] not in _WS:
            raise PGMParseError("missing whitespace after maxval", h.pos)
        start = h.pos + 1
        nbytes = 1 if maxval < 256 else 2
        need = count * nbytes
        if len(data) - start < need:
            raise PGMParseError(f"truncated raster, need {need} bytes, have {len(data) - start}", len(data))
        dtype = np.uint8 if nbytes == 1 else np.dtype(">u2")
        px = np.frombuffer(data, dtype=dtype, count=count, offset=start).astype(np.int64)
        bad = np.flatnonzero(px > maxval)
        if bad.size:
            raise PGMParseError(f"sample {px[bad[0]]} exceeds maxval {maxval}", start + bad[0] * nbytes)
    else:
        px = np.empty(count, dtype=np.int64)
        for k in range(count):
            h.skip()
            offset = h.pos
            value = h.integer(f"sample {k}")
            if value > maxval:
                raise PGMParseError(f"sample {value} exceeds maxval {maxval}", offset)
            px[k] = value
    return RawImage(width, height, maxval, px.reshape(height, width), tuple(h.comments))


def write_pgm(img: RawImage) -> bytes:
    """Encode as binary ``P5`` (two big-endian bytes per sample when maxval > 255)."""
    head = [b"P5\n"]
    for c in img.comments:
        head.append(b"# " + c.encode("latin-1") + b"\n")
    head.append(f"{img.width} {img.height}\n{img.maxval}\n".encode("ascii"))
    dtype = np.uint8 if img.maxval < 256 else np.dtype(">u2")
    return b"".join(head) + img.pixels.astype(dtype).tobytes()


def _intensity_range(img: RawImage):
    for c in img.comments:
        m = _RANGE_RE.match(c)
        if m:
            return float(m.group(1)), float(m.group(2))
    return 0.0, 1.0


def normalize(img: RawImage) -> ImageField:
    """Scale samples to intensities and transpose to the ``F[i, j]`` convention.

    ``i`` runs along image columns (x) and ``j`` along rows (y).
    """
    lo, hi = _intensity_range(img)
    data = lo + (hi - lo) * (img.pixels.T.astype(float) / img.maxval)
    return ImageField(GridSpec(img.width, img.height), data)


def to_raw(F: ImageField, maxval: int = 65535) -> RawImage:
    """Quantize an image for writing. Out-of-range images get a range comment."""
    data = F.data
    lo = min(0.0, float(data.min()))
    hi = max(1.0, float(data.max()))
    comments = ()
    if (lo, hi) != (0.0, 1.0):
        comments = (f"intensity-range {lo!r} {hi!r}",)
    px = np.rint((data.T - lo) / (hi - lo) * maxval).astype(np.int64)
    return RawImage(F.grid.n_x, F.grid.n_y, maxval, np.clip(px, 0, maxval), comments)


def resize_bilinear(img: ImageField, new_nx: int, new_ny: int) -> ImageField:
    """Bilinear resampling with corner-aligned sample positions."""
    if new_nx < 2 or new_ny < 2:
        raise DomainError(f"target size must be at least 2x2, got {new_nx}x{new_ny}")
    src = img.data
    nx, ny = src.shape

    def weights(n_src, n_new):
        s = np.arange(n_new) * ((n_src - 1) / (n_new - 1))
        i0 = np.minimum(np.floor(s).astype(np.int64), n_src - 2)
        return i0, s - i0

    i0, tx = weights(nx, new_nx)
    j0, ty = weights(ny, new_ny)
    rows = src[i0] * (1 - tx)[:, None] + src[i0 + 1] * tx[:, None]
    out = rows[:, j0] * (1 - ty)[None, :] + rows[:, j0 + 1] * ty[None, :]
    out = np.clip(out, src.min(), src.max())
    return ImageField(GridSpec(new_nx, new_ny), out)


def load_image(path) -> ImageField:
    with open(path, "rb") as fh:
        return normalize(read_pgm(fh.read()))


def save_image(path, F: ImageField, maxval: int = 65535) -> None:
    with open(path, "wb") as fh:
        fh.write(write_pgm(to_raw(F, maxval)))
