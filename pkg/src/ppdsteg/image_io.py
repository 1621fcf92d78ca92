"""8-bit grayscale rasters and their on-disk formats.

Binary PGM (P5, maxval 255) is the interchange format and is read and
written bit-exactly. 8-bit PNG is accepted on input only. Colour PNGs are
rejected when ``strict=True``; otherwise they are reduced to luma with
integer BT.601 weights, rounding half up::

    Y = (299 R + 587 G + 114 B + 500) // 1000
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MIN_SIDE = 3


class ImageFormatError(ValueError):
    """Raised for unreadable, unsupported or invalid image data."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable 8-bit single-channel image, stored row-major as (H, W)."""

    pixels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.pixels)
        if a.ndim != 2:
            raise ImageFormatError(f"expected a 2-D raster, got shape {a.shape}")
        if a.dtype != np.uint8:
            if a.size and (a.min() < 0 or a.max() > 255):
                raise ImageFormatError("pixel values outside [0, 255]")
            if np.issubdtype(a.dtype, np.floating) and not np.all(a == np.round(a)):
                raise ImageFormatError("non-integer pixel values")
        h, w = a.shape
        if h < MIN_SIDE or w < MIN_SIDE:
            raise ImageFormatError(f"image {w}x{h} is smaller than {MIN_SIDE}x{MIN_SIDE}")
        a = np.array(a, dtype=np.uint8, order="C", copy=True)
        a.setflags(write=False)
        object.__setattr__(self, "pixels", a)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"GrayImage(W={self.width}, H={self.height})"


def as_array(img):
    """Return the uint8 (H, W) raster behind a GrayImage or array-like."""
    if isinstance(img, GrayImage):
        return img.pixels
    return GrayImage(img).pixels


def _read_token(data, pos):
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PGM header")
    return data[start:pos], pos


def parse_pgm(data):
    """Decode the bytes of a binary P5 file with maxval 255."""
    if data[:2] != b"P5":
        raise ImageFormatError("not a binary PGM (P5) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"bad PGM header field {tok!r}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval} (only 255 is accepted)")
    if width < MIN_SIDE or height < MIN_SIDE:
        raise ImageFormatError(f"image {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("truncated PGM header")
    pos += 1
    size = width * height
    raster = data[pos:pos + size]
    if len(raster) != size:
        raise ImageFormatError(f"expected {size} raster bytes, found {len(raster)}")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def encode_pgm(img):
    a = as_array(img)
    h, w = a.shape
    return b"P5\n%d %d\n255\n" % (w, h) + a.tobytes()


def luma_bt601(rgb):
    """Integer BT.601 luma of an (H, W, 3) uint8 array, rounding half up."""
    rgb = rgb.astype(np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def _load_png(path, strict):
    from PIL import Image

    with Image.open(path) as im:
        if im.format != "PNG":
            raise ImageFormatError(f"{path}: unsupported format {im.format}")
        mode = im.mode
        if mode == "L":
            return GrayImage(np.asarray(im))
        if mode in ("I;16", "I;16B", "I", "F"):
            raise ImageFormatError(f"{path}: only 8-bit images are supported (mode {mode})")
        if strict:
            raise ImageFormatError(f"{path}: colour image rejected in strict mode (mode {mode})")
        if mode == "P" or mode == "1" or mode == "LA":
            im = im.convert("RGB")
        elif mode == "RGBA":
            im = im.convert("RGB")
        elif mode != "RGB":
            raise ImageFormatError(f"{path}: unsupported PNG mode {mode}")
        return GrayImage(luma_bt601(np.asarray(im)))


def load_image(path, strict=False):
    """Load a P5 PGM or 8-bit PNG file as a GrayImage."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if data[:2] == b"P5":
        return parse_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path, strict)
    raise ImageFormatError(f"{path}: unsupported image format")


def save_image(img, path):
    """Write a GrayImage as binary PGM (P5)."""
    if not isinstance(img, GrayImage):
        img = GrayImage(img)
    path = Path(path)
    try:
        path.write_bytes(encode_pgm(img))
    except OSError as exc:
        raise ImageFormatError(f"cannot write {path}: {exc}") from exc


def list_images(directory):
    """Sorted image files (.pgm, .png) directly inside ``directory``."""
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in (".pgm", ".png"))
