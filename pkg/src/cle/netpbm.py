"""Minimal reader/writer for the PGM (P2/P5) and PPM (P3/P6) formats."""
import re

import numpy as np

_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*([^\s#]+)")


def _header(data, count):
    values = []
    pos = 0
    while len(values) < count:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ValueError("truncated netpbm header")
        values.append(m.group(2))
        pos = m.end()
    return values, pos


def _parse(data):
    (magic, w, h, maxval), pos = _header(data, 4)
    magic = magic.decode("ascii")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r}")
    width, height, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise ValueError(f"bad maxval {maxval}")
    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels
    if magic in ("P2", "P3"):
        pixels = np.array(data[pos:].split()[:count], dtype=np.int64)
    else:
        # exactly one whitespace byte separates the header from the raster
        raster = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        pixels = np.frombuffer(raster, dtype=dtype, count=count).astype(np.int64)
    if pixels.size != count:
        raise ValueError("truncated netpbm raster")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return magic, pixels.reshape(shape), maxval


def read_pgm(path):
    """Read a graymap as an ``(H, W)`` int array."""
    with open(path, "rb") as fh:
        magic, pixels, _ = _parse(fh.read())
    if magic not in ("P2", "P5"):
        raise ValueError(f"{path}: expected PGM, got {magic}")
    return pixels


def read_ppm(path):
    """Read a pixmap as an ``(H, W, 3)`` uint8 array (maxval must be ≤ 255)."""
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def decode_ppm(data):
    magic, pixels, maxval = _parse(data)
    if magic not in ("P3", "P6"):
        raise ValueError(f"expected PPM, got {magic}")
    if maxval > 255:
        raise ValueError("16-bit PPM images are not supported")
    return pixels.astype(np.uint8)


def encode_ppm(image):
    image = np.asarray(image)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    h, w = image.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(image, dtype=np.uint8).tobytes()


def write_ppm(path, image):
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


def write_pgm(path, pixels, plain=False):
    pixels = np.asarray(pixels, dtype=np.int64)
    h, w = pixels.shape
    maxval = max(int(pixels.max(initial=0)), 1)
    if maxval > 65535:
        raise ValueError("PGM values must be < 65536")
    if plain:
        body = "\n".join(" ".join(str(v) for v in row) for row in pixels)
        data = f"P2\n{w} {h}\n{maxval}\n{body}\n".encode("ascii")
    else:
        dtype = ">u2" if maxval > 255 else "u1"
        data = f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + pixels.astype(dtype).tobytes()
    with open(path, "wb") as fh:
        fh.write(data)
