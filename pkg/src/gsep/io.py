"""Raw and PGM image files, atomic writes, and the flat key-value config format."""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"GSEP"
HEADER = struct.Struct("<4sII4x")  # magic, n, flags, 4 reserved bytes


class FormatError(ValueError):
    pass


def atomic_write(path, data, mode="wb"):
    """Write to a temp file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_raw(img, flags=0):
    img = np.asarray(img, dtype=np.complex128)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise FormatError("raw format stores square images only")
    body = np.ascontiguousarray(img).view("<f8").astype("<f8", copy=False).tobytes()
    return HEADER.pack(MAGIC, img.shape[0], flags) + body


def decode_raw(buf):
    if len(buf) < HEADER.size:
        raise FormatError("truncated header")
    magic, n, flags = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    expected = HEADER.size + 16 * n * n
    if len(buf) != expected:
        raise FormatError(f"expected {expected} bytes, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<f8", offset=HEADER.size)
    img = (data[0::2] + 1j * data[1::2]).reshape(n, n)
    return img, flags


def write_raw(path, img, flags=0):
    atomic_write(path, encode_raw(img, flags))


def read_raw(path):
    with open(path, "rb") as fh:
        return decode_raw(fh.read())[0]


def encode_pgm(img):
    """8-bit binary PGM of the real part, min-max scaled."""
    re = np.real(np.asarray(img))
    lo, hi = float(re.min()), float(re.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.round((re - lo) * scale).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def write_pgm(path, img):
    atomic_write(path, encode_pgm(img))


def read_pgm(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    parts = buf.split(maxsplit=4)
    if parts[0] != b"P5":
        raise FormatError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def parse_kv(text):
    """Parse ``key = value`` lines; '#' starts a comment.  Values stay strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"line {lineno}: empty key")
        out[key] = value
    return out


def read_kv(path):
    with open(path) as fh:
        return parse_kv(fh.read())


def format_kv(items):
    return "".join(f"{k} = {v}\n" for k, v in items.items())
