"""Binary PPM (P6) and PGM (P5) image files, 8 bits per channel.

PPM is the required ingestion format; PNG works too when pillow happens to
be installed.
"""

from __future__ import annotations

import numpy as np


def _read_token(f):
    # tokens are separated by whitespace; '#' starts a comment to end of line
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise ValueError("unexpected end of PNM header")
        if ch == b"#":
            while ch and ch != b"\n":
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_ppm(path):
    """Read a binary P6 PPM (or P5 PGM) into a uint8 array [H, W, 3|1]."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic not in (b"P6", b"P5"):
            raise ValueError(f"{path}: unsupported PNM magic {magic!r} (need P6 or P5)")
        w = int(_read_token(f))
        h = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 255:
            raise ValueError(f"{path}: only 8-bit images supported, maxval={maxval}")
        channels = 3 if magic == b"P6" else 1
        raw = f.read(w * h * channels)
        if len(raw) != w * h * channels:
            raise ValueError(f"{path}: truncated pixel payload")
        return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, channels)


def write_ppm(path, pixels):
    """Write a uint8 [H, W, 3] array as binary P6."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"P6 needs [H, W, 3] pixels, got {pixels.shape}")
    h, w, _ = pixels.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())


def write_pgm(path, pixels):
    """Write a uint8 [H, W] array as binary P5."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError(f"P5 needs [H, W] pixels, got {pixels.shape}")
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())


def read_image(path):
    """Read PPM natively; fall back to pillow for other formats if present.

    Returns float32 [H, W, 3] scaled to [0, 1].
    """
    p = str(path)
    if p.endswith((".ppm", ".pgm", ".pnm")):
        arr = read_ppm(p)
    else:
        try:
            from PIL import Image
        except ImportError:
            raise ValueError(
                f"{path}: only PPM is supported without pillow installed"
            ) from None
        arr = np.asarray(Image.open(p).convert("RGB"))
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr.astype(np.float32) / 255.0
