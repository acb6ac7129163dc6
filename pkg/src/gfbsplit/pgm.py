"""Binary 8-bit PGM (P5) reading and writing, intensities mapped to [0, 1]."""

import re

import numpy as np

_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+"
                     rb"(?:#[^\n]*\n\s*)*(\d+)\s")


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    m = _HEADER.match(data)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval={maxval})")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=m.end())
    return pixels.reshape(height, width).astype(float) / maxval


def write_pgm(path, image):
    """Write ``image`` (clipped to [0, 1]) as an 8-bit P5 file."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    height, width = img.shape
    pixels = np.round(img * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
