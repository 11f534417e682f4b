"""PGM (visual, min-max scaled) and PFM (lossless float) image files."""

from __future__ import annotations

import sys

import numpy as np

__all__ = ["write_pgm", "read_pgm", "write_pfm", "read_pfm"]


def write_pgm(path, image, bits=8):
    """Write ``image`` min-max scaled to an 8- or 16-bit binary PGM."""
    img = np.asarray(image, dtype=np.float64)
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = 255 if bits == 8 else 65535
    lo, hi = float(np.min(img)), float(np.max(img))
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    q = np.round(scaled * maxval)
    data = q.astype(">u1" if bits == 8 else ">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    header = []
    pos = 0
    while len(header) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        header.append(raw[start:pos].decode("ascii"))
    pos += 1
    magic, w, h, maxval = header[0], int(header[1]), int(header[2]), int(header[3])
    if magic != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    dtype = ">u1" if maxval < 256 else ">u2"
    return np.frombuffer(raw[pos:], dtype=dtype, count=w * h).reshape(h, w)


def write_pfm(path, image):
    """Single-channel PFM; rows are stored bottom-to-top per the format."""
    img = np.asarray(image, dtype=np.float32)
    scale = -1.0 if sys.byteorder == "little" else 1.0
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{img.shape[1]} {img.shape[0]}\n{scale}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img[::-1]).tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM")
        w, h = (int(v) for v in fh.readline().split())
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(), dtype=dtype, count=w * h)
    return data.reshape(h, w)[::-1].astype(np.float32)
