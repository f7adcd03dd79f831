"""Writers for the hsvlm binary container formats.

Kept independent of the hsvlm package on purpose: the file formats are
the contract between the two tools.

    .hsc  "HSC1" | u32 H | u32 W | u32 D | H*W*D float32, (h, w, d) order
    .hsl  "HSL1" | u32 H | u32 W | H*W u16 labels, row-major
    .hsp  "HSP1" | u32 C | u32 d | C records of
          (u16 name length | utf-8 name | d float32)

Everything is little-endian.
"""

import struct

import numpy as np


def write_cube(values: np.ndarray, path):
    if values.ndim != 3:
        raise ValueError(f"cube must be 3-d, got {values.shape}")
    h, w, d = values.shape
    with open(path, "wb") as f:
        f.write(b"HSC1")
        f.write(struct.pack("<III", h, w, d))
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def write_labels(labels: np.ndarray, path):
    if labels.ndim != 2:
        raise ValueError(f"labels must be 2-d, got {labels.shape}")
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(b"HSL1")
        f.write(struct.pack("<II", h, w))
        f.write(np.ascontiguousarray(labels, dtype="<u2").tobytes())


def write_prototypes(names, matrix: np.ndarray, path):
    c, d = matrix.shape
    if len(names) != c:
        raise ValueError(f"{len(names)} names for {c} rows")
    with open(path, "wb") as f:
        f.write(b"HSP1")
        f.write(struct.pack("<II", c, d))
        for name, row in zip(names, matrix):
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(np.ascontiguousarray(row, dtype="<f4").tobytes())
