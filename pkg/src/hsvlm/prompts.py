"""Class prompt rendering and prototype-file handling.

Prototype file (.hsp):
    "HSP1" | u32 C | u32 d | C records of
    (u16 name length | UTF-8 name | d float32 values), little-endian.
Rows are l2-normalized on load; the matrix is consumed read-only by the
training and retrieval paths.
"""

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BadMagic, DimMismatch, DuplicateName, TruncatedPayload
from .numcore import l2_normalize_rows
from .rng import Rng


class PromptKind(str, Enum):
    LABEL_ONLY = "label_only"
    SHORT_TEXT = "short_text"
    DESCRIPTIVE = "descriptive"


DESCRIPTIVE_TEMPLATE = (
    "This image shows a large cultivated field of {cls}, "
    "where {cls} plants are densely grown in rows; "
    "the vivid green {cls} vegetation is clearly visible from an aerial perspective."
)

SHORT_TEXT_TEMPLATE = "an aerial hyperspectral image of {cls}"


def render_prompt(class_name: str, kind: PromptKind) -> str:
    if not class_name:
        raise ValueError("class name must be nonempty")
    kind = PromptKind(kind)
    if kind is PromptKind.LABEL_ONLY:
        return class_name
    if kind is PromptKind.SHORT_TEXT:
        return SHORT_TEXT_TEMPLATE.format(cls=class_name)
    return DESCRIPTIVE_TEMPLATE.format(cls=class_name)


@dataclass
class PrototypeSet:
    names: list
    matrix: np.ndarray  # (C, d) float32, unit rows

    @property
    def num_classes(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])


def save_prototypes(protos: PrototypeSet, path):
    c, d = protos.matrix.shape
    with open(path, "wb") as f:
        f.write(b"HSP1")
        f.write(struct.pack("<II", c, d))
        for name, row in zip(protos.names, protos.matrix):
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(row.astype("<f4").tobytes())


def load_prototypes(path) -> PrototypeSet:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != b"HSP1":
            raise BadMagic(f"bad prototype magic {magic!r}")
        header = f.read(8)
        if len(header) != 8:
            raise TruncatedPayload("prototype header truncated")
        c, d = struct.unpack("<II", header)
        names, rows = [], []
        for i in range(c):
            lenbuf = f.read(2)
            if len(lenbuf) != 2:
                raise DimMismatch(f"record {i}: name length truncated")
            (nlen,) = struct.unpack("<H", lenbuf)
            name = f.read(nlen)
            if len(name) != nlen:
                raise DimMismatch(f"record {i}: name truncated")
            payload = f.read(d * 4)
            if len(payload) != d * 4:
                raise DimMismatch(f"record {i}: expected {d} values")
            names.append(name.decode("utf-8"))
            rows.append(np.frombuffer(payload, dtype="<f4"))
        if f.read(1):
            raise DimMismatch("trailing bytes after last record")
    if len(set(names)) != len(names):
        raise DuplicateName("prototype class names must be unique")
    matrix = l2_normalize_rows(np.stack(rows))
    return PrototypeSet(names=names, matrix=matrix.astype(np.float32))


def synth_prototypes(c: int, d: int, seed: int) -> PrototypeSet:
    """Seeded random unit vectors, a stand-in for real text embeddings."""
    if c < 2 or d < 8:
        raise ValueError("need C >= 2 and d >= 8")
    rng = Rng(seed, stream=91)
    matrix = l2_normalize_rows(rng.normal((c, d), dtype=np.float32))
    names = [f"class_{i + 1}" for i in range(c)]
    return PrototypeSet(names=names, matrix=matrix)
