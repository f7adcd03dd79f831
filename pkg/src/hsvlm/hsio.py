"""Scene containers, binary formats, PCA, padding, patches, splits, batches.

File formats (little-endian throughout):
    .hsc  "HSC1" | u32 H | u32 W | u32 D | H*W*D float32, (h, w, d) order
    .hsl  "HSL1" | u32 H | u32 W | H*W u16 labels, row-major
    split .json  {seed, fraction, train: [[h,w],...], test: [[h,w],...]}
"""

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import (BadMagic, DimensionOverflow, EmptyClass, OutOfBounds,
                     RankDeficient, ShapeMismatch, TruncatedPayload)
from .rng import Rng, derive_rng

MAX_ELEMENTS = 2 ** 31


# ----------------------------------------------------------------- containers

@dataclass
class SceneCube:
    values: np.ndarray  # (H, W, D) float32

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeMismatch(f"cube must be 3-d, got {self.values.shape}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)

    @property
    def shape(self):
        return self.values.shape


@dataclass
class LabelMap:
    labels: np.ndarray  # (H, W) uint16, 0 = background

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ShapeMismatch(f"labels must be 2-d, got {self.labels.shape}")
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint16)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max())


@dataclass
class PcaModel:
    mean: np.ndarray        # (D,)
    components: np.ndarray  # (k, D) orthonormal rows
    eigenvalues: np.ndarray  # (k,) nonincreasing


@dataclass
class SplitIndex:
    train: np.ndarray  # (n_train, 2) int32 pixel coords
    test: np.ndarray   # (n_test, 2)
    per_class_counts: dict
    seed: int
    fraction: float


# --------------------------------------------------------------------- loaders

def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedPayload(f"expected {n} bytes of {what}, got {len(buf)}")
    return buf


def save_cube(cube: SceneCube, path):
    h, w, d = cube.shape
    with open(path, "wb") as f:
        f.write(b"HSC1")
        f.write(struct.pack("<III", h, w, d))
        f.write(cube.values.astype("<f4").tobytes())


def load_cube(path) -> SceneCube:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != b"HSC1":
            raise BadMagic(f"bad cube magic {magic!r}")
        h, w, d = struct.unpack("<III", _read_exact(f, 12, "header"))
        if h * w * d > MAX_ELEMENTS:
            raise DimensionOverflow(f"{h}x{w}x{d} exceeds 2^31 elements")
        payload = _read_exact(f, h * w * d * 4, "cube payload")
        values = np.frombuffer(payload, dtype="<f4").reshape(h, w, d)
    return SceneCube(values.copy())


def save_labels(labels: LabelMap, path):
    h, w = labels.labels.shape
    with open(path, "wb") as f:
        f.write(b"HSL1")
        f.write(struct.pack("<II", h, w))
        f.write(labels.labels.astype("<u2").tobytes())


def load_labels(path) -> LabelMap:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != b"HSL1":
            raise BadMagic(f"bad label magic {magic!r}")
        h, w = struct.unpack("<II", _read_exact(f, 8, "header"))
        if h * w > MAX_ELEMENTS:
            raise DimensionOverflow(f"{h}x{w} exceeds 2^31 elements")
        payload = _read_exact(f, h * w * 2, "label payload")
        labels = np.frombuffer(payload, dtype="<u2").reshape(h, w)
    return LabelMap(labels.copy())


# ---------------------------------------------------------------- preprocessing

def minmax_scale_bands(cube: SceneCube) -> SceneCube:
    """Map each band to [0, 1] independently; constant bands become zero."""
    v = cube.values.astype(np.float64)
    lo = v.min(axis=(0, 1))
    hi = v.max(axis=(0, 1))
    span = hi - lo
    span[span == 0] = 1.0
    out = (v - lo) / span
    out[:, :, hi == lo] = 0.0
    return SceneCube(out.astype(np.float32))


def pca_fit(cube: SceneCube, k: int = 25) -> PcaModel:
    h, w, d = cube.shape
    if d < k:
        raise RankDeficient(f"cube depth {d} < requested components {k}")
    x = cube.values.reshape(h * w, d).astype(np.float64)
    mean = x.mean(axis=0)
    xc = x - mean
    denom = max(x.shape[0] - 1, 1)
    cov = (xc.T @ xc) / denom
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    vals = eigvals[order]
    comps = eigvecs[:, order].T  # (k, D)
    # sign convention: largest-magnitude entry of each row positive
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return PcaModel(mean=mean.astype(np.float64),
                    components=comps.astype(np.float64),
                    eigenvalues=vals.astype(np.float64))


def pca_transform(cube: SceneCube, model: PcaModel) -> SceneCube:
    h, w, d = cube.shape
    if d != model.mean.shape[0]:
        raise ShapeMismatch(f"cube depth {d} vs PCA mean {model.mean.shape[0]}")
    x = cube.values.reshape(h * w, d).astype(np.float64) - model.mean
    out = x @ model.components.T
    return SceneCube(out.reshape(h, w, -1).astype(np.float32))


def pad_scene(cube: SceneCube, radius: int) -> SceneCube:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return SceneCube(cube.values.copy())
    out = np.pad(cube.values, ((radius, radius), (radius, radius), (0, 0)))
    return SceneCube(out)


def extract_patch(padded: SceneCube, center, window: int) -> np.ndarray:
    """Patch around an *unpadded* center coordinate; padding radius (S-1)/2."""
    h, w = int(center[0]), int(center[1])
    r = (window - 1) // 2
    ph, pw, _ = padded.shape
    if not (0 <= h <= ph - window and 0 <= w <= pw - window):
        raise OutOfBounds(f"center ({h},{w}) with window {window} in {padded.shape}")
    return padded.values[h:h + window, w:w + window, :].copy()


def extract_patch_batch(padded: SceneCube, coords: np.ndarray, window: int) -> np.ndarray:
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    ph, pw, _ = padded.shape
    if coords.size and (coords.min() < 0 or coords[:, 0].max() > ph - window
                        or coords[:, 1].max() > pw - window):
        raise OutOfBounds("patch batch coordinate outside padded scene")
    return backend.extract_patches(padded.values, coords, window)


# --------------------------------------------------------------------- splits

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(labels: LabelMap, fraction: float, seed: int) -> SplitIndex:
    """Per-class seeded split: train count = max(1, round-half-up(f * n_c))."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    lab = labels.labels
    c = labels.num_classes
    rng = Rng(seed)
    train_parts, test_parts, counts = [], [], {}
    for cls in range(1, c + 1):
        coords = np.argwhere(lab == cls)  # row-major scan order
        n = coords.shape[0]
        if n == 0:
            raise EmptyClass(f"class {cls} has no labeled pixels")
        n_train = max(1, _round_half_up(fraction * n))
        perm = rng.permutation(n)
        train_parts.append(coords[perm[:n_train]])
        test_parts.append(coords[perm[n_train:]])
        counts[cls] = {"total": n, "train": n_train, "test": n - n_train}
    return SplitIndex(train=np.concatenate(train_parts).astype(np.int32),
                      test=np.concatenate(test_parts).astype(np.int32),
                      per_class_counts=counts, seed=seed, fraction=fraction)


def save_split(split: SplitIndex, path):
    doc = {"seed": split.seed, "fraction": split.fraction,
           "train": split.train.tolist(), "test": split.test.tolist()}
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))


def load_split(path) -> SplitIndex:
    with open(path) as f:
        doc = json.load(f)
    return SplitIndex(train=np.asarray(doc["train"], dtype=np.int32).reshape(-1, 2),
                      test=np.asarray(doc["test"], dtype=np.int32).reshape(-1, 2),
                      per_class_counts={}, seed=int(doc["seed"]),
                      fraction=float(doc["fraction"]))


def batch_iter(coords: np.ndarray, batch_size: int, seed: int, epoch: int):
    """Seeded per-epoch shuffle; yields coordinate chunks, final partial kept."""
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    n = coords.shape[0]
    rng = derive_rng(seed, epoch)
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield coords[perm[start:start + batch_size]]
