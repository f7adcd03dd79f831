"""Small ViT over 3x3 spatial tokens, projected to the shared text space.

The class-token readout is projected (no bias) to the prototype
dimension and l2-normalized, so every embedding lives on the unit
sphere. One learnable scalar (logit_scale) owns the temperature,
tau = exp(logit_scale).

Checkpoint file (.hsm):
    "HSM1" | u32 version | u32 config-hash | named sections, each
    (u16 name length | name | u32 rank | rank * u32 dims | float32 payload).
"""

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (BadMagic, InvalidConfig, ShapeMismatch, TruncatedPayload,
                     VersionMismatch)
from .rng import Rng

CHECKPOINT_VERSION = 1
LOGIT_SCALE_INIT = math.log(1.0 / 0.07)
TAU_MAX = 100.0


@dataclass
class VisionConfig:
    window: int = 15
    token_edge: int = 3
    depth: int = 25
    embed: int = 64
    layers: int = 6
    heads: int = 16
    mlp: int = 64
    proj: int = 1024
    mask_ratio: float = 0.0
    init_std: float = 0.02

    def validate(self):
        if self.window % 2 == 0 or self.window % self.token_edge != 0:
            raise InvalidConfig("window must be odd and divisible by the token edge")
        if self.embed % self.heads != 0:
            raise InvalidConfig("embed dim must divide evenly into heads")
        if not (0.0 <= self.mask_ratio < 1.0):
            raise InvalidConfig("mask ratio must lie in [0, 1)")
        if min(self.depth, self.embed, self.layers, self.heads,
               self.mlp, self.proj) < 1:
            raise InvalidConfig("all dimensions must be positive")

    @property
    def tokens(self) -> int:
        return (self.window // self.token_edge) ** 2

    @property
    def token_dim(self) -> int:
        return self.token_edge * self.token_edge * self.depth

    def as_tuple(self):
        # floats go through f4 so the hash survives a checkpoint round trip
        return (self.window, self.token_edge, self.depth, self.embed,
                self.layers, self.heads, self.mlp, self.proj,
                float(np.float32(self.mask_ratio)),
                float(np.float32(self.init_std)))


def config_hash(config: VisionConfig) -> int:
    return zlib.crc32(repr(config.as_tuple()).encode()) & 0xFFFFFFFF


def _param_specs(config: VisionConfig):
    """Ordered (name, shape, section, kind) for every trainable tensor."""
    e, m = config.embed, config.mlp
    specs = [
        ("patch_embed.w", (config.token_dim, e), "patch_embed", "weight"),
        ("patch_embed.b", (e,), "patch_embed", "zero"),
        ("cls_token", (e,), "class_token", "weight"),
        ("pos_embed", (1 + config.tokens, e), "positional", "weight"),
    ]
    for i in range(config.layers):
        p = f"block{i}."
        specs += [
            (p + "ln1.g", (e,), "blocks", "one"),
            (p + "ln1.b", (e,), "blocks", "zero"),
            (p + "qkv.w", (e, 3 * e), "blocks", "weight"),
            (p + "qkv.b", (3 * e,), "blocks", "zero"),
            (p + "attn_out.w", (e, e), "blocks", "weight"),
            (p + "attn_out.b", (e,), "blocks", "zero"),
            (p + "ln2.g", (e,), "blocks", "one"),
            (p + "ln2.b", (e,), "blocks", "zero"),
            (p + "mlp1.w", (e, m), "blocks", "weight"),
            (p + "mlp1.b", (m,), "blocks", "zero"),
            (p + "mlp2.w", (m, e), "blocks", "weight"),
            (p + "mlp2.b", (e,), "blocks", "zero"),
        ]
    specs += [
        ("final_ln.g", (e,), "final_ln", "one"),
        ("final_ln.b", (e,), "final_ln", "zero"),
        ("proj.w", (e, config.proj), "projection", "weight"),
        ("logit_scale", (), "logit_scale", "logit_scale"),
    ]
    return specs


@dataclass
class VisionModel:
    config: VisionConfig
    params: dict = field(default_factory=dict)

    def parameter_items(self):
        return list(self.params.items())

    def astype(self, dtype) -> "VisionModel":
        return VisionModel(self.config,
                           {k: v.astype(dtype) for k, v in self.params.items()})

    @property
    def tau(self) -> float:
        return float(np.exp(self.params["logit_scale"]))


def init_model(config: VisionConfig, seed: int) -> VisionModel:
    config.validate()
    rng = Rng(seed, stream=17)
    params = {}
    for name, shape, _section, kind in _param_specs(config):
        if kind == "weight":
            params[name] = rng.truncated_normal(shape, config.init_std)
        elif kind == "zero":
            params[name] = np.zeros(shape, dtype=np.float32)
        elif kind == "one":
            params[name] = np.ones(shape, dtype=np.float32)
        else:  # logit_scale
            params[name] = np.asarray(LOGIT_SCALE_INIT, dtype=np.float32)
    return VisionModel(config, params)


def count_params(model: VisionModel) -> dict:
    sections = {}
    for _name, shape, section, _kind in _param_specs(model.config):
        n = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
        sections[section] = sections.get(section, 0) + n
    sections["total"] = sum(v for k, v in sections.items())
    return sections


def patches_to_tokens(patches: np.ndarray, config: VisionConfig) -> np.ndarray:
    """(N, S, S, D) -> (N, T, token_dim): non-overlapping 3x3 blocks, flattened."""
    n, s1, s2, d = patches.shape
    if s1 != config.window or s2 != config.window or d != config.depth:
        raise ShapeMismatch(
            f"patches {patches.shape[1:]} vs config "
            f"({config.window}, {config.window}, {config.depth})")
    g = config.window // config.token_edge
    te = config.token_edge
    x = patches.reshape(n, g, te, g, te, d)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(x.reshape(n, g * g, te * te * d))


def forward_graph(param_vars: dict, patches: np.ndarray, config: VisionConfig,
                  training: bool = False, rng: Rng = None) -> ad.Var:
    """Build the tape from raw patches to unit-norm embeddings (N, proj)."""
    tokens = patches_to_tokens(patches, config)
    n = tokens.shape[0]
    e, heads = config.embed, config.heads
    hd = e // heads
    dtype = param_vars["patch_embed.w"].value.dtype

    x = ad.add(ad.matmul(ad.constant(tokens, dtype=dtype), param_vars["patch_embed.w"]),
               param_vars["patch_embed.b"])
    cls_row = ad.add(ad.constant(np.zeros((n, 1, e)), dtype=dtype),
                     ad.reshape(param_vars["cls_token"], (1, 1, e)))
    x = ad.concat([cls_row, x], axis=1)
    x = ad.add(x, ad.reshape(param_vars["pos_embed"], (1, 1 + config.tokens, e)))

    if training and config.mask_ratio > 0.0:
        n_drop = int(config.mask_ratio * config.tokens)
        if n_drop > 0:
            if rng is None:
                raise ValueError("token masking requires an rng")
            perm = rng.permutation(config.tokens)
            kept = np.sort(perm[n_drop:]) + 1  # class token (index 0) never dropped
            x = ad.gather_axis1(x, np.concatenate([[0], kept]))

    t_eff = x.shape[1]
    attn_scale = 1.0 / math.sqrt(hd)
    for i in range(config.layers):
        p = f"block{i}."
        h = ad.layernorm(x, param_vars[p + "ln1.g"], param_vars[p + "ln1.b"])
        qkv = ad.add(ad.matmul(h, param_vars[p + "qkv.w"]), param_vars[p + "qkv.b"])
        parts = []
        for j in range(3):
            part = ad.slice_last(qkv, j * e, (j + 1) * e)
            part = ad.reshape(part, (n, t_eff, heads, hd))
            parts.append(ad.transpose(part, (0, 2, 1, 3)))
        q, k, v = parts
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), attn_scale)
        att = ad.matmul(ad.softmax(scores), v)
        att = ad.reshape(ad.transpose(att, (0, 2, 1, 3)), (n, t_eff, e))
        att = ad.add(ad.matmul(att, param_vars[p + "attn_out.w"]),
                     param_vars[p + "attn_out.b"])
        x = ad.add(x, att)

        h2 = ad.layernorm(x, param_vars[p + "ln2.g"], param_vars[p + "ln2.b"])
        hidden = ad.gelu(ad.add(ad.matmul(h2, param_vars[p + "mlp1.w"]),
                                param_vars[p + "mlp1.b"]))
        out = ad.add(ad.matmul(hidden, param_vars[p + "mlp2.w"]),
                     param_vars[p + "mlp2.b"])
        x = ad.add(x, out)

    x = ad.layernorm(x, param_vars["final_ln.g"], param_vars["final_ln.b"])
    cls_state = ad.reshape(ad.gather_axis1(x, np.asarray([0])), (n, e))
    return ad.l2norm_rows(ad.matmul(cls_state, param_vars["proj.w"]))


def make_param_vars(model: VisionModel) -> dict:
    return {name: ad.Var(value) for name, value in model.params.items()}


def encode_batch(model: VisionModel, patches: np.ndarray,
                 training: bool = False, rng: Rng = None) -> np.ndarray:
    """(N, S, S, D) -> (N, proj) unit-norm embeddings, as plain values."""
    return forward_graph(make_param_vars(model), patches, model.config,
                         training=training, rng=rng).value


# ------------------------------------------------------------------ checkpoints

def save_checkpoint(model: VisionModel, path):
    cfg = np.asarray(model.config.as_tuple(), dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"HSM1")
        f.write(struct.pack("<II", CHECKPOINT_VERSION, config_hash(model.config)))
        for name, value in [("__config__", cfg)] + model.parameter_items():
            enc = name.encode("utf-8")
            arr = np.asarray(value, dtype="<f4")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.tobytes())


def _read_exact(f, size, what):
    buf = f.read(size)
    if len(buf) != size:
        raise TruncatedPayload(f"checkpoint truncated reading {what}")
    return buf


def load_checkpoint(path, expect_config: VisionConfig = None) -> VisionModel:
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != b"HSM1":
            raise BadMagic("bad checkpoint magic")
        version, stored_hash = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != CHECKPOINT_VERSION:
            raise VersionMismatch(f"checkpoint version {version}")
        sections = {}
        while True:
            lenbuf = f.read(2)
            if not lenbuf:
                break
            if len(lenbuf) != 2:
                raise TruncatedPayload("checkpoint truncated reading name length")
            (nlen,) = struct.unpack("<H", lenbuf)
            name = _read_exact(f, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims")) if rank else ()
            count = int(np.prod(dims, dtype=np.int64)) if dims else 1
            payload = _read_exact(f, count * 4, f"payload of {name}")
            arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
            sections[name] = arr

    if "__config__" not in sections:
        raise VersionMismatch("checkpoint carries no config section")
    c = sections.pop("__config__")
    config = VisionConfig(window=int(c[0]), token_edge=int(c[1]), depth=int(c[2]),
                          embed=int(c[3]), layers=int(c[4]), heads=int(c[5]),
                          mlp=int(c[6]), proj=int(c[7]), mask_ratio=float(c[8]),
                          init_std=float(c[9]))
    if config_hash(config) != stored_hash:
        raise VersionMismatch("stored config hash disagrees with config section")
    if expect_config is not None and config_hash(expect_config) != stored_hash:
        raise VersionMismatch("checkpoint was written for a different config")

    expected = {name: shape for name, shape, _s, _k in _param_specs(config)}
    if set(expected) != set(sections):
        raise VersionMismatch("checkpoint parameter sections do not match config")
    for name, shape in expected.items():
        if sections[name].shape != shape:
            raise VersionMismatch(f"section {name}: shape {sections[name].shape} vs {shape}")
    ordered = {name: sections[name] for name, _sh, _s, _k in _param_specs(config)}
    # scalars come back as 0-d arrays already
    return VisionModel(config, ordered)
