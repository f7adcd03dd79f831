"""Prompt rendering and embedding into .hsp prototype files.

Templates mirror the ones the training pipeline was designed around;
they are part of the file-format contract, not imported from hsvlm.
"""

import warnings

import numpy as np

from .errors import ModelUnavailable
from .formats import write_prototypes

DEFAULT_MODEL = "BAAI/bge-large-en-v1.5"
EXPECTED_DIM = 1024

PROMPT_KINDS = ("label_only", "short_text", "descriptive")

SHORT_TEXT_TEMPLATE = "an aerial hyperspectral image of {cls}"
DESCRIPTIVE_TEMPLATE = (
    "This image shows a large cultivated field of {cls}, "
    "where {cls} plants are densely grown in rows; "
    "the vivid green {cls} vegetation is clearly visible "
    "from an aerial perspective."
)


def render_prompt(class_name: str, kind: str) -> str:
    if not class_name:
        raise ValueError("class name must be non-empty")
    if kind == "label_only":
        return class_name
    if kind == "short_text":
        return SHORT_TEXT_TEMPLATE.format(cls=class_name)
    if kind == "descriptive":
        return DESCRIPTIVE_TEMPLATE.format(cls=class_name)
    raise ValueError(f"unknown prompt kind {kind!r}; use one of {PROMPT_KINDS}")


def load_encoder(model_id: str):
    """Returns texts -> (n, d) float32 via sentence-transformers."""
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError as exc:
        raise ModelUnavailable(f"sentence-transformers not installed: {exc}")
    try:
        model = SentenceTransformer(model_id)
    except Exception as exc:
        raise ModelUnavailable(f"cannot load {model_id!r}: {exc}")

    def encode(texts):
        return np.asarray(model.encode(texts, convert_to_numpy=True,
                                       normalize_embeddings=False),
                          dtype=np.float32)

    return encode


def embed_prompts(class_names, kind, out_path, model_id=DEFAULT_MODEL,
                  encode_fn=None):
    """Render one prompt per class, embed, l2-normalize, write .hsp.

    encode_fn overrides the sentence-transformer lookup; it must map a
    list of strings to an (n, d) array. Returns the written matrix.
    """
    names = list(class_names)
    if len(set(names)) != len(names):
        raise ValueError("class names must be unique")
    prompts = [render_prompt(n, kind) for n in names]
    if encode_fn is None:
        encode_fn = load_encoder(model_id)
    raw = np.asarray(encode_fn(prompts), dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != len(names):
        raise ValueError(f"encoder returned shape {raw.shape} "
                         f"for {len(names)} prompts")
    if raw.shape[1] != EXPECTED_DIM:
        warnings.warn(f"embedding dim {raw.shape[1]} != the usual "
                      f"{EXPECTED_DIM}; proceeding")
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("encoder produced a zero embedding")
    matrix = (raw / norms).astype(np.float32)
    write_prototypes(names, matrix, out_path)
    return matrix
