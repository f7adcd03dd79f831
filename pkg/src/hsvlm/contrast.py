"""Distractor-aware contrastive loss.

Per sample: scaled cosine similarities against every class prototype,
the top-k_h most-confusing wrong classes as hard negatives, k_s wrong
classes sampled uniformly from the rest as semi-hard negatives, and
cross entropy over [positive, hard..., semi-hard...] with the positive
always in slot 0. Prototypes are constants; gradients reach only the
image embeddings and the logit scale.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .errors import DegenerateSpec, DimMismatch, EmptyBatch, OverlapError
from .rng import Rng


class LossVariant(str, Enum):
    FULL = "full"
    NO_HARD = "no_hard"
    NO_SEMI_HARD = "no_semi_hard"


@dataclass
class NegativeSpec:
    k_h: int = 4
    k_s: int = 4

    def effective(self, num_classes: int, variant: LossVariant = LossVariant.FULL):
        """Clamp to available wrong classes: hard first, semi-hard takes the rest.

        The no_hard variant removes hard negatives entirely, which widens
        the semi-hard pool; no_semi_hard zeroes the random draws.
        """
        variant = LossVariant(variant)
        kh = 0 if variant is LossVariant.NO_HARD else min(self.k_h, num_classes - 1)
        ks = 0 if variant is LossVariant.NO_SEMI_HARD else min(self.k_s, num_classes - 1 - kh)
        return kh, ks


@dataclass
class LogitRow:
    values: np.ndarray
    class_ids: np.ndarray  # aligned; class_ids[0] is the ground-truth class


def similarity_matrix(z: np.ndarray, p: np.ndarray, logit_scale: float) -> np.ndarray:
    if z.shape[1] != p.shape[1]:
        raise DimMismatch(f"embeddings dim {z.shape[1]} vs prototypes dim {p.shape[1]}")
    tau = np.exp(np.float64(logit_scale))
    sims = np.matmul(z.astype(np.float64), p.astype(np.float64).T) * tau
    return sims.astype(np.result_type(z.dtype, p.dtype))


def select_hard(row: np.ndarray, y: int, k_h: int) -> np.ndarray:
    """Wrong classes with the largest similarity, descending, ties by lower id."""
    c = row.shape[0]
    wrong = np.asarray([j for j in range(c) if j != y], dtype=np.int64)
    order = np.lexsort((wrong, -row[wrong].astype(np.float64)))
    return wrong[order[:min(k_h, c - 1)]]


def sample_semihard(c: int, y: int, hard: np.ndarray, k_s: int, rng: Rng) -> np.ndarray:
    excluded = set(int(h) for h in hard) | {int(y)}
    pool = np.asarray([j for j in range(c) if j not in excluded], dtype=np.int64)
    k = min(k_s, pool.shape[0])
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice_without_replacement(pool, k).astype(np.int64)


def assemble_logits(row: np.ndarray, y: int, hard: np.ndarray,
                    semi: np.ndarray) -> LogitRow:
    ids = np.concatenate([[y], hard, semi]).astype(np.int64)
    if len(set(ids.tolist())) != ids.shape[0]:
        raise OverlapError("positive, hard, and semi-hard classes must be disjoint")
    return LogitRow(values=row[ids], class_ids=ids)


def _row_indices(sims: np.ndarray, labels: np.ndarray, spec: NegativeSpec,
                 rng: Rng, variant: LossVariant) -> np.ndarray:
    """Per-sample class-id rows (N, 1+kh+ks); consumes rng in batch order."""
    n, c = sims.shape
    kh, ks = spec.effective(c, variant)
    if kh == 0 and ks == 0 and c > 1:
        raise DegenerateSpec("no negatives left: the loss would be constant zero")
    rows = np.empty((n, 1 + kh + ks), dtype=np.int64)
    for i in range(n):
        y = int(labels[i])
        hard = select_hard(sims[i], y, kh) if kh > 0 else np.empty(0, dtype=np.int64)
        semi = sample_semihard(c, y, hard, ks, rng) if ks > 0 else np.empty(0, dtype=np.int64)
        rows[i] = assemble_logits(np.arange(c), y, hard, semi).values
    return rows


def loss_graph(z_var: ad.Var, prototypes: np.ndarray, labels: np.ndarray,
               spec: NegativeSpec, logit_scale_var: ad.Var, rng: Rng,
               variant: LossVariant = LossVariant.FULL) -> ad.Var:
    """Scalar loss Var downstream of the embedding graph."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] == 0:
        raise EmptyBatch("contrastive loss needs at least one sample")
    if isinstance(prototypes, ad.Var):
        # trainable prototypes (vision-only variant)
        p_t = ad.transpose(prototypes, (1, 0))
        proto_dim = prototypes.value.shape[1]
    else:
        p_t = ad.constant(prototypes.T, dtype=z_var.value.dtype)
        proto_dim = prototypes.shape[1]
    if z_var.value.shape[1] != proto_dim:
        raise DimMismatch(f"embeddings dim {z_var.value.shape[1]} "
                          f"vs prototypes dim {proto_dim}")
    sims = ad.mul(ad.matmul(z_var, p_t), ad.exp(logit_scale_var))
    idx = _row_indices(sims.value, labels, spec, rng, LossVariant(variant))
    rows = ad.gather_cols(sims, idx)
    losses = ad.softmax_ce_rows(rows, np.zeros(labels.shape[0], dtype=np.int64))
    return ad.mean_all(losses)


def batch_contrastive_loss(z: np.ndarray, prototypes: np.ndarray, labels: np.ndarray,
                           spec: NegativeSpec, logit_scale: float, rng: Rng,
                           variant: LossVariant = LossVariant.FULL):
    """Standalone form: returns (loss, d loss/d z, d loss/d logit_scale)."""
    z_var = ad.Var(np.asarray(z))
    ls_var = ad.Var(np.asarray(logit_scale, dtype=np.asarray(z).dtype))
    loss = loss_graph(z_var, prototypes, labels, spec, ls_var, rng, variant)
    gz, gls = ad.differentiate(loss, [z_var, ls_var])
    return float(loss.value), gz, float(gls)
