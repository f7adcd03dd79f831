"""Training loop and the seeded multi-run protocol.

One logical thread: batches -> encode (training mode) -> contrastive
loss -> reverse-mode gradients -> Adam. Everything downstream of a
(seed, epoch) pair is deterministic, so reruns reproduce the loss
history bitwise at a fixed backend.
"""

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .contrast import LossVariant, NegativeSpec, loss_graph
from .encoder import (TAU_MAX, VisionConfig, VisionModel, forward_graph,
                      init_model, make_param_vars)
from .errors import DivergedLoss, InvalidConfig, PrototypeDimMismatch
from .evalkit import EvalReport, build_report, confusion_accumulate, predict_batch
from .hsio import LabelMap, SceneCube, SplitIndex, batch_iter, extract_patch_batch, pad_scene
from .numcore import l2_normalize_rows
from .optim import AdamState, adam_step
from .prompts import PrototypeSet, synth_prototypes
from .rng import Rng, derive_rng

EVAL_CHUNK = 512


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seeds: tuple = (1, 2, 3, 4)
    negatives: NegativeSpec = field(default_factory=NegativeSpec)
    variant: str = "full"  # full | no_hard | no_semi_hard | vision_only
    fraction: float = 0.1

    def validate(self):
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidConfig("batch size must be >= 1")
        if self.lr <= 0:
            raise InvalidConfig("learning rate must be positive")
        if self.variant not in ("full", "no_hard", "no_semi_hard", "vision_only"):
            raise InvalidConfig(f"unknown variant {self.variant!r}")
        if not self.seeds:
            raise InvalidConfig("need at least one seed")


@dataclass
class TrainHistory:
    epoch_loss: list
    epoch_seconds: list
    final_tau: float
    seed: int

    def to_dict(self):
        return {"epoch_loss": self.epoch_loss, "epoch_seconds": self.epoch_seconds,
                "final_tau": self.final_tau, "seed": self.seed}


def config_digest(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def fit(train_cfg: TrainConfig, model_cfg: VisionConfig, scene: SceneCube,
        labels: LabelMap, split: SplitIndex, prototypes: PrototypeSet,
        seed: int):
    """Train one model; returns (model, history, prototype matrix used).

    The returned prototype matrix is the input one for file-backed runs
    and the learned one for the vision_only variant.
    """
    train_cfg.validate()
    model_cfg.validate()
    if scene.shape[2] != model_cfg.depth:
        raise PrototypeDimMismatch(
            f"scene depth {scene.shape[2]} vs encoder input depth {model_cfg.depth}")
    if prototypes.dim != model_cfg.proj:
        raise PrototypeDimMismatch(
            f"prototype dim {prototypes.dim} vs projection dim {model_cfg.proj}")

    vision_only = train_cfg.variant == "vision_only"
    loss_variant = LossVariant.FULL if vision_only else LossVariant(train_cfg.variant)

    radius = (model_cfg.window - 1) // 2
    padded = pad_scene(scene, radius)
    lab = labels.labels

    model = init_model(model_cfg, seed)
    proto_matrix = prototypes.matrix.copy()
    if vision_only:
        proto_matrix = synth_prototypes(prototypes.num_classes,
                                        model_cfg.proj, seed).matrix.copy()

    names = [k for k, _ in model.parameter_items()]
    arrays = [model.params[k] for k in names]
    if vision_only:
        arrays = arrays + [proto_matrix]
    state = AdamState.init(arrays)
    ls_max = np.float32(math.log(TAU_MAX))

    epoch_loss, epoch_seconds = [], []
    for epoch in range(train_cfg.epochs):
        t0 = time.perf_counter()
        semi_rng = derive_rng(seed, epoch, 7)
        mask_rng = derive_rng(seed, epoch, 11)
        losses = []
        for coords in batch_iter(split.train, train_cfg.batch_size, seed, epoch):
            patches = extract_patch_batch(padded, coords, model_cfg.window)
            y0 = lab[coords[:, 0], coords[:, 1]].astype(np.int64) - 1

            param_vars = make_param_vars(model)
            z = forward_graph(param_vars, patches, model_cfg,
                              training=True, rng=mask_rng)
            if vision_only:
                proto_var = ad.Var(proto_matrix)
                loss = loss_graph(z, proto_var, y0, train_cfg.negatives,
                                  param_vars["logit_scale"], semi_rng, loss_variant)
                grad_targets = [param_vars[k] for k in names] + [proto_var]
            else:
                loss = loss_graph(z, proto_matrix, y0, train_cfg.negatives,
                                  param_vars["logit_scale"], semi_rng, loss_variant)
                grad_targets = [param_vars[k] for k in names]

            loss_value = float(loss.value)
            if not math.isfinite(loss_value):
                raise DivergedLoss(
                    f"non-finite loss at epoch {epoch}, step {len(losses)}; "
                    f"tau={model.tau:.4f}")
            grads = ad.differentiate(loss, grad_targets)
            adam_step(arrays, grads, state, train_cfg.lr)
            if model.params["logit_scale"] > ls_max:
                model.params["logit_scale"][()] = ls_max
            if vision_only:
                proto_matrix[:] = l2_normalize_rows(proto_matrix)
            losses.append(loss_value)
        epoch_loss.append(float(np.mean(losses)))
        epoch_seconds.append(time.perf_counter() - t0)

    history = TrainHistory(epoch_loss=epoch_loss, epoch_seconds=epoch_seconds,
                           final_tau=model.tau, seed=seed)
    return model, history, proto_matrix


def evaluate_model(model: VisionModel, scene: SceneCube, labels: LabelMap,
                   coords: np.ndarray, proto_matrix: np.ndarray,
                   num_classes: int = None):
    """Nearest-prototype evaluation over the given pixel coordinates."""
    from .encoder import encode_batch

    radius = (model.config.window - 1) // 2
    padded = pad_scene(scene, radius)
    lab = labels.labels
    if num_classes is None:
        num_classes = proto_matrix.shape[0]
    preds = np.empty(coords.shape[0], dtype=np.int64)
    for start in range(0, coords.shape[0], EVAL_CHUNK):
        chunk = coords[start:start + EVAL_CHUNK]
        patches = extract_patch_batch(padded, chunk, model.config.window)
        z = encode_batch(model, patches, training=False)
        preds[start:start + EVAL_CHUNK] = predict_batch(z, proto_matrix)
    truth = lab[coords[:, 0], coords[:, 1]].astype(np.int64)
    cm = confusion_accumulate(truth, preds, num_classes)
    return cm, preds


def run_protocol(train_cfg: TrainConfig, model_cfg: VisionConfig, scene: SceneCube,
                 labels: LabelMap, split: SplitIndex, prototypes: PrototypeSet,
                 digest: str = ""):
    """Train/evaluate once per seed; aggregate OA and kappa across runs."""
    train_cfg.validate()
    results = {}
    for seed in sorted(train_cfg.seeds):
        model, history, proto_matrix = fit(train_cfg, model_cfg, scene, labels,
                                           split, prototypes, seed)
        cm, _ = evaluate_model(model, scene, labels, split.test, proto_matrix)
        report = build_report(cm, seed=seed, variant=train_cfg.variant,
                              config_digest=digest)
        results[seed] = {"model": model, "history": history,
                         "proto_matrix": proto_matrix, "report": report}

    oas = np.asarray([results[s]["report"].oa for s in sorted(results)])
    kappas = np.asarray([results[s]["report"].kappa for s in sorted(results)])
    aggregate = {
        "seeds": sorted(results),
        "oa_mean": float(oas.mean()), "oa_std": float(oas.std()),
        "oa_best": float(oas.max()),
        "kappa_mean": float(kappas.mean()), "kappa_std": float(kappas.std()),
        "kappa_best": float(kappas.max()),
    }
    return results, aggregate
