"""Nearest-prototype inference, confusion-matrix metrics, and exports."""

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimMismatch, EmptyEvaluation, LabelOutOfRange,
                     PaletteTooSmall)

# 17 fixed colors: slot 0 is background black, 1..16 for classes.
DEFAULT_PALETTE = [
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 190), (0, 128, 128), (170, 110, 40),
    (128, 0, 0), (170, 255, 195), (128, 128, 0), (0, 0, 128),
]


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows truth, cols prediction

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class EvalReport:
    oa: float
    aa: float
    kappa: float
    per_class_accuracy: list
    confusion: list
    seed: int = 0
    variant: str = "full"
    config_digest: str = ""
    extra: dict = field(default_factory=dict)


def predict_batch(embeddings: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """1-based class ids by maximal dot product; ties go to the lower id."""
    if embeddings.shape[1] != prototypes.shape[1]:
        raise DimMismatch(f"embedding dim {embeddings.shape[1]} "
                          f"vs prototype dim {prototypes.shape[1]}")
    sims = embeddings.astype(np.float64) @ prototypes.astype(np.float64).T
    return np.argmax(sims, axis=1).astype(np.int64) + 1


def confusion_accumulate(truth: np.ndarray, predicted: np.ndarray,
                         num_classes: int) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise DimMismatch("truth and prediction lengths differ")
    for arr, what in ((truth, "truth"), (predicted, "prediction")):
        if arr.size and (arr.min() < 1 or arr.max() > num_classes):
            raise LabelOutOfRange(f"{what} labels must lie in 1..{num_classes}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth - 1, predicted - 1), 1)
    return ConfusionMatrix(counts)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyEvaluation("no samples in confusion matrix")
    return 100.0 * float(np.trace(cm.counts)) / cm.total


def average_accuracy(cm: ConfusionMatrix) -> float:
    accs = per_class_accuracy(cm)
    present = [a for a in accs if a is not None]
    if not present:
        raise EmptyEvaluation("no samples in confusion matrix")
    return float(np.mean(present))


def per_class_accuracy(cm: ConfusionMatrix) -> list:
    """Per-class recall in percent; None for classes with no truth samples."""
    out = []
    for i in range(cm.counts.shape[0]):
        row = cm.counts[i].sum()
        out.append(None if row == 0 else 100.0 * float(cm.counts[i, i]) / row)
    return out


def cohen_kappa(cm: ConfusionMatrix) -> float:
    n = cm.total
    if n == 0:
        raise EmptyEvaluation("no samples in confusion matrix")
    p_o = float(np.trace(cm.counts)) / n
    rows = cm.counts.sum(axis=1).astype(np.float64)
    cols = cm.counts.sum(axis=0).astype(np.float64)
    p_e = float((rows * cols).sum()) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def build_report(cm: ConfusionMatrix, seed: int = 0, variant: str = "full",
                 config_digest: str = "", extra: dict = None) -> EvalReport:
    return EvalReport(oa=overall_accuracy(cm), aa=average_accuracy(cm),
                      kappa=cohen_kappa(cm),
                      per_class_accuracy=per_class_accuracy(cm),
                      confusion=cm.counts.tolist(), seed=seed, variant=variant,
                      config_digest=config_digest, extra=extra or {})


# ----------------------------------------------------------------- serialization

def _canonical_json(obj, out: io.StringIO):
    if isinstance(obj, dict):
        out.write("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.write(",")
            out.write(f'"{key}":')
            _canonical_json(obj[key], out)
        out.write("}")
    elif isinstance(obj, (list, tuple)):
        out.write("[")
        for i, item in enumerate(obj):
            if i:
                out.write(",")
            _canonical_json(item, out)
        out.write("]")
    elif obj is None:
        out.write("null")
    elif isinstance(obj, bool):
        out.write("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(f"{float(obj):.6f}")
    else:
        escaped = str(obj).replace("\\", "\\\\").replace('"', '\\"')
        out.write(f'"{escaped}"')


def report_to_json(report: EvalReport) -> str:
    doc = {
        "oa": report.oa, "aa": report.aa, "kappa": report.kappa,
        "per_class_accuracy": report.per_class_accuracy,
        "confusion": report.confusion, "seed": report.seed,
        "variant": report.variant, "config_digest": report.config_digest,
        "extra": report.extra,
    }
    buf = io.StringIO()
    _canonical_json(doc, buf)
    return buf.getvalue()


def write_report(report: EvalReport, path):
    with open(path, "w") as f:
        f.write(report_to_json(report))
        f.write("\n")


def export_map(prediction_map: np.ndarray, palette, path):
    """P6 image of a per-pixel class map; 0 renders black (background)."""
    pred = np.asarray(prediction_map, dtype=np.int64)
    max_label = int(pred.max()) if pred.size else 0
    if max_label >= len(palette):
        raise PaletteTooSmall(f"palette has {len(palette)} entries, need {max_label + 1}")
    h, w = pred.shape
    lut = np.asarray(list(palette[:max_label + 1]), dtype=np.uint8)
    pixels = lut[pred]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
