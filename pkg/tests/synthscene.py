"""Synthetic scenes shared by trainer, CLI, and acceptance tests."""

import numpy as np

from hsvlm.hsio import LabelMap, SceneCube
from hsvlm.rng import Rng


def make_separable_scene(size=32, depth=8, classes=4, seed=0, separation=10.0):
    """Per-class Gaussian spectra (mean spread = separation * noise std).

    Class regions are spatial blocks with a 2-pixel unlabeled band at the
    block borders, so every labeled pixel's 3x3 patch is spectrally pure.
    """
    rng = Rng(seed, stream=5)
    means = rng.normal((classes, depth), std=separation, dtype=np.float64)
    half = size // 2
    quad = np.zeros((size, size), np.uint16)
    if classes == 4:
        quad[:half, :half] = 1
        quad[:half, half:] = 2
        quad[half:, :half] = 3
        quad[half:, half:] = 4
    else:
        stripe = size // classes
        for c in range(classes):
            quad[c * stripe:(c + 1) * stripe if c < classes - 1 else size, :] = c + 1
    values = means[quad - 1] + rng.normal((size, size, depth), dtype=np.float64)
    labels = quad.copy()
    if classes == 4:
        labels[half - 1:half + 1, :] = 0
        labels[:, half - 1:half + 1] = 0
    else:
        stripe = size // classes
        for c in range(1, classes):
            labels[c * stripe - 1:c * stripe + 1, :] = 0
    return SceneCube(values.astype(np.float32)), LabelMap(labels)
