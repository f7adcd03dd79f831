"""MAT-v5 to .hsc/.hsl conversion with a provenance manifest."""

import hashlib
import json

import numpy as np
from scipy.io import loadmat

from .errors import MissingVariable
from .formats import write_cube, write_labels
from .recipes import DatasetRecipe


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_var(path, var):
    doc = loadmat(path)
    if var not in doc:
        present = [k for k in doc if not k.startswith("__")]
        raise MissingVariable(f"{path}: no variable {var!r} (found {present})")
    return np.asarray(doc[var])


def convert_mat(cube_path, gt_path, recipe: DatasetRecipe, out_prefix):
    """Write <prefix>.hsc, <prefix>.hsl, and <prefix>.manifest.json.

    Returns a summary dict (also the manifest payload).
    """
    cube = _load_var(cube_path, recipe.cube_var)
    gt = _load_var(gt_path, recipe.gt_var)
    recipe.check_dims(cube.shape, gt.shape)

    cube32 = cube.astype(np.float32)
    labels = gt.astype(np.uint16)
    cube_out = f"{out_prefix}.hsc"
    labels_out = f"{out_prefix}.hsl"
    write_cube(cube32, cube_out)
    write_labels(labels, labels_out)

    manifest = {
        "dataset": recipe.name,
        "dims": list(recipe.dims),
        "labeled_pixels": int((labels > 0).sum()),
        "max_label": int(labels.max()),
        "class_names": list(recipe.class_names),
        "sources": {
            "cube": {"path": str(cube_path), "sha256": _sha256(cube_path)},
            "gt": {"path": str(gt_path), "sha256": _sha256(gt_path)},
        },
        "outputs": {
            "cube": {"path": cube_out, "sha256": _sha256(cube_out)},
            "labels": {"path": labels_out, "sha256": _sha256(labels_out)},
        },
    }
    with open(f"{out_prefix}.manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest
