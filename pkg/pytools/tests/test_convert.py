import json
import struct

import numpy as np
import pytest
from scipy.io import savemat

from hsvlm_prep.convert import convert_mat
from hsvlm_prep.errors import DimMismatch, MissingVariable
from hsvlm_prep.recipes import RECIPES, DatasetRecipe

TINY = DatasetRecipe(name="tiny", cube_var="cube", gt_var="gt",
                     dims=(4, 4, 2), class_names=("a", "b", "c"))


def make_fixture(tmp_path, cube=None, gt=None):
    if cube is None:
        cube = np.arange(4 * 4 * 2, dtype=np.float64).reshape(4, 4, 2)
    if gt is None:
        gt = (np.arange(16, dtype=np.int32).reshape(4, 4) % 4)
    cube_path = tmp_path / "cube.mat"
    gt_path = tmp_path / "gt.mat"
    savemat(cube_path, {"cube": cube})
    savemat(gt_path, {"gt": gt})
    return cube_path, gt_path, cube, gt


class TestConvert:
    def test_golden_hsc_bytes(self, tmp_path):
        cube_path, gt_path, cube, _ = make_fixture(tmp_path)
        convert_mat(cube_path, gt_path, TINY, str(tmp_path / "out"))
        expected = (b"HSC1" + struct.pack("<III", 4, 4, 2)
                    + np.arange(32, dtype="<f4").tobytes())
        assert (tmp_path / "out.hsc").read_bytes() == expected

    def test_golden_hsl_bytes(self, tmp_path):
        cube_path, gt_path, _, gt = make_fixture(tmp_path)
        convert_mat(cube_path, gt_path, TINY, str(tmp_path / "out"))
        expected = (b"HSL1" + struct.pack("<II", 4, 4)
                    + gt.astype("<u2").tobytes())
        assert (tmp_path / "out.hsl").read_bytes() == expected

    def test_manifest_counts_and_checksums(self, tmp_path):
        import hashlib
        cube_path, gt_path, _, gt = make_fixture(tmp_path)
        manifest = convert_mat(cube_path, gt_path, TINY, str(tmp_path / "out"))
        assert manifest["labeled_pixels"] == int((gt > 0).sum())
        assert manifest["max_label"] == 3
        on_disk = json.loads((tmp_path / "out.manifest.json").read_text())
        assert on_disk == manifest
        cube_sha = hashlib.sha256((tmp_path / "out.hsc").read_bytes()).hexdigest()
        assert manifest["outputs"]["cube"]["sha256"] == cube_sha

    def test_values_preserved_through_cast(self, tmp_path):
        rng = np.random.default_rng(3)
        cube = rng.normal(size=(4, 4, 2)) * 1e4
        cube_path, gt_path, _, _ = make_fixture(tmp_path, cube=cube)
        convert_mat(cube_path, gt_path, TINY, str(tmp_path / "out"))
        raw = (tmp_path / "out.hsc").read_bytes()[16:]
        written = np.frombuffer(raw, dtype="<f4").reshape(4, 4, 2)
        for _ in range(100):
            h, w, d = rng.integers(0, (4, 4, 2))
            assert written[h, w, d] == np.float32(cube[h, w, d])

    def test_dim_mismatch(self, tmp_path):
        cube_path, gt_path, _, _ = make_fixture(
            tmp_path, cube=np.zeros((5, 4, 2)))
        with pytest.raises(DimMismatch):
            convert_mat(cube_path, gt_path, TINY, str(tmp_path / "out"))

    def test_missing_variable(self, tmp_path):
        _, gt_path, _, _ = make_fixture(tmp_path)
        bad_path = tmp_path / "bad.mat"
        savemat(bad_path, {"wrong_name": np.zeros((4, 4, 2))})
        with pytest.raises(MissingVariable):
            convert_mat(bad_path, gt_path, TINY, str(tmp_path / "out"))


class TestCrossLoad:
    def test_primary_package_reads_the_outputs(self, tmp_path):
        hsio = pytest.importorskip("hsvlm.hsio")
        cube_path, gt_path, cube, gt = make_fixture(tmp_path)
        convert_mat(cube_path, gt_path, TINY, str(tmp_path / "out"))
        scene = hsio.load_cube(tmp_path / "out.hsc")
        labels = hsio.load_labels(tmp_path / "out.hsl")
        np.testing.assert_array_equal(scene.values, cube.astype(np.float32))
        np.testing.assert_array_equal(labels.labels, gt.astype(np.uint16))


class TestRecipes:
    def test_standard_recipes_frozen(self):
        ip = RECIPES["indian_pines"]
        assert ip.dims == (145, 145, 200)
        assert len(ip.class_names) == 16
        pu = RECIPES["pavia_university"]
        assert pu.dims == (610, 340, 103)
        assert len(pu.class_names) == 9

    def test_duplicate_class_names_rejected(self):
        with pytest.raises(ValueError):
            DatasetRecipe(name="x", cube_var="c", gt_var="g",
                          dims=(2, 2, 2), class_names=("a", "a"))
