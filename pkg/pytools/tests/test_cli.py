import numpy as np
import pytest
from scipy.io import savemat

import hsvlm_prep.recipes as recipes
from hsvlm_prep.cli import main
from hsvlm_prep.recipes import DatasetRecipe


@pytest.fixture()
def tiny_recipe(monkeypatch):
    recipe = DatasetRecipe(name="tiny", cube_var="cube", gt_var="gt",
                           dims=(4, 4, 2), class_names=("a", "b", "c"))
    monkeypatch.setitem(recipes.RECIPES, "tiny", recipe)
    return recipe


class TestConvertCommand:
    def test_convert_round_trip(self, tmp_path, tiny_recipe, capsys):
        cube_path, gt_path = tmp_path / "c.mat", tmp_path / "g.mat"
        savemat(cube_path, {"cube": np.ones((4, 4, 2))})
        savemat(gt_path, {"gt": np.ones((4, 4), dtype=np.int32)})
        rc = main(["convert", "--dataset", "tiny", "--cube", str(cube_path),
                   "--gt", str(gt_path), "--out", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out.hsc").exists()
        assert (tmp_path / "out.hsl").exists()
        assert (tmp_path / "out.manifest.json").exists()
        assert "16 labeled pixels" in capsys.readouterr().out

    def test_missing_file_exits_2(self, tmp_path, tiny_recipe):
        rc = main(["convert", "--dataset", "tiny",
                   "--cube", str(tmp_path / "nope.mat"),
                   "--gt", str(tmp_path / "nope2.mat"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_unknown_dataset_is_usage_error(self, tmp_path):
        rc = main(["convert", "--dataset", "mars", "--cube", "x", "--gt", "y",
                   "--out", str(tmp_path / "out")])
        assert rc == 1


class TestEmbedCommand:
    def test_bad_kind_is_usage_error(self, tmp_path):
        classes = tmp_path / "names.txt"
        classes.write_text("corn\nwheat\n")
        rc = main(["embed", "--classes", str(classes), "--kind", "haiku",
                   "--out", str(tmp_path / "p.hsp")])
        assert rc == 1

    def test_missing_classes_file_exits_2(self, tmp_path):
        rc = main(["embed", "--classes", str(tmp_path / "nope.txt"),
                   "--out", str(tmp_path / "p.hsp")])
        assert rc == 2

    def test_missing_command_is_usage_error(self):
        assert main([]) == 1
