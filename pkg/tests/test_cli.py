import json

import numpy as np
import pytest

from hsvlm import hsio, prompts
from hsvlm.cli import main

from synthscene import make_separable_scene


@pytest.fixture()
def workspace(tmp_path):
    scene, labels = make_separable_scene(size=32, depth=8, classes=4, seed=0)
    cube_path = tmp_path / "scene.hsc"
    labels_path = tmp_path / "labels.hsl"
    hsio.save_cube(scene, cube_path)
    hsio.save_labels(labels, labels_path)
    return tmp_path, cube_path, labels_path


def write_train_config(tmp_path, cube_path, labels_path, split_path, **over):
    doc = {
        "dataset": {"cube": str(cube_path), "labels": str(labels_path),
                    "split": str(split_path)},
        "model": {"window": 3, "depth": 8, "embed": 32, "layers": 2,
                  "heads": 4, "mlp": 32, "proj": 64},
        "train": {"epochs": over.pop("epochs", 3), "batch": 32, "lr": 1e-3,
                  "seeds": over.pop("seeds", [1]), "k_h": 4, "k_s": 4},
        "prototypes": {"synth": {"C": 4, "d": 64, "seed": 7}},
        "out": {"checkpoint": str(tmp_path / "model.hsm"),
                "history": str(tmp_path / "history.json"),
                "report": str(tmp_path / "report.json")},
    }
    doc.update(over)
    path = tmp_path / "train.json"
    path.write_text(json.dumps(doc))
    return path, doc


class TestSplitCommand:
    def test_split_writes_deterministic_file(self, workspace):
        tmp_path, _, labels_path = workspace
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            rc = main(["split", "--labels", str(labels_path),
                       "--fraction", "0.1", "--seed", "3", "--out", str(out)])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()
        split = hsio.load_split(a)
        assert split.train.shape[0] > 0 and split.test.shape[0] > 0

    def test_missing_labels_is_data_error(self, tmp_path):
        rc = main(["split", "--labels", str(tmp_path / "nope.hsl"),
                   "--seed", "1", "--out", str(tmp_path / "s.json")])
        assert rc == 2


class TestPrepareCommand:
    def test_scale_and_pca(self, workspace):
        tmp_path, cube_path, labels_path = workspace
        out = tmp_path / "prepared.hsc"
        rc = main(["prepare", "--cube", str(cube_path), "--labels",
                   str(labels_path), "--pca", "4", "--scale",
                   "--out", str(out)])
        assert rc == 0
        assert hsio.load_cube(out).shape == (32, 32, 4)


class TestSynthPrototypesCommand:
    def test_writes_loadable_file(self, tmp_path):
        out = tmp_path / "p.hsp"
        rc = main(["synth-prototypes", "--classes", "4", "--dim", "64",
                   "--seed", "7", "--out", str(out)])
        assert rc == 0
        protos = prompts.load_prototypes(out)
        assert protos.matrix.shape == (4, 64)


class TestTrainCommand:
    def test_full_run_emits_artifacts(self, workspace, capsys):
        tmp_path, cube_path, labels_path = workspace
        split_path = tmp_path / "split.json"
        assert main(["split", "--labels", str(labels_path), "--fraction",
                     "0.1", "--seed", "3", "--out", str(split_path)]) == 0
        cfg_path, doc = write_train_config(tmp_path, cube_path, labels_path,
                                           split_path)
        rc = main(["train", "--config", str(cfg_path)])
        assert rc == 0
        assert (tmp_path / "model.hsm").exists()
        history = json.loads((tmp_path / "history.json").read_text())
        assert len(history["1"]["epoch_loss"]) == 3
        report = json.loads((tmp_path / "report.json").read_text())
        assert 0.0 <= report["oa"] <= 100.0
        assert "config digest:" in capsys.readouterr().out

    def test_bad_config_json_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["train", "--config", str(bad)]) == 2


class TestEvalCommand:
    def _train(self, workspace):
        tmp_path, cube_path, labels_path = workspace
        split_path = tmp_path / "split.json"
        main(["split", "--labels", str(labels_path), "--fraction", "0.1",
              "--seed", "3", "--out", str(split_path)])
        cfg_path, _ = write_train_config(tmp_path, cube_path, labels_path,
                                         split_path, epochs=5)
        assert main(["train", "--config", str(cfg_path)]) == 0
        proto_path = tmp_path / "protos.hsp"
        main(["synth-prototypes", "--classes", "4", "--dim", "64",
              "--seed", "7", "--out", str(proto_path)])
        return tmp_path, cube_path, labels_path, split_path, proto_path

    def test_eval_writes_report_and_map(self, workspace):
        tmp_path, cube_path, labels_path, split_path, proto_path = \
            self._train(workspace)
        report, pmap = tmp_path / "eval.json", tmp_path / "map.ppm"
        rc = main(["eval", "--checkpoint", str(tmp_path / "model.hsm"),
                   "--prototypes", str(proto_path), "--cube", str(cube_path),
                   "--labels", str(labels_path), "--split", str(split_path),
                   "--report", str(report), "--map", str(pmap)])
        assert rc == 0
        doc = json.loads(report.read_text())
        assert doc["oa"] > 0.0
        assert pmap.read_bytes().startswith(b"P6\n32 32\n255\n")

    def test_prototype_dim_mismatch_exits_2(self, workspace):
        tmp_path, cube_path, labels_path, split_path, _ = self._train(workspace)
        wrong = tmp_path / "wrong.hsp"
        main(["synth-prototypes", "--classes", "4", "--dim", "128",
              "--seed", "7", "--out", str(wrong)])
        rc = main(["eval", "--checkpoint", str(tmp_path / "model.hsm"),
                   "--prototypes", str(wrong), "--cube", str(cube_path),
                   "--labels", str(labels_path), "--split", str(split_path),
                   "--report", str(tmp_path / "r.json")])
        assert rc == 2


class TestAblateCommand:
    def test_batch_size_sweep_writes_one_report_each(self, workspace):
        tmp_path, cube_path, labels_path = workspace
        split_path = tmp_path / "split.json"
        main(["split", "--labels", str(labels_path), "--fraction", "0.1",
              "--seed", "3", "--out", str(split_path)])
        cfg_path, _ = write_train_config(tmp_path, cube_path, labels_path,
                                         split_path, epochs=1)
        rc = main(["ablate", "--config", str(cfg_path),
                   "--batch-sizes", "16,32",
                   "--out-prefix", str(tmp_path / "sweep")])
        assert rc == 0
        for tag in ("batch_16", "batch_32"):
            doc = json.loads((tmp_path / f"sweep_{tag}.json").read_text())
            assert doc["tag"] == tag
            assert "oa_mean" in doc

    def test_no_sweep_axis_is_usage_error(self, workspace):
        tmp_path, cube_path, labels_path = workspace
        split_path = tmp_path / "split.json"
        main(["split", "--labels", str(labels_path), "--fraction", "0.1",
              "--seed", "3", "--out", str(split_path)])
        cfg_path, _ = write_train_config(tmp_path, cube_path, labels_path,
                                         split_path, epochs=1)
        assert main(["ablate", "--config", str(cfg_path)]) == 1


class TestUtilityCommands:
    def test_gradcheck_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        assert "max relative error" in capsys.readouterr().out

    def test_params_prints_sections(self, capsys):
        assert main(["params"]) == 0
        out = capsys.readouterr().out
        assert "projection" in out and "65536" in out

    def test_missing_command_is_usage_error(self):
        assert main([]) == 1

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1
