import math

import numpy as np
import pytest

from hsvlm import encoder as enc
from hsvlm.errors import InvalidConfig, TruncatedPayload, VersionMismatch
from hsvlm.rng import Rng

TINY = enc.VisionConfig(window=3, token_edge=3, depth=4, embed=8,
                        layers=2, heads=2, mlp=8, proj=16)


def _gelu(x):
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x ** 3)))


def _ln(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def reference_forward(model, patches):
    """Straight-line numpy transcription of the architecture, float64."""
    cfg = model.config
    p = {k: v.astype(np.float64) for k, v in model.params.items()}
    n = patches.shape[0]
    e, heads = cfg.embed, cfg.heads
    hd = e // heads
    tokens = enc.patches_to_tokens(patches, cfg).astype(np.float64)

    x = tokens @ p["patch_embed.w"] + p["patch_embed.b"]
    cls = np.broadcast_to(p["cls_token"], (n, 1, e))
    x = np.concatenate([cls, x], axis=1) + p["pos_embed"][None]
    t = x.shape[1]
    for i in range(cfg.layers):
        pre = f"block{i}."
        h = _ln(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
        qkv = h @ p[pre + "qkv.w"] + p[pre + "qkv.b"]
        q, k, v = [qkv[..., j * e:(j + 1) * e].reshape(n, t, heads, hd)
                   .transpose(0, 2, 1, 3) for j in range(3)]
        att = _softmax(q @ k.transpose(0, 1, 3, 2) / math.sqrt(hd)) @ v
        att = att.transpose(0, 2, 1, 3).reshape(n, t, e)
        x = x + att @ p[pre + "attn_out.w"] + p[pre + "attn_out.b"]
        h2 = _ln(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
        x = x + _gelu(h2 @ p[pre + "mlp1.w"] + p[pre + "mlp1.b"]) @ p[pre + "mlp2.w"] \
            + p[pre + "mlp2.b"]
    cls_state = _ln(x, p["final_ln.g"], p["final_ln.b"])[:, 0, :]
    z = cls_state @ p["proj.w"]
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class TestForward:
    def test_matches_straight_line_reference(self):
        model = enc.init_model(TINY, seed=4).astype(np.float64)
        patches = Rng(9).normal((6, 3, 3, 4), dtype=np.float64)
        got = enc.encode_batch(model, patches)
        want = reference_forward(model, patches)
        assert np.abs(got - want).max() < 1e-5

    def test_unit_norm_rows(self):
        model = enc.init_model(TINY, seed=1)
        patches = Rng(2).normal((5, 3, 3, 4), std=3.0, dtype=np.float32)
        z = enc.encode_batch(model, patches)
        np.testing.assert_allclose(np.linalg.norm(z.astype(np.float64), axis=1),
                                   1.0, atol=1e-5)

    def test_forward_bitwise_deterministic(self):
        model = enc.init_model(TINY, seed=3)
        patches = Rng(4).normal((4, 3, 3, 4), dtype=np.float32)
        assert np.array_equal(enc.encode_batch(model, patches),
                              enc.encode_batch(model, patches))

    def test_batch_permutation_equivariance(self):
        model = enc.init_model(TINY, seed=5)
        patches = Rng(6).normal((8, 3, 3, 4), dtype=np.float32)
        perm = Rng(7).permutation(8)
        z = enc.encode_batch(model, patches)
        zp = enc.encode_batch(model, patches[perm])
        np.testing.assert_allclose(zp, z[perm], atol=1e-6)

    def test_training_equals_eval_without_masking(self):
        model = enc.init_model(TINY, seed=8)
        patches = Rng(9).normal((3, 3, 3, 4), dtype=np.float32)
        a = enc.encode_batch(model, patches, training=False)
        b = enc.encode_batch(model, patches, training=True, rng=Rng(0))
        assert np.array_equal(a, b)

    def test_masking_drops_tokens(self):
        cfg = enc.VisionConfig(window=9, token_edge=3, depth=4, embed=8,
                               layers=1, heads=2, mlp=8, proj=16,
                               mask_ratio=0.5)
        model = enc.init_model(cfg, seed=1)
        patches = Rng(3).normal((2, 9, 9, 4), dtype=np.float32)
        masked = enc.encode_batch(model, patches, training=True, rng=Rng(1))
        full = enc.encode_batch(model, patches, training=False)
        assert masked.shape == full.shape
        assert not np.array_equal(masked, full)


class TestTokenLayout:
    def test_blocks_flatten_in_row_major_order(self):
        cfg = enc.VisionConfig(window=9, token_edge=3, depth=2, embed=8,
                               layers=1, heads=2, mlp=8, proj=16)
        patches = np.arange(1 * 9 * 9 * 2, dtype=np.float32).reshape(1, 9, 9, 2)
        toks = enc.patches_to_tokens(patches, cfg)
        assert toks.shape == (1, 9, 18)
        # token 4 is the center 3x3 block, rows 3..5 and cols 3..5
        np.testing.assert_array_equal(toks[0, 4],
                                      patches[0, 3:6, 3:6, :].reshape(-1))
        np.testing.assert_array_equal(toks[0, 0],
                                      patches[0, 0:3, 0:3, :].reshape(-1))


class TestParameterAccounting:
    def test_default_sections(self):
        counts = enc.count_params(enc.init_model(enc.VisionConfig(), seed=0))
        assert counts["projection"] == 65536
        assert counts["logit_scale"] == 1
        assert abs(counts["total"] - 240_000) / 240_000 < 0.10

    def test_total_matches_actual_arrays(self):
        model = enc.init_model(TINY, seed=0)
        counted = enc.count_params(model)["total"]
        actual = sum(int(np.prod(v.shape)) if v.ndim else 1
                     for v in model.params.values())
        assert counted == actual

    def test_tau_init(self):
        model = enc.init_model(TINY, seed=0)
        assert model.tau == pytest.approx(1.0 / 0.07, rel=1e-5)


class TestInit:
    def test_same_seed_bitwise(self):
        a = enc.init_model(TINY, seed=12)
        b = enc.init_model(TINY, seed=12)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])

    def test_weights_clipped_to_two_sigma(self):
        model = enc.init_model(enc.VisionConfig(), seed=2)
        w = model.params["proj.w"]
        assert np.abs(w).max() <= 2 * 0.02 + 1e-7

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            enc.VisionConfig(window=14).validate()
        with pytest.raises(InvalidConfig):
            enc.VisionConfig(embed=60, heads=16).validate()
        with pytest.raises(InvalidConfig):
            enc.VisionConfig(mask_ratio=1.0).validate()


class TestCheckpoints:
    def test_round_trip_bitwise(self, tmp_path):
        model = enc.init_model(TINY, seed=6)
        path = tmp_path / "m.hsm"
        enc.save_checkpoint(model, path)
        back = enc.load_checkpoint(path, expect_config=TINY)
        assert back.config.as_tuple() == TINY.as_tuple()
        for k, v in model.params.items():
            assert np.array_equal(back.params[k], v), k

    def test_default_config_round_trip(self, tmp_path):
        # float fields survive the f4 storage of the config section
        model = enc.init_model(enc.VisionConfig(), seed=1)
        path = tmp_path / "m.hsm"
        enc.save_checkpoint(model, path)
        back = enc.load_checkpoint(path)
        assert enc.config_hash(back.config) == enc.config_hash(model.config)

    def test_truncated_rejected(self, tmp_path):
        model = enc.init_model(TINY, seed=6)
        path = tmp_path / "m.hsm"
        enc.save_checkpoint(model, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 11])
        with pytest.raises(TruncatedPayload):
            enc.load_checkpoint(path)

    def test_config_mismatch_rejected(self, tmp_path):
        model = enc.init_model(TINY, seed=6)
        path = tmp_path / "m.hsm"
        enc.save_checkpoint(model, path)
        other = enc.VisionConfig(window=3, token_edge=3, depth=4, embed=16,
                                 layers=2, heads=2, mlp=8, proj=16)
        with pytest.raises(VersionMismatch):
            enc.load_checkpoint(path, expect_config=other)

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        a, b = tmp_path / "a.hsm", tmp_path / "b.hsm"
        enc.save_checkpoint(enc.init_model(TINY, seed=6), a)
        enc.save_checkpoint(enc.init_model(TINY, seed=6), b)
        assert a.read_bytes() == b.read_bytes()
