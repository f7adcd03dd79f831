"""Central finite-difference checks for every differentiable kernel.

All checks run in float64 so the truncation error of the h=1e-3 stencil
dominates. Each case rebuilds its graph from perturbed leaves, compares
against the analytic gradient, and reports the worst relative error
rel = |a - b| / max(1e-8, |a| + |b|).
"""

import numpy as np

from . import autodiff as ad
from .contrast import LossVariant, NegativeSpec, loss_graph
from .encoder import VisionConfig, forward_graph, init_model
from .rng import Rng

FD_STEP = 1e-3


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


def check_gradients(builder, leaves, h: float = FD_STEP) -> float:
    """builder(list of Vars) -> scalar Var; returns worst relative error."""
    leaves = [np.asarray(x, dtype=np.float64) for x in leaves]
    vars_ = [ad.Var(x) for x in leaves]
    loss = builder(vars_)
    grads = ad.differentiate(loss, vars_)
    worst = 0.0
    for x, g in zip(leaves, grads):
        flat = x.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp = float(builder([ad.Var(y) for y in leaves]).value)
            flat[j] = orig - h
            lm = float(builder([ad.Var(y) for y in leaves]).value)
            flat[j] = orig
            fd = (lp - lm) / (2.0 * h)
            worst = max(worst, rel_err(float(gflat[j]), fd))
    return worst


def _weighted(out: ad.Var, rng: Rng) -> ad.Var:
    # small weights keep |loss| ~ O(1): finite-difference roundoff on
    # structurally-zero gradients then stays below the 1e-8 rel floor
    w = rng.normal(out.value.shape, std=0.2, dtype=np.float64)
    return ad.sum_all(ad.mul(out, ad.constant(w, dtype=np.float64)))


def kernel_cases():
    """(name, builder, leaves) triples covering the closed operator set."""
    rng = Rng(1234)
    r = lambda *shape: rng.normal(shape, dtype=np.float64)

    cases = []

    wr = Rng(99)
    cases.append(("matmul_2d",
                  lambda v: _weighted(ad.matmul(v[0], v[1]), wr.clone()),
                  [r(5, 4), r(4, 6)]))
    cases.append(("matmul_batched",
                  lambda v: _weighted(ad.matmul(v[0], v[1]), wr.clone()),
                  [r(2, 3, 4), r(4, 5)]))
    cases.append(("add_broadcast",
                  lambda v: _weighted(ad.add(v[0], v[1]), wr.clone()),
                  [r(3, 4, 5), r(5)]))
    cases.append(("mul_scalar",
                  lambda v: _weighted(ad.mul(v[0], ad.exp(v[1])), wr.clone()),
                  [r(4, 4), np.asarray(0.3)]))
    cases.append(("layernorm",
                  lambda v: _weighted(ad.layernorm(v[0], v[1], v[2]), wr.clone()),
                  [r(4, 8), 1.0 + 0.1 * r(8), 0.1 * r(8)]))
    cases.append(("gelu",
                  lambda v: _weighted(ad.gelu(v[0]), wr.clone()),
                  [r(4, 6)]))
    cases.append(("softmax",
                  lambda v: _weighted(ad.softmax(v[0]), wr.clone()),
                  [r(4, 7)]))
    cases.append(("l2norm_rows",
                  lambda v: _weighted(ad.l2norm_rows(v[0]), wr.clone()),
                  [1.0 + 0.2 * r(4, 6)]))
    cases.append(("softmax_ce",
                  lambda v: ad.mean_all(ad.softmax_ce_rows(v[0], np.asarray([0, 2, 1]))),
                  [r(3, 5)]))

    def attention(v):
        x, wqkv, bqkv = v
        n, t, e = 2, 4, 8
        heads, hd = 2, 4
        qkv = ad.add(ad.matmul(x, wqkv), bqkv)
        parts = []
        for j in range(3):
            part = ad.slice_last(qkv, j * e, (j + 1) * e)
            part = ad.reshape(part, (n, t, heads, hd))
            parts.append(ad.transpose(part, (0, 2, 1, 3)))
        q, k, val = parts
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), hd ** -0.5)
        att = ad.matmul(ad.softmax(scores), val)
        att = ad.reshape(ad.transpose(att, (0, 2, 1, 3)), (n, t, e))
        return _weighted(att, wr.clone())

    cases.append(("attention", attention, [r(2, 4, 8), r(8, 24), r(24)]))

    def structure(v):
        a = ad.concat([v[0], v[1]], axis=1)
        b = ad.gather_axis1(a, np.asarray([0, 2, 3]))
        c = ad.gather_cols(ad.reshape(b, (2, 9)),
                           np.asarray([[0, 4, 8], [1, 3, 5]]))
        return _weighted(c, wr.clone())

    cases.append(("reshape_concat_gather", structure, [r(2, 2, 3), r(2, 2, 3)]))

    return cases


def tiny_encoder_case():
    """2 layers, embed 8, one 3x3 window; full forward + contrastive loss."""
    # init_std well above the production 0.02: a near-zero projection row
    # norm would make the l2-normalize direction ill-conditioned for the
    # h=1e-3 stencil without being a gradient defect
    config = VisionConfig(window=3, token_edge=3, depth=4, embed=8, layers=2,
                          heads=2, mlp=8, proj=16, init_std=0.3)
    model = init_model(config, seed=5).astype(np.float64)
    data_rng = Rng(77)
    patches = data_rng.normal((3, 3, 3, 4), dtype=np.float64)
    protos = data_rng.normal((4, 16), dtype=np.float64)
    protos /= np.sqrt((protos ** 2).sum(axis=1, keepdims=True))
    labels = np.asarray([0, 1, 3])
    names = list(model.params)
    # k_h = C-1 covers every wrong class, so the loss is invariant to the
    # selection order and finite differences stay smooth
    spec = NegativeSpec(k_h=3, k_s=0)

    def builder(vars_):
        pv = dict(zip(names, vars_))
        z = forward_graph(pv, patches, config, training=False)
        return loss_graph(z, protos, labels, spec, pv["logit_scale"],
                          Rng(0), LossVariant.NO_SEMI_HARD)

    return builder, [model.params[k] for k in names]


def run_gradient_suite(verbose: bool = False) -> float:
    worst = 0.0
    for name, builder, leaves in kernel_cases():
        err = check_gradients(builder, leaves)
        worst = max(worst, err)
        if verbose:
            print(f"  {name:24s} max rel err {err:.3e}")
    builder, leaves = tiny_encoder_case()
    err = check_gradients(builder, leaves)
    worst = max(worst, err)
    if verbose:
        print(f"  {'tiny_encoder':24s} max rel err {err:.3e}")
    return worst
