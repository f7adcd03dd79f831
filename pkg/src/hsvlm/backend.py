"""Hot numeric kernels with two interchangeable implementations.

Every kernel exists twice: a numba @njit version and a plain numpy
version. The active set is picked once at import time from the
HSVLM_BACKEND environment variable:

    HSVLM_BACKEND=numba   force numba (ImportError if unavailable)
    HSVLM_BACKEND=numpy   force the pure-numpy path
    unset / auto          numba when importable, numpy otherwise

Both paths accumulate reductions in float64 and keep a fixed loop
order, so results are deterministic per backend at any thread count.
`benchmarks/bench_backends.py` compares the two.
"""

import math
import os

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


# ---------------------------------------------------------------- numpy path

def _np_gelu_fwd(x):
    x64 = x.astype(np.float64)
    u = _GELU_C * (x64 + _GELU_A * x64 ** 3)
    return (0.5 * x64 * (1.0 + np.tanh(u))).astype(x.dtype)


def _np_gelu_bwd(x, gout):
    x64 = x.astype(np.float64)
    u = _GELU_C * (x64 + _GELU_A * x64 ** 3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x64 ** 2)
    d = 0.5 * (1.0 + t) + 0.5 * x64 * (1.0 - t * t) * du
    return (gout.astype(np.float64) * d).astype(x.dtype)


def _np_layernorm_fwd(x, gamma, beta, eps):
    x64 = x.astype(np.float64)
    mu = x64.mean(axis=1)
    var = x64.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mu[:, None]) * rstd[:, None]
    y = xhat * gamma.astype(np.float64) + beta.astype(np.float64)
    return y.astype(x.dtype), mu, rstd


def _np_layernorm_bwd(x, gamma, mu, rstd, gout):
    x64 = x.astype(np.float64)
    g64 = gout.astype(np.float64)
    xhat = (x64 - mu[:, None]) * rstd[:, None]
    gh = g64 * gamma.astype(np.float64)
    m1 = gh.mean(axis=1, keepdims=True)
    m2 = (gh * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gh - m1 - xhat * m2)
    ggamma = (g64 * xhat).sum(axis=0)
    gbeta = g64.sum(axis=0)
    return gx.astype(x.dtype), ggamma.astype(gamma.dtype), gbeta.astype(gamma.dtype)


def _np_softmax_rows(x):
    x64 = x.astype(np.float64)
    m = x64.max(axis=1, keepdims=True)
    e = np.exp(x64 - m)
    return (e / e.sum(axis=1, keepdims=True)).astype(x.dtype)


def _np_adam_update(p, g, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    p -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.dtype)


def _np_extract_patches(padded, coords, s):
    n = coords.shape[0]
    d = padded.shape[2]
    out = np.empty((n, s, s, d), dtype=padded.dtype)
    for i in range(n):
        h, w = coords[i, 0], coords[i, 1]
        out[i] = padded[h:h + s, w:w + s, :]
    return out


_NUMPY_IMPL = {
    "gelu_fwd": _np_gelu_fwd,
    "gelu_bwd": _np_gelu_bwd,
    "layernorm_fwd": _np_layernorm_fwd,
    "layernorm_bwd": _np_layernorm_bwd,
    "softmax_rows": _np_softmax_rows,
    "adam_update": _np_adam_update,
    "extract_patches": _np_extract_patches,
}


# ---------------------------------------------------------------- numba path

def _build_numba_impl():
    from numba import njit

    @njit(cache=True)
    def nb_gelu_fwd(x):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xv = float(flat_x[i])
            u = _GELU_C * (xv + _GELU_A * xv * xv * xv)
            flat_o[i] = 0.5 * xv * (1.0 + math.tanh(u))
        return out

    @njit(cache=True)
    def nb_gelu_bwd(x, gout):
        out = np.empty_like(x)
        flat_x = x.ravel()
        flat_g = gout.ravel()
        flat_o = out.ravel()
        for i in range(flat_x.size):
            xv = float(flat_x[i])
            u = _GELU_C * (xv + _GELU_A * xv * xv * xv)
            t = math.tanh(u)
            du = _GELU_C * (1.0 + 3.0 * _GELU_A * xv * xv)
            d = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du
            flat_o[i] = float(flat_g[i]) * d
        return out

    @njit(cache=True)
    def nb_layernorm_fwd(x, gamma, beta, eps):
        rows, cols = x.shape
        y = np.empty_like(x)
        mu = np.empty(rows, dtype=np.float64)
        rstd = np.empty(rows, dtype=np.float64)
        for r in range(rows):
            acc = 0.0
            for c in range(cols):
                acc += float(x[r, c])
            m = acc / cols
            acc2 = 0.0
            for c in range(cols):
                d = float(x[r, c]) - m
                acc2 += d * d
            rs = 1.0 / math.sqrt(acc2 / cols + eps)
            mu[r] = m
            rstd[r] = rs
            for c in range(cols):
                xhat = (float(x[r, c]) - m) * rs
                y[r, c] = xhat * float(gamma[c]) + float(beta[c])
        return y, mu, rstd

    @njit(cache=True)
    def nb_layernorm_bwd(x, gamma, mu, rstd, gout):
        rows, cols = x.shape
        gx = np.empty_like(x)
        ggamma = np.zeros(cols, dtype=np.float64)
        gbeta = np.zeros(cols, dtype=np.float64)
        for r in range(rows):
            m = mu[r]
            rs = rstd[r]
            m1 = 0.0
            m2 = 0.0
            for c in range(cols):
                xhat = (float(x[r, c]) - m) * rs
                gh = float(gout[r, c]) * float(gamma[c])
                m1 += gh
                m2 += gh * xhat
                ggamma[c] += float(gout[r, c]) * xhat
                gbeta[c] += float(gout[r, c])
            m1 /= cols
            m2 /= cols
            for c in range(cols):
                xhat = (float(x[r, c]) - m) * rs
                gh = float(gout[r, c]) * float(gamma[c])
                gx[r, c] = rs * (gh - m1 - xhat * m2)
        return gx, ggamma.astype(gamma.dtype), gbeta.astype(gamma.dtype)

    @njit(cache=True)
    def nb_softmax_rows(x):
        rows, cols = x.shape
        out = np.empty_like(x)
        for r in range(rows):
            m = float(x[r, 0])
            for c in range(1, cols):
                if float(x[r, c]) > m:
                    m = float(x[r, c])
            acc = 0.0
            for c in range(cols):
                e = math.exp(float(x[r, c]) - m)
                out[r, c] = e
                acc += e
            for c in range(cols):
                out[r, c] = float(out[r, c]) / acc
        return out

    @njit(cache=True)
    def nb_adam_update(p, g, m, v, lr, b1, b2, eps, t):
        fp = p.ravel()
        fg = g.ravel()
        fm = m.ravel()
        fv = v.ravel()
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for i in range(fp.size):
            gv = float(fg[i])
            fm[i] = b1 * fm[i] + (1.0 - b1) * gv
            fv[i] = b2 * fv[i] + (1.0 - b2) * gv * gv
            mhat = fm[i] / c1
            vhat = fv[i] / c2
            fp[i] = fp[i] - lr * mhat / (math.sqrt(vhat) + eps)

    @njit(cache=True)
    def nb_extract_patches(padded, coords, s):
        n = coords.shape[0]
        d = padded.shape[2]
        out = np.empty((n, s, s, d), dtype=padded.dtype)
        for i in range(n):
            h = coords[i, 0]
            w = coords[i, 1]
            for a in range(s):
                for b in range(s):
                    for c in range(d):
                        out[i, a, b, c] = padded[h + a, w + b, c]
        return out

    return {
        "gelu_fwd": nb_gelu_fwd,
        "gelu_bwd": nb_gelu_bwd,
        "layernorm_fwd": nb_layernorm_fwd,
        "layernorm_bwd": nb_layernorm_bwd,
        "softmax_rows": nb_softmax_rows,
        "adam_update": nb_adam_update,
        "extract_patches": nb_extract_patches,
    }


def _select():
    want = os.environ.get("HSVLM_BACKEND", "auto").lower()
    if want not in ("auto", "numba", "numpy"):
        raise ValueError(f"HSVLM_BACKEND must be auto|numba|numpy, got {want!r}")
    if want == "numpy":
        return "numpy", _NUMPY_IMPL
    try:
        return "numba", _build_numba_impl()
    except ImportError:
        if want == "numba":
            raise
        return "numpy", _NUMPY_IMPL


ACTIVE_BACKEND, _IMPL = _select()

gelu_fwd = _IMPL["gelu_fwd"]
gelu_bwd = _IMPL["gelu_bwd"]
layernorm_fwd = _IMPL["layernorm_fwd"]
layernorm_bwd = _IMPL["layernorm_bwd"]
softmax_rows = _IMPL["softmax_rows"]
adam_update = _IMPL["adam_update"]
extract_patches = _IMPL["extract_patches"]
