"""Feed-forward layer primitives with analytic backward passes.

Convolutions are NHWC with same padding, realized as one im2col GEMM per
layer; max-pooling routes gradients through the argmax (first maximum on
ties, so checks stay deterministic); batch norm backpropagates through
the batch statistics; dropout is inverted so inference is the identity.
"""

from __future__ import annotations

import numpy as np


def relu_forward(x):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(dy, mask):
    return dy * mask


def conv2d_forward(x, w, b):
    """Same-padding stride-1 convolution. x: (B,T,F,Ci), w: (kh,kw,Ci,Co)."""
    bsz, t, f, ci = x.shape
    kh, kw, _, co = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    cols = np.empty((bsz, t, f, kh * kw * ci), dtype=x.dtype)
    k = 0
    for dy in range(kh):
        for dx in range(kw):
            cols[..., k * ci:(k + 1) * ci] = xp[:, dy:dy + t, dx:dx + f, :]
            k += 1
    y = cols.reshape(-1, kh * kw * ci) @ w.reshape(-1, co) + b
    return y.reshape(bsz, t, f, co), (cols, x.shape, w)


def conv2d_backward(dy, cache):
    cols, xshape, w = cache
    bsz, t, f, ci = xshape
    kh, kw, _, co = w.shape
    ph, pw = kh // 2, kw // 2
    dyf = dy.reshape(-1, co)
    dw = (cols.reshape(-1, kh * kw * ci).T @ dyf).reshape(w.shape)
    db = dyf.sum(axis=0)
    dcols = (dyf @ w.reshape(-1, co).T).reshape(bsz, t, f, kh * kw * ci)
    dxp = np.zeros((bsz, t + 2 * ph, f + 2 * pw, ci), dtype=dy.dtype)
    k = 0
    for ddy in range(kh):
        for ddx in range(kw):
            dxp[:, ddy:ddy + t, ddx:ddx + f, :] += dcols[..., k * ci:(k + 1) * ci]
            k += 1
    return dxp[:, ph:ph + t, pw:pw + f, :], dw, db


def batchnorm_forward(x, gamma, beta, run_mean, run_var, train,
                      momentum=0.99, eps=1e-5):
    """Per-channel batch norm over (B,T,F). Mutates running stats in train mode."""
    if train:
        mu = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        run_mean *= momentum
        run_mean += (1.0 - momentum) * mu
        run_var *= momentum
        run_var += (1.0 - momentum) * var
    else:
        mu, var = run_mean, run_var
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * ivar
    y = gamma * xhat + beta
    return y, (xhat, ivar, gamma, train)


def batchnorm_backward(dy, cache):
    xhat, ivar, gamma, train = cache
    dgamma = (dy * xhat).sum(axis=(0, 1, 2))
    dbeta = dy.sum(axis=(0, 1, 2))
    dxhat = dy * gamma
    if not train:
        return dxhat * ivar, dgamma, dbeta
    # Through the batch statistics: dx = ivar*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
    mean_dxhat = dxhat.mean(axis=(0, 1, 2))
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 1, 2))
    return ivar * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat), dgamma, dbeta


def maxpool_forward(x, pool):
    """Non-overlapping (pt, pf) max-pool; dims must divide exactly."""
    pt, pf = pool
    bsz, t, f, c = x.shape
    t2, f2 = t // pt, f // pf
    xr = (x.reshape(bsz, t2, pt, f2, pf, c)
           .transpose(0, 1, 3, 5, 2, 4)
           .reshape(bsz, t2, f2, c, pt * pf))
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape, pool)


def maxpool_backward(dy, cache):
    idx, xshape, (pt, pf) = cache
    bsz, t, f, c = xshape
    t2, f2 = t // pt, f // pf
    dxr = np.zeros((bsz, t2, f2, c, pt * pf), dtype=dy.dtype)
    np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
    return (dxr.reshape(bsz, t2, f2, c, pt, pf)
               .transpose(0, 1, 4, 2, 5, 3)
               .reshape(bsz, t, f, c))


def dropout_forward(x, p, rng):
    """Inverted dropout: scales kept units by 1/(1-p) so inference is identity."""
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy * mask


def dense_forward(x, w, b):
    """Affine map over the last axis; leading axes are batch-like."""
    y = x.reshape(-1, x.shape[-1]) @ w + b
    return y.reshape(x.shape[:-1] + (w.shape[1],)), (x, w)


def dense_backward(dy, cache):
    x, w = cache
    dyf = dy.reshape(-1, dy.shape[-1])
    xf = x.reshape(-1, x.shape[-1])
    dw = xf.T @ dyf
    db = dyf.sum(axis=0)
    dx = (dyf @ w.T).reshape(x.shape)
    return dx, dw, db


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, labels):
    """Mean categorical cross-entropy for integer labels."""
    b = probs.shape[0]
    picked = probs[np.arange(b), labels]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def softmax_ce_backward(probs, labels):
    """d(mean CE)/d(logits) = (probs - onehot) / B."""
    b = probs.shape[0]
    d = probs.copy()
    d[np.arange(b), labels] -= 1.0
    return d / b
