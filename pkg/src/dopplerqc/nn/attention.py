"""Additive attention pooling over a state sequence.

    u_t = tanh(W h_t + b)
    alpha_t = softmax_t(u_t . u)        (max-subtracted for stability)
    v = sum_t alpha_t h_t

The relevance vector u is learned alongside W and b.
"""

from __future__ import annotations

import numpy as np

ATTENTION_PARAM_NAMES = ("W", "b", "u")


def attention_forward(h_seq, p):
    """h_seq: (B,T,U) -> pooled v: (B,U), weights alpha: (B,T)."""
    bsz, t_len, units = h_seq.shape
    att = p["W"].shape[1]
    ut = np.tanh(h_seq.reshape(-1, units) @ p["W"] + p["b"]).reshape(bsz, t_len, att)
    scores = ut @ p["u"]
    scores = scores - scores.max(axis=1, keepdims=True)
    ex = np.exp(scores)
    alpha = ex / ex.sum(axis=1, keepdims=True)
    v = np.einsum("bt,btu->bu", alpha, h_seq)
    return v, alpha, (h_seq, ut, alpha, p)


def attention_backward(dv, cache):
    """Returns (dh_seq, grads) for upstream gradient on v only."""
    h_seq, ut, alpha, p = cache
    bsz, t_len, units = h_seq.shape
    att = ut.shape[2]

    dh = alpha[:, :, None] * dv[:, None, :]
    dalpha = np.einsum("bu,btu->bt", dv, h_seq)
    # softmax backward within each sequence
    dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dut = dscores[:, :, None] * p["u"]
    du = np.einsum("bt,bta->a", dscores, ut)
    dpre = dut * (1.0 - ut * ut)
    dpre2 = dpre.reshape(-1, att)
    grads = {
        "W": h_seq.reshape(-1, units).T @ dpre2,
        "b": dpre2.sum(axis=0),
        "u": du,
    }
    dh += (dpre2 @ p["W"].T).reshape(h_seq.shape)
    return dh, grads
