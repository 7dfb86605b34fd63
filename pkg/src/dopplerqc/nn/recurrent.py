"""GRU layer: exact gate recurrence with full backpropagation through time.

Forward, per step (sigma = logistic, (.) = elementwise product):

    z_t = sigma(W_z x_t + U_z h_{t-1} + b_z)
    r_t = sigma(W_r x_t + U_r h_{t-1} + b_r)
    hcand_t = tanh(W_h x_t + U_h (r_t . h_{t-1}) + b_h)
    h_t = (1 - z_t) . h_{t-1} + z_t . hcand_t

with h_0 = 0. Input projections for all steps are batched into single
GEMMs; the step loop only carries the recurrent terms.
"""

from __future__ import annotations

import numpy as np

GRU_PARAM_NAMES = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_forward(x_seq, p):
    """x_seq: (B,T,D) -> h_seq: (B,T,U)."""
    bsz, t_len, d = x_seq.shape
    units = p["Uz"].shape[0]
    x2 = x_seq.reshape(-1, d)
    xz = (x2 @ p["Wz"] + p["bz"]).reshape(bsz, t_len, units)
    xr = (x2 @ p["Wr"] + p["br"]).reshape(bsz, t_len, units)
    xh = (x2 @ p["Wh"] + p["bh"]).reshape(bsz, t_len, units)

    h = np.zeros((bsz, units), dtype=x_seq.dtype)
    h_seq = np.empty((bsz, t_len, units), dtype=x_seq.dtype)
    zs = np.empty((t_len, bsz, units), dtype=x_seq.dtype)
    rs = np.empty_like(zs)
    hcands = np.empty_like(zs)
    hprevs = np.empty_like(zs)
    for t in range(t_len):
        hprevs[t] = h
        z = _sigmoid(xz[:, t] + h @ p["Uz"])
        r = _sigmoid(xr[:, t] + h @ p["Ur"])
        hcand = np.tanh(xh[:, t] + (r * h) @ p["Uh"])
        h = (1.0 - z) * h + z * hcand
        zs[t], rs[t], hcands[t] = z, r, hcand
        h_seq[:, t] = h
    return h_seq, (x_seq, zs, rs, hcands, hprevs, p)


def gru_backward(dh_seq, cache):
    """dh_seq: (B,T,U) gradient on every emitted state; returns (dx_seq, grads)."""
    x_seq, zs, rs, hcands, hprevs, p = cache
    bsz, t_len, d = x_seq.shape
    units = zs.shape[2]

    daz = np.empty((t_len, bsz, units), dtype=dh_seq.dtype)
    dar = np.empty_like(daz)
    dah = np.empty_like(daz)
    carry = np.zeros((bsz, units), dtype=dh_seq.dtype)
    uz_t, ur_t, uh_t = p["Uz"].T, p["Ur"].T, p["Uh"].T
    for t in range(t_len - 1, -1, -1):
        dh = dh_seq[:, t] + carry
        z, r, hcand, hprev = zs[t], rs[t], hcands[t], hprevs[t]
        dz = dh * (hcand - hprev)
        dhc = dh * z
        dhp = dh * (1.0 - z)
        a_h = dhc * (1.0 - hcand * hcand)
        drh = a_h @ uh_t
        dr = drh * hprev
        dhp += drh * r
        a_r = dr * r * (1.0 - r)
        a_z = dz * z * (1.0 - z)
        dhp += a_r @ ur_t + a_z @ uz_t
        daz[t], dar[t], dah[t] = a_z, a_r, a_h
        carry = dhp

    # Weight gradients batched over all steps.
    x2 = x_seq.reshape(-1, d)
    hp2 = hprevs.transpose(1, 0, 2).reshape(-1, units)
    rh2 = (rs * hprevs).transpose(1, 0, 2).reshape(-1, units)
    az2 = daz.transpose(1, 0, 2).reshape(-1, units)
    ar2 = dar.transpose(1, 0, 2).reshape(-1, units)
    ah2 = dah.transpose(1, 0, 2).reshape(-1, units)
    grads = {
        "Wz": x2.T @ az2, "Uz": hp2.T @ az2, "bz": az2.sum(axis=0),
        "Wr": x2.T @ ar2, "Ur": hp2.T @ ar2, "br": ar2.sum(axis=0),
        "Wh": x2.T @ ah2, "Uh": rh2.T @ ah2, "bh": ah2.sum(axis=0),
    }
    dx = (az2 @ p["Wz"].T + ar2 @ p["Wr"].T + ah2 @ p["Wh"].T).reshape(x_seq.shape)
    return dx, grads
