"""Model assembly: configuration, initialization, forward and backward.

Three architecture variants share the layer stack:

  cga  conv blocks -> per-step flatten -> GRU -> dense(ReLU, per step)
       -> attention -> softmax output (the full model)
  ca   conv blocks -> per-step flatten -> dense(ReLU, per step)
       -> attention -> softmax output (no recurrence)
  ga   raw frequency-vector sequence -> GRU -> attention -> softmax output

Default geometry: 250x40 scalograms, conv filters 32/64/128 with pools
(2,2),(1,2),(1,2), GRU and dense width 50, five output classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from . import attention as attn
from . import layers as L
from . import recurrent as rnn

ARCHITECTURES = ("cga", "ca", "ga")


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "cga"
    input_time: int = 250
    input_freq: int = 40
    conv_filters: tuple[int, ...] = (32, 64, 128)
    pool_plan: tuple[tuple[int, int], ...] = ((2, 2), (1, 2), (1, 2))
    kernel: tuple[int, int] = (3, 3)
    dropout: float = 0.25
    gru_units: int = 50
    dense_units: int = 50
    attention_dim: int = 50
    n_classes: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise DataError(f"unknown architecture {self.arch!r}, want one of {ARCHITECTURES}")
        if self.arch != "ga":
            if len(self.pool_plan) != len(self.conv_filters):
                raise DataError("pool_plan length must match conv_filters")
            t, f = self.input_time, self.input_freq
            for pt, pf in self.pool_plan:
                if t % pt or f % pf:
                    raise DataError(
                        f"pool plan does not divide propagated dims exactly "
                        f"({t}x{f} vs pool {pt}x{pf})"
                    )
                t //= pt
                f //= pf

    @property
    def conv_out_dims(self) -> tuple[int, int, int]:
        """(T', F', C) after all conv blocks."""
        t, f = self.input_time, self.input_freq
        for pt, pf in self.pool_plan:
            t //= pt
            f //= pf
        return t, f, self.conv_filters[-1]

    @property
    def sequence_feature_dim(self) -> int:
        if self.arch == "ga":
            return self.input_freq
        _, f, c = self.conv_out_dims
        return f * c

    @property
    def attention_input_dim(self) -> int:
        if self.arch == "ga":
            return self.gru_units
        return self.dense_units


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _orthogonal(rng, n, dtype):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return (q * np.sign(np.diag(r))).astype(dtype)


def init_weights(config: ModelConfig, dtype=np.float64) -> dict[str, np.ndarray]:
    """Seeded initialization: Glorot-uniform feed-forward/conv kernels,
    orthogonal GRU recurrent matrices, zero biases, identity batch-norm."""
    rng = np.random.default_rng(config.seed)
    p: dict[str, np.ndarray] = {}
    kh, kw = config.kernel
    if config.arch != "ga":
        c_in = 1
        for i, c_out in enumerate(config.conv_filters):
            rf = kh * kw
            p[f"conv{i}_kernel"] = _glorot(rng, (kh, kw, c_in, c_out),
                                           rf * c_in, rf * c_out, dtype)
            p[f"conv{i}_bias"] = np.zeros(c_out, dtype)
            p[f"conv{i}_bn_gamma"] = np.ones(c_out, dtype)
            p[f"conv{i}_bn_beta"] = np.zeros(c_out, dtype)
            p[f"conv{i}_bn_mean"] = np.zeros(c_out, dtype)
            p[f"conv{i}_bn_var"] = np.ones(c_out, dtype)
            c_in = c_out
    d = config.sequence_feature_dim
    u = config.gru_units
    if config.arch != "ca":
        for gate in ("z", "r", "h"):
            p[f"gru_W{gate}"] = _glorot(rng, (d, u), d, u, dtype)
            p[f"gru_U{gate}"] = _orthogonal(rng, u, dtype)
            p[f"gru_b{gate}"] = np.zeros(u, dtype)
    if config.arch != "ga":
        d_in = u if config.arch == "cga" else d
        p["dense1_W"] = _glorot(rng, (d_in, config.dense_units), d_in, config.dense_units, dtype)
        p["dense1_b"] = np.zeros(config.dense_units, dtype)
    a_in = config.attention_input_dim
    a = config.attention_dim
    p["attn_W"] = _glorot(rng, (a_in, a), a_in, a, dtype)
    p["attn_b"] = np.zeros(a, dtype)
    p["attn_u"] = _glorot(rng, (a,), a, 1, dtype)
    p["out_W"] = _glorot(rng, (a_in, config.n_classes), a_in, config.n_classes, dtype)
    p["out_b"] = np.zeros(config.n_classes, dtype)
    return p


# Batch-norm running statistics are state, not trained parameters.
def trainable_names(params: dict[str, np.ndarray]) -> list[str]:
    return [k for k in params if not (k.endswith("bn_mean") or k.endswith("bn_var"))]


class Model:
    """Forward/backward orchestration over a parameter dictionary.

    Inference over shared immutable params is thread-safe (forward never
    writes params except batch-norm running stats in train mode, and
    training is single-owner).
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 dtype=np.float64):
        self.config = config
        self.params = params if params is not None else init_weights(config, dtype)

    @property
    def dtype(self):
        return self.params["out_W"].dtype

    def forward(self, x, train: bool = False, dropout_rng=None, want_cache: bool = False):
        """x: (B, T_in, F_in) scalograms -> probs (B, n_classes).

        Train mode applies dropout (needs dropout_rng) and batch statistics;
        inference is deterministic. With want_cache, also returns the cache
        consumed by backward().
        """
        cfg = self.config
        p = self.params
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1] != cfg.input_time or x.shape[2] != cfg.input_freq:
            raise DataError(
                f"model input shape {x.shape} != (B, {cfg.input_time}, {cfg.input_freq})"
            )
        if train and cfg.dropout > 0 and cfg.arch != "ga" and dropout_rng is None:
            raise DataError("train-mode forward needs dropout_rng")

        caches: dict = {"train": train}
        h = x
        if cfg.arch != "ga":
            h = h[..., None]  # (B,T,F,1)
            conv_caches = []
            for i in range(len(cfg.conv_filters)):
                h, c_conv = L.conv2d_forward(h, p[f"conv{i}_kernel"], p[f"conv{i}_bias"])
                h, c_relu = L.relu_forward(h)
                h, c_bn = L.batchnorm_forward(
                    h, p[f"conv{i}_bn_gamma"], p[f"conv{i}_bn_beta"],
                    p[f"conv{i}_bn_mean"], p[f"conv{i}_bn_var"], train,
                )
                h, c_pool = L.maxpool_forward(h, cfg.pool_plan[i])
                if train and cfg.dropout > 0:
                    h, c_drop = L.dropout_forward(h, cfg.dropout, dropout_rng)
                else:
                    c_drop = None
                conv_caches.append((c_conv, c_relu, c_bn, c_pool, c_drop))
            caches["conv"] = conv_caches
            bsz, t2, f2, c2 = h.shape
            h = h.reshape(bsz, t2, f2 * c2)  # per-step flatten
        if cfg.arch != "ca":
            gru_params = {name: p[f"gru_{name}"] for name in rnn.GRU_PARAM_NAMES}
            h, caches["gru"] = rnn.gru_forward(h, gru_params)
        if cfg.arch != "ga":
            h, c_d1 = L.dense_forward(h, p["dense1_W"], p["dense1_b"])
            h, c_d1r = L.relu_forward(h)
            caches["dense1"] = (c_d1, c_d1r)
        att_params = {"W": p["attn_W"], "b": p["attn_b"], "u": p["attn_u"]}
        v, alpha, caches["attn"] = attn.attention_forward(h, att_params)
        logits, caches["out"] = L.dense_forward(v, p["out_W"], p["out_b"])
        probs = L.softmax(logits)
        caches["probs"] = probs
        if want_cache:
            return probs, caches
        return probs

    def backward(self, caches, labels) -> dict[str, np.ndarray]:
        """Gradients of mean categorical cross-entropy w.r.t. every
        trainable tensor, given the cache of a train-mode forward."""
        cfg = self.config
        grads: dict[str, np.ndarray] = {}
        dlogits = L.softmax_ce_backward(caches["probs"], labels)
        dv, grads["out_W"], grads["out_b"] = L.dense_backward(dlogits, caches["out"])
        dh, a_grads = attn.attention_backward(dv, caches["attn"])
        grads["attn_W"], grads["attn_b"], grads["attn_u"] = (
            a_grads["W"], a_grads["b"], a_grads["u"])
        if cfg.arch != "ga":
            c_d1, c_d1r = caches["dense1"]
            dh = L.relu_backward(dh, c_d1r)
            dh, grads["dense1_W"], grads["dense1_b"] = L.dense_backward(dh, c_d1)
        if cfg.arch != "ca":
            dh, g_grads = rnn.gru_backward(dh, caches["gru"])
            for name in rnn.GRU_PARAM_NAMES:
                grads[f"gru_{name}"] = g_grads[name]
        if cfg.arch != "ga":
            t2, f2, c2 = cfg.conv_out_dims
            dh = dh.reshape(dh.shape[0], t2, f2, c2)
            for i in range(len(cfg.conv_filters) - 1, -1, -1):
                c_conv, c_relu, c_bn, c_pool, c_drop = caches["conv"][i]
                if c_drop is not None:
                    dh = L.dropout_backward(dh, c_drop)
                dh = L.maxpool_backward(dh, c_pool)
                dh, grads[f"conv{i}_bn_gamma"], grads[f"conv{i}_bn_beta"] = (
                    L.batchnorm_backward(dh, c_bn))
                dh = L.relu_backward(dh, c_relu)
                dh, grads[f"conv{i}_kernel"], grads[f"conv{i}_bias"] = (
                    L.conv2d_backward(dh, c_conv))
        return grads

    def loss(self, probs, labels) -> float:
        return L.cross_entropy(probs, labels)


def predict_class(probs: np.ndarray) -> int:
    """Argmax with ties broken toward the lowest class index."""
    return int(np.argmax(probs))


def predict_classes(probs: np.ndarray) -> np.ndarray:
    return np.argmax(probs, axis=-1)
