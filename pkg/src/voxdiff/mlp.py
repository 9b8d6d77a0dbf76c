"""Trainable MLP denoiser with hand-written backpropagation.

Desk-scale stand-in for a large denoising network: a fully connected trunk on
the flattened one-hot grid plus sinusoidal time features and a learned
condition embedding, two tanh hidden layers, and per-token output heads that
read the shared hidden state. Each token's head also receives that token's
own time-faded evidence (1 - t) onehot(x_t^i) + t/K through a weight matrix
S shared across tokens: the trunk bottleneck cannot carry the near-identity
map needed at small corruption levels, and the (1 - t) gate fades the copy
path as the token stops being evidence (with time conditioning dropped the
gate sees the forced t = 0). The condition enters twice: as a learned
embedding in the trunk input and as a per-class output bias C, the direct
path that lets conditioning shape per-token marginals within a small
training budget. Logits pass through the centered tanh truncation before
the row softmax, at training and at sampling time alike. Gradients of the
Rao-Blackwellized loss are computed analytically and are checkable against
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import Denoiser, process_logits, softmax
from .errors import ConfigError, NumericError
from .loss import f_rb, f_rb_grad_ybar
from .rng import stream
from .schedule import Schedule, alpha, alpha_prime

__all__ = ["MlpConfig", "MlpDenoiser", "mlp_grad", "sgd_update"]

PARAM_NAMES = ("E", "W1", "b1", "W2", "b2", "W3", "b3", "S", "C")


@dataclass(frozen=True)
class MlpConfig:
    shape: tuple[int, ...]
    K: int = 2
    hidden: tuple[int, ...] = (128, 128)
    n_freq: int = 8
    cond_dim: int = 16
    n_classes: int = 0
    time_conditioned: bool = True
    tau: float = 5.0

    def __post_init__(self):
        if len(self.hidden) != 2:
            raise ConfigError("the trunk uses exactly two hidden layers")
        if self.K < 2 or self.n_freq < 1 or self.cond_dim < 1:
            raise ConfigError("invalid model dimensions")

    @property
    def L(self) -> int:
        return int(np.prod(self.shape))

    @property
    def input_dim(self) -> int:
        return self.L * self.K + 2 * self.n_freq + self.cond_dim


class MlpDenoiser(Denoiser):
    def __init__(self, config: MlpConfig, params: dict | None = None, seed: int = 0):
        self.config = config
        self.shape = tuple(config.shape)
        self.K = config.K
        self.n_states = config.K
        self.time_conditioned = config.time_conditioned
        self.params = params if params is not None else self._init_params(seed)
        self._check_params()

    def _init_params(self, seed: int) -> dict:
        cfg = self.config
        h1, h2 = cfg.hidden
        dims = {
            "E": (cfg.n_classes + 1, cfg.cond_dim),
            "W1": (cfg.input_dim, h1),
            "b1": (h1,),
            "W2": (h1, h2),
            "b2": (h2,),
            "W3": (h2, cfg.L * cfg.K),
            "b3": (cfg.L * cfg.K,),
            "S": (cfg.K, cfg.K),
            "C": (cfg.n_classes + 1, cfg.L * cfg.K),
        }
        params = {}
        for name, shape in dims.items():
            g = stream(seed, "init", name)
            if name.startswith("b") or name in ("S", "C"):
                params[name] = np.zeros(shape)
            else:
                fan_in = shape[0]
                params[name] = g.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        return params

    def _check_params(self):
        for name in PARAM_NAMES:
            if name not in self.params:
                raise ConfigError(f"missing parameter {name}")
            if not np.all(np.isfinite(self.params[name])):
                raise NumericError(f"parameter {name} contains non-finite values")

    @property
    def null_class(self) -> int:
        return self.config.n_classes

    def _time_features(self, t, batch: int) -> np.ndarray:
        tv = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        if not self.time_conditioned:
            tv = np.zeros(batch)
        j = np.arange(self.config.n_freq)
        ang = np.pi * tv[:, None] * (2.0**j)[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def _cond_indices(self, cond, batch: int) -> np.ndarray:
        if cond is None:
            return np.full(batch, self.null_class, dtype=np.int64)
        arr = np.broadcast_to(np.asarray(cond, dtype=np.int64), (batch,)).copy()
        arr[arr < 0] = self.null_class
        if arr.max(initial=0) > self.null_class:
            raise ConfigError("condition id exceeds the configured class count")
        return arr

    def forward(self, tokens: np.ndarray, t, cond) -> dict:
        """Full forward pass; returns activations needed for backprop."""
        cfg = self.config
        X = np.asarray(tokens, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != cfg.L:
            raise ConfigError(f"tokens must be (B, {cfg.L}), got {X.shape}")
        B = X.shape[0]
        onehot = np.eye(cfg.K)[X]
        x1h = onehot.reshape(B, cfg.L * cfg.K)
        tf = self._time_features(t, B)
        ci = self._cond_indices(cond, B)
        ce = self.params["E"][ci]
        inp = np.concatenate([x1h, tf, ce], axis=1)
        a1 = inp @ self.params["W1"] + self.params["b1"]
        h1 = np.tanh(a1)
        a2 = h1 @ self.params["W2"] + self.params["b2"]
        h2 = np.tanh(a2)
        tv = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
        if not self.time_conditioned:
            tv = np.zeros(B)
        gate = (1.0 - tv)[:, None, None]
        evidence = gate * onehot + (1.0 - gate) / cfg.K
        raw = h2 @ self.params["W3"] + self.params["b3"] + self.params["C"][ci]
        raw = raw.reshape(B, cfg.L, cfg.K) + evidence @ self.params["S"]
        if not np.all(np.isfinite(raw)):
            raise NumericError("non-finite activation in the forward pass")
        z = process_logits(raw, cfg.tau)
        p = softmax(z)
        return {
            "inp": inp,
            "evidence": evidence,
            "h1": h1,
            "h2": h2,
            "z": z,
            "p": p,
            "ci": ci,
            "B": B,
        }

    def predict_batch(self, tokens: np.ndarray, t, cond) -> np.ndarray:
        return self.forward(tokens, t, cond)["p"]

    def clone(self) -> "MlpDenoiser":
        return MlpDenoiser(
            self.config, {k: v.copy() for k, v in self.params.items()}
        )


def mlp_grad(
    model: MlpDenoiser,
    x0: np.ndarray,
    x_t: np.ndarray,
    t: np.ndarray,
    cond,
    schedule: Schedule,
) -> tuple[float, dict]:
    """Mean per-token Rao-Blackwellized loss over a batch and its gradients.

    x0, x_t: (B, L) integer tokens; t: per-item times (B,). Returns
    (loss, grads keyed like model.params). Gradient reductions use numpy
    pairwise summation, so accumulation order is stable.
    """
    cfg = model.config
    x0 = np.asarray(x0, dtype=np.int64)
    x_t = np.asarray(x_t, dtype=np.int64)
    if x0.shape != x_t.shape or x0.ndim != 2:
        raise ConfigError("x0 and x_t must both be (B, L)")
    B, L = x0.shape
    tv = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
    cache = model.forward(x_t, tv, cond)
    p = cache["p"]
    a = np.asarray(alpha(schedule, tv)).reshape(B, 1, 1)
    ap = np.asarray(alpha_prime(schedule, tv)).reshape(B, 1, 1)
    ybar = cfg.K * a * p + (1.0 - a)

    loss_tok = np.empty((B, L))
    dL_dybar = np.empty_like(ybar)
    for b in range(B):
        ab = float(a[b, 0, 0])
        apb = float(ap[b, 0, 0])
        loss_tok[b] = f_rb(x_t[b], x0[b], p[b], ab, apb, cfg.K)
        dL_dybar[b] = f_rb_grad_ybar(x_t[b], x0[b], ybar[b], ab, apb, cfg.K)
    loss = float(loss_tok.mean())
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss")

    scale = 1.0 / (B * L)
    dp = (cfg.K * a) * dL_dybar * scale
    dz = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
    du = dz * (1.0 - (cache["z"] / cfg.tau) ** 2)
    draw3 = du - du.mean(axis=-1, keepdims=True)
    draw = draw3.reshape(B, L * cfg.K)

    grads = {}
    h2, h1, inp = cache["h2"], cache["h1"], cache["inp"]
    grads["S"] = np.einsum("blk,blm->km", cache["evidence"], draw3)
    grads["W3"] = h2.T @ draw
    grads["b3"] = draw.sum(axis=0)
    grads["C"] = np.zeros_like(model.params["C"])
    np.add.at(grads["C"], cache["ci"], draw)
    dh2 = draw @ model.params["W3"].T
    da2 = dh2 * (1.0 - h2**2)
    grads["W2"] = h1.T @ da2
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ model.params["W2"].T
    da1 = dh1 * (1.0 - h1**2)
    grads["W1"] = inp.T @ da1
    grads["b1"] = da1.sum(axis=0)
    dinp = da1 @ model.params["W1"].T
    dce = dinp[:, cfg.L * cfg.K + 2 * cfg.n_freq :]
    grads["E"] = np.zeros_like(model.params["E"])
    np.add.at(grads["E"], cache["ci"], dce)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    return loss, grads


def sgd_update(
    params: dict,
    grads: dict,
    velocity: dict,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
) -> None:
    """In-place SGD with momentum and decoupled weight decay."""
    for name, g in grads.items():
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(g)
            velocity[name] = v
        v *= momentum
        v += g
        params[name] -= lr * v
        if weight_decay and not name.startswith("b"):
            params[name] -= lr * weight_decay * params[name]


def adamw_update(
    params: dict,
    grads: dict,
    state: dict,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """In-place Adam with decoupled weight decay.

    Per-parameter normalization matters here: the per-token output weights
    see gradients diluted by 1/L relative to the trunk, which plain SGD
    cannot equalize within a small step budget.
    """
    b1, b2 = betas
    step = state.get("step", 0) + 1
    state["step"] = step
    for name, g in grads.items():
        m = state.setdefault("m_" + name, np.zeros_like(g))
        v = state.setdefault("v_" + name, np.zeros_like(g))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1**step)
        vhat = v / (1 - b2**step)
        params[name] -= lr * mhat / (np.sqrt(vhat) + eps)
        if weight_decay and not name.startswith("b"):
            params[name] -= lr * weight_decay * params[name]
