"""Predictive-posterior backends and logit post-processing.

A denoiser maps (corrupted grid, time, optional condition label) to per-token
predictive rows over clean categories. Two backends live in the package: the
exact Bayes oracle over an enumerable dataset (here) and a trainable MLP
(see mlp.py). Classifier-free guidance combines conditional and unconditional
log-probabilities as g = u + (1 + w)(c - u), so w = 0 degrades to the pure
conditional and w = -1 to the unconditional distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import Prior
from .errors import ConfigError, NumericError
from .grid import ProbField, TokenGrid
from .schedule import Schedule, alpha

LOG_FLOOR = 1e-300

__all__ = [
    "Denoiser",
    "OracleDenoiser",
    "GuidanceSchedule",
    "process_logits",
    "cfg_combine",
    "cfg_strength",
    "softmax",
]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def process_logits(raw: np.ndarray, tau: float = 5.0) -> np.ndarray:
    """Center rows by their mean, then saturate with tau * tanh(x / tau).

    Bounds every entry in (-tau, tau) and preserves the row argmax; removes
    the uninformative per-row shift before saturation.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    raw = np.asarray(raw, dtype=np.float64)
    centered = raw - raw.mean(axis=-1, keepdims=True)
    return tau * np.tanh(centered / tau)


def cfg_combine(cond_logp: np.ndarray, uncond_logp: np.ndarray, w: float) -> np.ndarray:
    """Guided rows from conditional/unconditional log-probabilities."""
    c = np.asarray(cond_logp, dtype=np.float64)
    u = np.asarray(uncond_logp, dtype=np.float64)
    if c.shape != u.shape:
        raise ConfigError(f"guidance shapes differ: {c.shape} vs {u.shape}")
    g = u + (1.0 + w) * (c - u)
    return softmax(g)


@dataclass(frozen=True)
class GuidanceSchedule:
    """Piecewise-constant guidance strength w(t).

    values[k] applies when exactly k breakpoints lie strictly below t, so
    ([0.5], [0.4, 0.7]) reads "0.7 if t > 0.5 else 0.4".
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        bs = tuple(float(b) for b in self.breakpoints)
        vs = tuple(float(v) for v in self.values)
        if len(vs) != len(bs) + 1:
            raise ConfigError("need exactly one more strength than breakpoints")
        if any(not (0.0 <= b <= 1.0) for b in bs):
            raise ConfigError("breakpoints must lie in [0, 1]")
        if list(bs) != sorted(bs):
            raise ConfigError("breakpoints must be increasing")
        if not all(np.isfinite(vs)):
            raise ConfigError("guidance strengths must be finite")
        object.__setattr__(self, "breakpoints", bs)
        object.__setattr__(self, "values", vs)

    @classmethod
    def preset(cls, name: str) -> "GuidanceSchedule":
        presets = {
            "image": cls((0.5,), (0.4, 0.7)),
            "text": cls((0.5,), (0.4, 1.0)),
            "edit": cls((), (0.45,)),
        }
        if name not in presets:
            raise ConfigError(f"unknown guidance preset {name!r}")
        return presets[name]


def cfg_strength(sched: GuidanceSchedule, t: float) -> float:
    if not (0.0 <= t <= 1.0):
        raise ConfigError(f"t must lie in [0, 1], got {t}")
    k = sum(t > b for b in sched.breakpoints)
    return sched.values[k]


class Denoiser:
    """Interface: predict per-token clean-category rows for a corrupted grid.

    Implementations expose ``shape``, ``K``, ``n_states``, and
    ``time_conditioned``; with time_conditioned false the output must not
    depend on t (t is forced to 0 internally).
    """

    shape: tuple[int, ...]
    K: int
    n_states: int
    time_conditioned: bool = True

    def predict_batch(self, tokens: np.ndarray, t: float, cond: int | None) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x_t: TokenGrid, t: float, cond: int | None = None) -> ProbField:
        rows = self.predict_batch(x_t.tokens[None, :], t, cond)[0]
        return ProbField(x_t.shape, self.n_states, rows)


@dataclass
class OracleDenoiser(Denoiser):
    """Exact Bayes predictive posterior over an enumerable dataset.

    P(item d | x_t) is proportional to weight_d times the product of
    per-token forward-marginal likelihoods; the output row for token i is the
    posterior-weighted average of the items' one-hot values. Accumulation is
    in the log domain; products over many tokens underflow otherwise.
    """

    dataset: list
    prior: Prior
    schedule: Schedule
    time_conditioned: bool = True
    _items: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)
    _conds: np.ndarray = field(init=False, repr=False)
    _onehot: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.dataset:
            raise ConfigError("oracle dataset is empty")
        grids = [g for g, _, _ in self.dataset]
        first = grids[0]
        if any(g.shape != first.shape or g.K != first.K for g in grids):
            raise ConfigError("oracle dataset grids must share shape and K")
        if first.K != self.prior.K:
            raise ConfigError("oracle dataset K does not match prior K")
        w = np.array([float(w) for _, w, _ in self.dataset])
        if np.any(w <= 0):
            raise ConfigError("oracle dataset weights must be positive")
        self.shape = first.shape
        self.K = first.K
        self.n_states = self.prior.n_states
        self._items = np.stack([g.tokens for g in grids])
        self._weights = w
        self._conds = np.array(
            [-1 if c is None else int(c) for _, _, c in self.dataset]
        )
        self._onehot = np.eye(self.n_states)[self._items]

    def predict_batch(self, tokens: np.ndarray, t: float, cond: int | None) -> np.ndarray:
        if not self.time_conditioned:
            t = 0.0
        a = alpha(self.schedule, t)
        if cond is None:
            sel = slice(None)
        else:
            mask = self._conds == int(cond)
            if not mask.any():
                raise ConfigError(f"no oracle item carries condition {cond}")
            sel = np.flatnonzero(mask)
        items = self._items[sel]
        onehot = self._onehot[sel]
        logw = np.log(self._weights[sel])
        X = np.asarray(tokens, dtype=np.int64)
        match = X[:, None, :] == items[None, :, :]
        pi_at = self.prior.pi[X]
        lik = a * match + (1.0 - a) * pi_at[:, None, :]
        with np.errstate(divide="ignore"):
            loglik = np.log(lik).sum(axis=2)
        logpost = logw[None, :] + loglik
        peak = logpost.max(axis=1, keepdims=True)
        if np.any(~np.isfinite(peak)):
            raise NumericError("oracle posterior has zero mass for some input")
        w = np.exp(logpost - peak)
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("bn,nls->bls", w, onehot)
