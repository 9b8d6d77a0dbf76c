"""Categorical kernel core: priors, forward marginals, exact reverse posterior.

All operations factorize over tokens. The forward marginal interpolates the
clean one-hot and the prior:

    p_t(x_t | x_0) = Cat(x_t; alpha_t onehot(x_0) + (1 - alpha_t) pi)

and the exact reverse posterior for s < t is

                  [a_ts onehot(x_t) + (1 - a_ts) pi_{x_t} 1] . [a_s x0 + (1 - a_s) pi]
    q(x_s|x_t,x0) = ---------------------------------------------------------------
                              a_t x0_{x_t} + (1 - a_t) pi_{x_t}

with a_ts = alpha_t / alpha_s and x0 replaced by the predictive row at
inference. Tokens are stored as category indices; one-hot is a view. With the
mask prior the reserved mask category is index K (appended), so state vectors
have K + 1 entries and clean-data categories keep their indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .grid import ProbField, TokenGrid
from .rng import categorical_from_uniform, stream

DEN_FLOOR = 1e-300

__all__ = [
    "Prior",
    "forward_marginal",
    "corrupt",
    "posterior",
    "ancestral_step",
    "marginal_rows",
    "posterior_rows",
]


@dataclass(frozen=True)
class Prior:
    """Prior over states: uniform over K categories, or point mass on MASK."""

    kind: str
    K: int
    pi: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if self.kind == "uniform":
            pi = np.full(self.K, 1.0 / self.K)
        elif self.kind == "mask":
            pi = np.zeros(self.K + 1)
            pi[self.K] = 1.0
        else:
            raise ConfigError(f"unknown prior kind {self.kind!r}")
        object.__setattr__(self, "pi", pi)

    @property
    def n_states(self) -> int:
        return self.pi.size

    @property
    def mask_index(self) -> int | None:
        return self.K if self.kind == "mask" else None


def _check_alpha(alpha_t: float) -> float:
    a = float(alpha_t)
    if not (0.0 < a < 1.0):
        raise ConfigError(f"alpha must lie in (0, 1), got {a}")
    return a


def _check_grid_prior(x: TokenGrid, prior: Prior) -> None:
    if x.K != prior.K:
        raise ConfigError(f"grid K={x.K} does not match prior K={prior.K}")


def marginal_rows(tokens: np.ndarray, prior: Prior, alpha_t: float) -> np.ndarray:
    """Forward-marginal rows for integer tokens of any shape -> (..., n_states)."""
    a = _check_alpha(alpha_t)
    eye = np.eye(prior.n_states)
    return a * eye[tokens] + (1.0 - a) * prior.pi


def forward_marginal(x0: TokenGrid, prior: Prior, alpha_t: float) -> ProbField:
    """Per-token forward marginal at retention alpha_t."""
    _check_grid_prior(x0, prior)
    rows = marginal_rows(x0.tokens, prior, alpha_t)
    return ProbField(x0.shape, prior.n_states, rows)


def corrupt(
    x0: TokenGrid, prior: Prior, alpha_t: float, rng: np.random.Generator | int
) -> TokenGrid:
    """Sample each token independently from its forward-marginal row.

    ``rng`` may be a Generator or an integer seed; with a seed the draw for
    token i is a pure function of (seed, i).
    """
    _check_grid_prior(x0, prior)
    gen = stream(rng, "corrupt") if isinstance(rng, (int, np.integer)) else rng
    rows = marginal_rows(x0.tokens, prior, alpha_t)
    u = gen.random(x0.size)
    toks = categorical_from_uniform(rows, u)
    return TokenGrid(x0.shape, prior.n_states, toks)


def posterior_rows(
    tokens_t: np.ndarray,
    x0_rows: np.ndarray,
    prior: Prior,
    alpha_t: float,
    alpha_s: float,
) -> np.ndarray:
    """Reverse-posterior rows; tokens_t (..., L) ints, x0_rows (..., L, S).

    Requires alpha_t <= alpha_s (s is the less-corrupted time). Rows are
    renormalized after evaluation to remove floating-point drift.
    """
    a_t = _check_alpha(alpha_t)
    a_s = _check_alpha(alpha_s)
    if a_t > a_s:
        raise ConfigError(f"need alpha_t <= alpha_s, got {a_t} > {a_s}")
    S = prior.n_states
    a_ts = a_t / a_s
    onehot_t = np.eye(S)[tokens_t]
    pi_at_t = prior.pi[tokens_t]
    left = a_ts * onehot_t + (1.0 - a_ts) * pi_at_t[..., None]
    right = a_s * x0_rows + (1.0 - a_s) * prior.pi
    num = left * right
    x0_at_t = np.take_along_axis(x0_rows, tokens_t[..., None], axis=-1)[..., 0]
    den = a_t * x0_at_t + (1.0 - a_t) * pi_at_t
    if np.any(den < DEN_FLOOR):
        raise NumericError(
            "reverse-posterior denominator underflow; "
            "schedule or prior is misconfigured for this state"
        )
    rows = num / den[..., None]
    rows /= rows.sum(axis=-1, keepdims=True)
    return rows


def posterior(
    x_t: TokenGrid,
    x0_probs: ProbField,
    prior: Prior,
    alpha_t: float,
    alpha_s: float,
) -> ProbField:
    """Exact reverse posterior with predictive rows substituted for x_0."""
    if (
        x_t.size != x0_probs.size
        or x0_probs.K != prior.n_states
        or x_t.K != prior.n_states
    ):
        raise ConfigError("x_t, predictive rows, and prior disagree in shape")
    rows = posterior_rows(x_t.tokens, x0_probs.probs, prior, alpha_t, alpha_s)
    return ProbField(x_t.shape, prior.n_states, rows)


def ancestral_step(
    x_t: TokenGrid,
    x0_probs: ProbField,
    prior: Prior,
    alpha_t: float,
    alpha_s: float,
    rng: np.random.Generator | int,
) -> TokenGrid:
    """One reverse step: independent per-token draw from the posterior."""
    post = posterior(x_t, x0_probs, prior, alpha_t, alpha_s)
    gen = stream(rng, "ancestral") if isinstance(rng, (int, np.integer)) else rng
    u = gen.random(x_t.size)
    toks = categorical_from_uniform(post.probs, u)
    return TokenGrid(x_t.shape, prior.n_states, toks)
