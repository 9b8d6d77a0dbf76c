"""Token grids and per-token probability fields.

A TokenGrid is a length-L sequence of categorical tokens over K states that
remembers its spatial shape (row-major flattening of an N_1 x ... x N_d grid).
A ProbField carries one probability vector per token. For voxel occupancy
K = 2 with token 1 = occupied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SIMPLEX_ATOL = 1e-9

__all__ = ["TokenGrid", "ProbField", "SIMPLEX_ATOL"]


@dataclass
class TokenGrid:
    shape: tuple[int, ...]
    K: int
    tokens: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if not (1 <= len(self.shape) <= 3):
            raise ConfigError(f"grid dimension must be 1..3, got {len(self.shape)}")
        if any(n <= 0 for n in self.shape):
            raise ConfigError(f"side lengths must be positive, got {self.shape}")
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        self.tokens = np.ascontiguousarray(np.asarray(self.tokens, dtype=np.int64).reshape(-1))
        if self.tokens.size != self.size:
            raise ConfigError(
                f"token count {self.tokens.size} != product of sides {self.size}"
            )
        if self.tokens.size and (self.tokens.min() < 0 or self.tokens.max() >= self.K):
            raise ConfigError("token indices must lie in [0, K)")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def onehot(self, n_states: int | None = None) -> np.ndarray:
        """(L, n_states) one-hot view; n_states defaults to K."""
        n = self.K if n_states is None else n_states
        return np.eye(n, dtype=np.float64)[self.tokens]

    def copy(self) -> "TokenGrid":
        return TokenGrid(self.shape, self.K, self.tokens.copy())

    def with_tokens(self, tokens: np.ndarray) -> "TokenGrid":
        return TokenGrid(self.shape, self.K, tokens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenGrid):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.K == other.K
            and np.array_equal(self.tokens, other.tokens)
        )


@dataclass
class ProbField:
    shape: tuple[int, ...]
    K: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        L = int(np.prod(self.shape))
        if self.probs.shape != (L, self.K):
            raise ConfigError(
                f"probs shape {self.probs.shape} != (L={L}, K={self.K})"
            )

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def validate_simplex(self, atol: float = SIMPLEX_ATOL) -> None:
        if self.probs.min(initial=0.0) < -atol:
            raise ConfigError("probability rows contain negative entries")
        err = np.abs(self.probs.sum(axis=1) - 1.0).max(initial=0.0)
        if err > atol:
            raise ConfigError(f"probability rows deviate from the simplex by {err:.3e}")

    def argmax_tokens(self) -> np.ndarray:
        """Row-wise argmax; exact ties resolve to the lowest category index."""
        return np.argmax(self.probs, axis=1).astype(np.int64)
