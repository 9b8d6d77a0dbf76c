"""Counter-based random streams.

Every stochastic operation in the package draws from a Philox generator whose
key is derived from an integer seed plus a tuple of string/int tags. Philox is
counter-based, so the i-th variate of a keyed stream is a pure function of
(key, i): values do not depend on how many variates are requested per call or
on any parallel evaluation order. Two streams with different tags are
statistically independent.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "key_words", "categorical_from_uniform"]


def key_words(seed: int, *tags) -> np.ndarray:
    """Derive a 128-bit Philox key from (seed, tags) via BLAKE2b."""
    raw = repr((int(seed),) + tuple(tags)).encode("utf-8")
    digest = hashlib.blake2b(raw, digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


def stream(seed: int, *tags) -> np.random.Generator:
    """A fresh keyed generator; deterministic in (seed, tags) only."""
    return np.random.Generator(np.random.Philox(key=key_words(seed, *tags)))


def categorical_from_uniform(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draw along the last axis of ``probs``.

    probs: (..., K) rows on the simplex; u: (...) uniforms in [0, 1).
    Returns integer categories shaped like ``u``. Pure function of its
    arguments, so per-element determinism is inherited from the uniforms.
    """
    cum = np.cumsum(probs, axis=-1)
    idx = np.sum(u[..., None] >= cum, axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)
