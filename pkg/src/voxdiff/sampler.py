"""Reverse-process driver: ancestral sampling with optional inpainting.

One trajectory walks a decreasing time grid. At each step the denoiser
predicts clean-category rows (guided by CFG when configured), the exact
posterior is formed, and the next state is drawn per token; the last step
replaces the draw with the posterior argmax (final noise removal, ties to the
lowest category). Inpainting adds three independently toggleable steps:

  step 1  rescale the model-conditioning time to t (L - sum M) / L,
  step 2  overwrite predicted rows with one-hot targets inside the mask,
  step 3  overwrite drawn tokens with the targets inside the mask.

Step 3 is also enforced on the returned grid. Posterior times always use the
unmodified grid times; only the model-conditioning time (and the guidance
strength lookup) sees the rescaled value. All draws come from counter-based
streams keyed by (seed, step), so a trajectory is reproducible bit-for-bit
regardless of internal parallelism; batched trajectories share one key per
step with one uniform per (trajectory, token).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .denoiser import Denoiser, GuidanceSchedule, cfg_combine, cfg_strength
from .diffusion import Prior, posterior_rows
from .errors import ConfigError
from .grid import ProbField, TokenGrid
from .rng import categorical_from_uniform, stream
from .schedule import TimeGrid, Schedule, alpha

DEFAULT_NFE_SAMPLE = 256
DEFAULT_NFE_INPAINT = 128
PROB_FLOOR = 1e-300

__all__ = [
    "ClampSpec",
    "SamplerConfig",
    "sample",
    "sample_batch",
    "trace_sample",
    "half_space_clamp",
    "DEFAULT_NFE_SAMPLE",
    "DEFAULT_NFE_INPAINT",
]


@dataclass(frozen=True)
class ClampSpec:
    """Inpainting constraint: binary mask plus target categories."""

    mask: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.mask).astype(np.int64).reshape(-1)
        c = np.asarray(self.targets, dtype=np.int64).reshape(-1)
        if m.size != c.size:
            raise ConfigError("clamp mask and targets differ in length")
        if not np.isin(m, (0, 1)).all():
            raise ConfigError("clamp mask must be binary")
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "targets", c)

    @property
    def n_clamped(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class SamplerConfig:
    grid: TimeGrid
    schedule: Schedule
    prior: Prior
    seed: int = 0
    guidance: GuidanceSchedule | None = None
    cond: int | None = None
    clamp: ClampSpec | None = None
    apply_step1: bool = True
    apply_step2: bool = True
    apply_step3: bool = True


def half_space_clamp(
    grid_shape: tuple[int, ...], source: TokenGrid, axis: str, side: str
) -> ClampSpec:
    """Clamp that KEEPS one axis-aligned half of ``source``.

    The kept half is indices [0, N/2) for side "low" and [N/2, N) for "high";
    the complementary half is left free to regenerate.
    """
    shape = tuple(grid_shape)
    if source.shape != shape:
        raise ConfigError(f"source shape {source.shape} != grid shape {shape}")
    names = "xyz"[: len(shape)]
    if axis not in names:
        raise ConfigError(f"axis {axis!r} not valid for a {len(shape)}-d grid")
    if side not in ("low", "high"):
        raise ConfigError(f"side must be 'low' or 'high', got {side!r}")
    ax = names.index(axis)
    n = shape[ax]
    coords = np.indices(shape)[ax].reshape(-1)
    mask = (coords < n // 2) if side == "low" else (coords >= n // 2)
    return ClampSpec(mask.astype(np.int64), source.tokens.copy())


def _validate(denoiser: Denoiser, cfg: SamplerConfig, init: TokenGrid | None):
    L = int(np.prod(denoiser.shape))
    if cfg.prior.n_states != denoiser.n_states or cfg.prior.K != denoiser.K:
        raise ConfigError("sampler prior does not match the denoiser")
    if cfg.clamp is not None:
        if cfg.clamp.mask.size != L:
            raise ConfigError("clamp length does not match the denoiser grid")
        if cfg.clamp.targets.max(initial=0) >= denoiser.n_states:
            raise ConfigError("clamp targets exceed the state count")
    if init is not None and (init.size != L or init.K != denoiser.n_states):
        raise ConfigError("init grid does not match the denoiser")
    return L


def _core(
    denoiser: Denoiser,
    cfg: SamplerConfig,
    init_tokens: np.ndarray,
    snapshot_every: int | None = None,
):
    """Run the reverse chain on a (B, L) token batch."""
    B, L = init_tokens.shape
    grid = cfg.grid
    T = grid.steps
    clamp = cfg.clamp
    keep = clamp.mask.astype(bool) if clamp is not None else None
    X = init_tokens.copy()
    eye = np.eye(denoiser.n_states)
    snapshots = []
    for k in range(T):
        t, s = grid[k], grid[k + 1]
        if clamp is not None and cfg.apply_step1:
            t_model = t * (L - clamp.n_clamped) / L
        else:
            t_model = t
        if cfg.guidance is not None and cfg.cond is not None:
            pc = denoiser.predict_batch(X, t_model, cfg.cond)
            pu = denoiser.predict_batch(X, t_model, None)
            w = cfg_strength(cfg.guidance, t_model)
            P = cfg_combine(
                np.log(np.maximum(pc, PROB_FLOOR)),
                np.log(np.maximum(pu, PROB_FLOOR)),
                w,
            )
        else:
            P = denoiser.predict_batch(X, t_model, cfg.cond)
        if clamp is not None and cfg.apply_step2:
            P[:, keep, :] = eye[clamp.targets[keep]]
        if snapshot_every is not None and (k % snapshot_every == 0 or k == T - 1):
            snapshots.append((t, P.copy()))
        rows = posterior_rows(
            X, P, cfg.prior, alpha(cfg.schedule, t), alpha(cfg.schedule, s)
        )
        if k < T - 1:
            u = stream(cfg.seed, "sampler", k).random((B, L))
            X = categorical_from_uniform(rows, u)
        else:
            X = np.argmax(rows, axis=-1)
        if clamp is not None and cfg.apply_step3:
            X[:, keep] = clamp.targets[keep]
    if clamp is not None and cfg.apply_step3:
        X[:, keep] = clamp.targets[keep]
    return X, snapshots


def _init_tokens(
    denoiser: Denoiser, cfg: SamplerConfig, init: TokenGrid | None, batch: int
) -> np.ndarray:
    L = int(np.prod(denoiser.shape))
    if init is not None:
        return np.broadcast_to(init.tokens, (batch, L)).copy()
    u = stream(cfg.seed, "sampler-init").random((batch, L))
    cum = np.cumsum(cfg.prior.pi)
    toks = np.minimum(np.sum(u[..., None] >= cum, axis=-1), cfg.prior.n_states - 1)
    return toks.astype(np.int64)


def sample(
    denoiser: Denoiser, cfg: SamplerConfig, init: TokenGrid | None = None
) -> TokenGrid:
    """Draw one grid by running the full reverse process."""
    _validate(denoiser, cfg, init)
    X, _ = _core(denoiser, cfg, _init_tokens(denoiser, cfg, init, 1))
    return TokenGrid(denoiser.shape, denoiser.n_states, X[0])


def sample_batch(
    denoiser: Denoiser, cfg: SamplerConfig, n: int, init: TokenGrid | None = None
) -> np.ndarray:
    """n independent trajectories, vectorized; returns (n, L) tokens."""
    if n < 1:
        raise ConfigError("batch size must be >= 1")
    _validate(denoiser, cfg, init)
    X, _ = _core(denoiser, cfg, _init_tokens(denoiser, cfg, init, n))
    return X


def trace_sample(
    denoiser: Denoiser,
    cfg: SamplerConfig,
    record_every: int,
    init: TokenGrid | None = None,
) -> tuple[TokenGrid, list[tuple[float, ProbField]]]:
    """Same trajectory as sample() plus predictive-field snapshots.

    Records the predictive field at every record_every-th step and at the
    final step; RNG consumption matches sample() exactly, so the returned
    grid equals sample() under the same seed.
    """
    if record_every < 1:
        raise ConfigError("record_every must be >= 1")
    _validate(denoiser, cfg, init)
    X, snaps = _core(
        denoiser, cfg, _init_tokens(denoiser, cfg, init, 1), snapshot_every=record_every
    )
    fields = [
        (t, ProbField(denoiser.shape, denoiser.n_states, P[0])) for t, P in snaps
    ]
    return TokenGrid(denoiser.shape, denoiser.n_states, X[0]), fields
