"""Block-structured perturbation masks and the fine-tuning corruption mix.

A block mask is a union of axis-aligned hypercubes at several side lengths.
For target fraction t_b over a volume V = N^dim, each length l_j gets an
upper bound m_max_j = ceil(t_b V / l_j^dim) blocks; normalized i.i.d. uniform
weights allocate counts m_j = ceil(w_j m_max_j); blocks land at uniform start
positions. Overlaps are allowed and reduce the realized coverage. By default
start positions are drawn where the block fully fits, which keeps each
block's area exact; ``allow_clipped_blocks`` instead samples anywhere in the
grid and clips at the borders.

The fine-tuning composer replaces half of the ordinary homogeneous
corruptions with block corruption: t_b uniform in [0, 1], and the forward
kernel applied only inside the mask at t drawn from Beta(3, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import Prior, marginal_rows
from .errors import ConfigError
from .grid import TokenGrid
from .rng import categorical_from_uniform, stream
from .schedule import Schedule, TimeDistribution, alpha, sample_time

__all__ = [
    "BlockMaskConfig",
    "BlockMask",
    "generate_block_mask",
    "compose_finetune_corruption",
    "default_scales",
]

BSP_TIME_DIST = TimeDistribution("beta", (3.0, 1.0))


def default_scales(N: int) -> tuple[int, ...]:
    """Powers of two spanning the grid; {4, 8, 16, 32} at N = 64."""
    scales = []
    s = max(1, N // 16)
    while s <= max(1, N // 2):
        scales.append(s)
        s *= 2
    return tuple(scales)


@dataclass(frozen=True)
class BlockMaskConfig:
    shape: tuple[int, ...]
    scales: tuple[int, ...]
    target_fraction: float
    allow_clipped_blocks: bool = False

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(set(shape)) != 1:
            raise ConfigError("block masks require a cubic grid (equal sides)")
        n = shape[0]
        scales = tuple(int(s) for s in self.scales)
        if not scales:
            raise ConfigError("need at least one block scale")
        if any(s < 1 or s > n for s in scales):
            raise ConfigError(f"block scales must lie in [1, {n}], got {scales}")
        if not (0.0 <= self.target_fraction <= 1.0):
            raise ConfigError("target fraction must lie in [0, 1]")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "scales", scales)

    @property
    def N(self) -> int:
        return self.shape[0]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def volume(self) -> int:
        return int(np.prod(self.shape))


@dataclass
class BlockMask:
    shape: tuple[int, ...]
    mask: np.ndarray = field(repr=False)
    n_blocks_per_scale: dict = field(default_factory=dict)

    @property
    def realized_fraction(self) -> float:
        return float(self.mask.mean())

    @property
    def flat(self) -> np.ndarray:
        return self.mask.reshape(-1)


def generate_block_mask(
    cfg: BlockMaskConfig, rng: np.random.Generator | int
) -> BlockMask:
    gen = stream(rng, "bsp") if isinstance(rng, (int, np.integer)) else rng
    N, dim, V = cfg.N, cfg.dim, cfg.volume
    mask = np.zeros(cfg.shape, dtype=np.int64)
    areas = [s**dim for s in cfg.scales]
    m_max = [int(np.ceil(cfg.target_fraction * V / a)) for a in areas]
    u = gen.random(len(cfg.scales))
    w = u / u.sum()
    counts = [int(np.ceil(wj * mj)) for wj, mj in zip(w, m_max)]
    per_scale = {}
    for side, m in zip(cfg.scales, counts):
        per_scale[int(side)] = m
        for _ in range(m):
            if cfg.allow_clipped_blocks:
                start = gen.integers(0, N, size=dim)
            else:
                start = gen.integers(0, N - side + 1, size=dim)
            sl = tuple(slice(int(s0), min(int(s0) + side, N)) for s0 in start)
            mask[sl] = 1
    return BlockMask(cfg.shape, mask, per_scale)


def compose_finetune_corruption(
    x0: TokenGrid,
    prior: Prior,
    schedule: Schedule,
    time_dist: TimeDistribution,
    rng: np.random.Generator | int,
    scales: tuple[int, ...] | None = None,
    allow_clipped_blocks: bool = False,
    with_mask: bool = False,
):
    """One fine-tuning corruption: homogeneous or block-structured, 50/50.

    Returns (corrupted grid, t used for the loss weighting, used_bsp flag);
    with_mask appends the flat block mask (None on the homogeneous branch).
    On the block branch only tokens inside the mask are resampled from the
    forward kernel; tokens outside stay bit-identical to x0.
    """
    gen = stream(rng, "ft") if isinstance(rng, (int, np.integer)) else rng
    use_bsp = gen.random() < 0.5
    if not use_bsp:
        t = float(sample_time(time_dist, gen))
        rows = marginal_rows(x0.tokens, prior, alpha(schedule, t))
        toks = categorical_from_uniform(rows, gen.random(x0.size))
        out = TokenGrid(x0.shape, prior.n_states, toks)
        return (out, t, False, None) if with_mask else (out, t, False)
    t_b = float(gen.random())
    mask_cfg = BlockMaskConfig(
        x0.shape,
        scales if scales is not None else default_scales(x0.shape[0]),
        t_b,
        allow_clipped_blocks=allow_clipped_blocks,
    )
    mask = generate_block_mask(mask_cfg, gen).flat.astype(bool)
    t = float(sample_time(BSP_TIME_DIST, gen))
    toks = x0.tokens.copy()
    if mask.any():
        rows = marginal_rows(toks[mask], prior, alpha(schedule, t))
        toks[mask] = categorical_from_uniform(rows, gen.random(int(mask.sum())))
    out = TokenGrid(x0.shape, prior.n_states, toks)
    return (out, t, True, mask) if with_mask else (out, t, True)
