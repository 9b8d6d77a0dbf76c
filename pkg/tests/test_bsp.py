import numpy as np
import pytest
from scipy import stats

from voxdiff.bsp import (
    BlockMaskConfig,
    compose_finetune_corruption,
    default_scales,
    generate_block_mask,
)
from voxdiff.diffusion import Prior, corrupt
from voxdiff.errors import ConfigError
from voxdiff.grid import TokenGrid
from voxdiff.rng import stream
from voxdiff.schedule import Schedule, TimeDistribution, alpha

SCHED = Schedule("linear")
UNIFORM2 = Prior("uniform", 2)


def test_default_scales_at_64():
    assert default_scales(64) == (4, 8, 16, 32)


def test_zero_fraction_gives_empty_mask():
    cfg = BlockMaskConfig((16, 16), (2, 4), 0.0)
    mask = generate_block_mask(cfg, 0)
    assert mask.realized_fraction == 0.0
    assert mask.flat.sum() == 0


def test_full_scale_full_fraction_forces_full_mask():
    cfg = BlockMaskConfig((8, 8, 8), (8,), 1.0)
    mask = generate_block_mask(cfg, 1)
    assert mask.realized_fraction == 1.0


def test_scale_larger_than_grid_rejected():
    with pytest.raises(ConfigError):
        BlockMaskConfig((8, 8), (16,), 0.5)


def test_mask_entries_binary_and_shape():
    cfg = BlockMaskConfig((16, 16), (2, 4), 0.5)
    mask = generate_block_mask(cfg, 2)
    assert mask.mask.shape == (16, 16)
    assert set(np.unique(mask.mask)) <= {0, 1}


def test_union_bound_holds_exactly_per_mask():
    gen = stream(3, "ub")
    for trial in range(200):
        n = int(gen.choice([8, 16]))
        dim = int(gen.choice([2, 3]))
        scales = tuple(
            sorted(set(int(s) for s in gen.choice([1, 2, 4, n // 2], size=2)))
        )
        t_b = float(gen.random())
        cfg = BlockMaskConfig((n,) * dim, scales, t_b)
        mask = generate_block_mask(cfg, stream(4, "m", trial))
        bound = sum(
            count * (side**dim)
            for side, count in mask.n_blocks_per_scale.items()
        )
        assert mask.flat.sum() <= bound


def test_mean_realized_fraction_mid_band_2d():
    cfg = BlockMaskConfig((16, 16), (2, 4), 0.5)
    fracs = [
        generate_block_mask(cfg, stream(5, "f", i)).realized_fraction
        for i in range(2000)
    ]
    mean = float(np.mean(fracs))
    assert mean < 0.5  # overlap always loses coverage on average
    assert 0.25 <= mean <= 0.55


def test_mean_realized_fraction_monotone_in_target():
    means = []
    for t_b in (0.0, 0.25, 0.5, 0.75, 1.0):
        cfg = BlockMaskConfig((8, 8, 8), (2, 4), t_b)
        fr = [
            generate_block_mask(cfg, stream(6, "mono", t_b, i)).realized_fraction
            for i in range(800)
        ]
        means.append((np.mean(fr), np.std(fr) / np.sqrt(len(fr))))
    for (m0, s0), (m1, s1) in zip(means, means[1:]):
        assert m1 >= m0 - (s0 + s1)


def test_clipped_blocks_variant_runs():
    cfg = BlockMaskConfig((8, 8), (4,), 0.5, allow_clipped_blocks=True)
    mask = generate_block_mask(cfg, 7)
    assert 0 < mask.realized_fraction <= 1.0


def test_compose_outside_mask_tokens_untouched():
    gen = stream(8, "x0")
    x0 = TokenGrid((8, 8, 8), 2, gen.integers(0, 2, 512))
    td = TimeDistribution("uniform")
    hits = 0
    for trial in range(40):
        out, t, used_bsp, mask = compose_finetune_corruption(
            x0, UNIFORM2, SCHED, td, stream(9, "c", trial), with_mask=True
        )
        assert 0 < t < 1
        if used_bsp:
            hits += 1
            changed = out.tokens != x0.tokens
            assert np.array_equal(out.tokens[~mask], x0.tokens[~mask])
            assert np.all(mask[changed])
    assert hits > 5


def test_compose_branch_frequencies():
    x0 = TokenGrid((4, 4, 4), 2, stream(10, "x").integers(0, 2, 64))
    td = TimeDistribution("uniform")
    flags = [
        compose_finetune_corruption(x0, UNIFORM2, SCHED, td, stream(11, "b", i))[2]
        for i in range(400)
    ]
    frac = np.mean(flags)
    assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / 400)


def test_compose_homogeneous_branch_matches_plain_corruption():
    """Flip-rate chi-square between the composer's homogeneous branch and
    diffusion.corrupt at the same t."""
    L = 10**5
    x0 = TokenGrid((L,), 2, np.ones(L, dtype=int))
    t = 0.45
    a = alpha(SCHED, t)

    gen = stream(12, "hom")
    from voxdiff.diffusion import marginal_rows
    from voxdiff.rng import categorical_from_uniform

    rows = marginal_rows(x0.tokens, UNIFORM2, a)
    toks_a = categorical_from_uniform(rows, gen.random(L))
    toks_b = corrupt(x0, UNIFORM2, a, stream(13, "plain")).tokens
    table = np.array(
        [
            [np.sum(toks_a == 0), np.sum(toks_a == 1)],
            [np.sum(toks_b == 0), np.sum(toks_b == 1)],
        ]
    )
    chi = stats.chi2_contingency(table)
    assert chi.pvalue > 0.001
