import pytest

from voxdiff.config import DEFAULTS, dump_config, parse_config
from voxdiff.denoiser import GuidanceSchedule, cfg_strength
from voxdiff.errors import ConfigError


def test_defaults_match_reference_operating_points():
    assert DEFAULTS.grid_steps == 256
    assert DEFAULTS.sampler_inpaint_steps == 128
    assert DEFAULTS.model_tau == 5.0
    assert DEFAULTS.uncertainty_t_eval == 1e-3
    assert DEFAULTS.uncertainty_rho == 0.4
    assert DEFAULTS.train_cond_drop == 0.1
    assert DEFAULTS.schedule_eps0 == 1e-4
    assert DEFAULTS.schedule_eps1 == 1e-4
    image = GuidanceSchedule.preset("image")
    assert (cfg_strength(image, 0.9), cfg_strength(image, 0.1)) == (0.7, 0.4)
    text = GuidanceSchedule.preset("text")
    assert (cfg_strength(text, 0.9), cfg_strength(text, 0.1)) == (1.0, 0.4)
    edit = GuidanceSchedule.preset("edit")
    assert cfg_strength(edit, 0.2) == cfg_strength(edit, 0.8) == 0.45


def test_parse_overrides():
    cfg = parse_config(
        """
[schedule]
kind = cosine
eps0 = 2e-4

[grid]
steps = 64

[time_dist]
kind = beta
params = 3,1

[train]
lr = 0.01
"""
    )
    assert cfg.schedule_kind == "cosine"
    assert cfg.schedule_eps0 == 2e-4
    assert cfg.grid_steps == 64
    assert cfg.time_dist_kind == "beta"
    assert cfg.time_dist_params == (3.0, 1.0)
    assert cfg.train_lr == 0.01
    # untouched defaults survive
    assert cfg.schedule_eps1 == 1e-4


def test_unknown_section_and_key_rejected():
    with pytest.raises(ConfigError, match="unknown config section"):
        parse_config("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config("[schedule]\nshape = 3\n")


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        parse_config("[schedule]\nkind = exp\n")
    with pytest.raises(ConfigError):
        parse_config("[grid]\nsteps = 0\n")
    with pytest.raises(ConfigError):
        parse_config("[time_dist]\nkind = beta\nparams = -1,2\n")
    with pytest.raises(ConfigError):
        parse_config("[train]\ncond_drop = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config("[guidance]\npreset = wild\n")


def test_dump_parse_roundtrip():
    cfg = parse_config("[grid]\nsteps = 32\n[sampler]\nstep1 = false\n")
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert again.sampler_step1 is False
