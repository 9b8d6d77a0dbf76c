"""Engine configuration: a flat, sectioned key=value document.

Unknown sections or keys are rejected. Every field has a documented default;
defaults follow the reference operating points: generation 256 steps,
inpainting 128 steps, guidance presets image (0.7 above t=0.5 else 0.4),
text (1.0/0.4) and edit (flat 0.45), logit truncation tau=5, uncertainty
t_eval=1e-3 and rho=0.4, condition drop 0.1.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .bsp import default_scales
from .denoiser import GuidanceSchedule
from .errors import ConfigError
from .schedule import Schedule, TimeDistribution
from .uncertainty import DEFAULT_RHO, DEFAULT_T_EVAL

__all__ = ["EngineConfig", "load_config", "parse_config", "DEFAULTS"]


@dataclass(frozen=True)
class EngineConfig:
    schedule_kind: str = "linear"
    schedule_eps0: float = 1e-4
    schedule_eps1: float = 1e-4
    time_dist_kind: str = "logit-normal"
    time_dist_params: tuple[float, ...] = (1.0, 1.0)
    grid_kind: str = "cosine"
    grid_steps: int = 256
    grid_t_min: float = 1e-3
    prior_kind: str = "uniform"
    guidance_preset: str = "none"
    sampler_inpaint_steps: int = 128
    sampler_step1: bool = True
    sampler_step2: bool = True
    sampler_step3: bool = True
    model_hidden: tuple[int, ...] = (128, 128)
    model_n_freq: int = 8
    model_cond_dim: int = 16
    model_tau: float = 5.0
    model_time_conditioned: bool = True
    train_lr: float = 1e-3
    train_weight_decay: float = 1e-2
    train_momentum: float = 0.9
    train_batch_size: int = 16
    train_steps: int = 2000
    train_cond_drop: float = 0.1
    train_holdout: float = 0.1
    train_eval_every: int = 500
    train_optimizer: str = "sgd"
    train_eval_n_mc: int = 16
    bsp_scales: tuple[int, ...] = ()
    bsp_allow_clipped: bool = False
    uncertainty_t_eval: float = DEFAULT_T_EVAL
    uncertainty_rho: float = DEFAULT_RHO
    uncertainty_n_draws: int = 1
    seed: int = 0

    def schedule(self) -> Schedule:
        return Schedule(self.schedule_kind, self.schedule_eps0, self.schedule_eps1)

    def time_dist(self) -> TimeDistribution:
        return TimeDistribution(self.time_dist_kind, self.time_dist_params)

    def guidance(self) -> GuidanceSchedule | None:
        if self.guidance_preset == "none":
            return None
        return GuidanceSchedule.preset(self.guidance_preset)

    def scales_for(self, N: int) -> tuple[int, ...]:
        return self.bsp_scales if self.bsp_scales else default_scales(N)


DEFAULTS = EngineConfig()

_SCHEMA = {
    "schedule": {
        "kind": ("schedule_kind", str),
        "eps0": ("schedule_eps0", float),
        "eps1": ("schedule_eps1", float),
    },
    "time_dist": {
        "kind": ("time_dist_kind", str),
        "params": ("time_dist_params", "floats"),
    },
    "grid": {
        "kind": ("grid_kind", str),
        "steps": ("grid_steps", int),
        "t_min": ("grid_t_min", float),
    },
    "prior": {"kind": ("prior_kind", str)},
    "guidance": {"preset": ("guidance_preset", str)},
    "sampler": {
        "inpaint_steps": ("sampler_inpaint_steps", int),
        "step1": ("sampler_step1", "bool"),
        "step2": ("sampler_step2", "bool"),
        "step3": ("sampler_step3", "bool"),
    },
    "model": {
        "hidden": ("model_hidden", "ints"),
        "n_freq": ("model_n_freq", int),
        "cond_dim": ("model_cond_dim", int),
        "tau": ("model_tau", float),
        "time_conditioned": ("model_time_conditioned", "bool"),
    },
    "train": {
        "lr": ("train_lr", float),
        "weight_decay": ("train_weight_decay", float),
        "momentum": ("train_momentum", float),
        "batch_size": ("train_batch_size", int),
        "steps": ("train_steps", int),
        "cond_drop": ("train_cond_drop", float),
        "holdout": ("train_holdout", float),
        "eval_every": ("train_eval_every", int),
        "eval_n_mc": ("train_eval_n_mc", int),
        "optimizer": ("train_optimizer", str),
    },
    "bsp": {
        "scales": ("bsp_scales", "ints"),
        "allow_clipped_blocks": ("bsp_allow_clipped", "bool"),
    },
    "uncertainty": {
        "t_eval": ("uncertainty_t_eval", float),
        "rho": ("uncertainty_rho", float),
        "n_draws": ("uncertainty_n_draws", int),
    },
    "run": {"seed": ("seed", int)},
}


def _convert(raw: str, kind, where: str):
    raw = raw.strip()
    try:
        if kind is str:
            return raw
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind == "ints":
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise AssertionError(kind)


def parse_config(text: str, base: EngineConfig | None = None) -> EngineConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    updates = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            attr, kind = _SCHEMA[section][key]
            updates[attr] = _convert(raw, kind, f"{section}.{key}")
    cfg = replace(base or DEFAULTS, **updates)
    cfg.schedule()
    cfg.time_dist()
    if cfg.guidance_preset not in ("none", "image", "text", "edit"):
        raise ConfigError(f"unknown guidance preset {cfg.guidance_preset!r}")
    if cfg.prior_kind not in ("uniform", "mask"):
        raise ConfigError(f"unknown prior kind {cfg.prior_kind!r}")
    if not (0.0 <= cfg.train_cond_drop <= 1.0):
        raise ConfigError("train.cond_drop must lie in [0, 1]")
    if not (0.0 <= cfg.train_holdout < 1.0):
        raise ConfigError("train.holdout must lie in [0, 1)")
    if cfg.train_optimizer not in ("sgd", "adamw"):
        raise ConfigError(f"unknown optimizer {cfg.train_optimizer!r}")
    if cfg.grid_steps < 1 or cfg.sampler_inpaint_steps < 1:
        raise ConfigError("step counts must be >= 1")
    return cfg


def load_config(path) -> EngineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: EngineConfig) -> str:
    """Serialize a config as the sectioned key=value document."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in _SCHEMA.items():
        parser.add_section(section)
        for key, (attr, kind) in keys.items():
            val = getattr(cfg, attr)
            if kind in ("floats", "ints"):
                parser.set(section, key, ",".join(str(v) for v in val))
            else:
                parser.set(section, key, str(val))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
