"""Mini-batch training of the MLP denoiser on a grid dataset.

Minimizes the mean per-token Rao-Blackwellized loss with SGD (momentum plus
decoupled weight decay). Conditions are dropped with probability 0.1 per
sample by swapping in the null embedding. The corruption is homogeneous by
default; with ``bsp_finetune`` half of the draws use block-structured
corruption and time conditioning is dropped. A held-out split is scored
periodically; a non-finite loss aborts and leaves the last good checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bsp import BSP_TIME_DIST, BlockMaskConfig, generate_block_mask
from .config import EngineConfig
from .diffusion import Prior, marginal_rows
from .errors import ConfigError, NumericError
from .grid import TokenGrid
from .loss import eval_nll
from .mlp import MlpConfig, MlpDenoiser, adamw_update, mlp_grad, sgd_update
from .rng import categorical_from_uniform, stream
from .schedule import alpha, sample_time

__all__ = ["TrainResult", "train_model"]


@dataclass
class TrainResult:
    model: MlpDenoiser
    history: list = field(default_factory=list)
    holdout_start: float = float("nan")
    holdout_end: float = float("nan")


def _split(n_items: int, holdout: float, seed: int):
    order = stream(seed, "split").permutation(n_items)
    n_hold = int(round(n_items * holdout))
    if holdout > 0 and n_hold == 0:
        n_hold = 1
    return order[n_hold:], order[:n_hold]


def train_model(
    dataset: list[tuple[TokenGrid, float, int | None]],
    cfg: EngineConfig,
    model: MlpDenoiser | None = None,
    bsp_finetune: bool = False,
    n_classes: int | None = None,
    steps: int | None = None,
    log=None,
) -> TrainResult:
    if not dataset:
        raise ConfigError("training dataset is empty")
    grids = [g for g, _, _ in dataset]
    shape, K = grids[0].shape, grids[0].K
    if any(g.shape != shape or g.K != K for g in grids):
        raise ConfigError("training grids must share shape and K")
    if cfg.prior_kind != "uniform":
        raise ConfigError("training supports the uniform prior only")
    tokens = np.stack([g.tokens for g in grids])
    conds = np.array([-1 if c is None else int(c) for _, _, c in dataset])
    weights = np.array([w for _, w, _ in dataset], dtype=np.float64)
    weights /= weights.sum()

    if n_classes is None:
        n_classes = int(conds.max(initial=-1)) + 1
    if model is None:
        mcfg = MlpConfig(
            shape=shape,
            K=K,
            hidden=cfg.model_hidden,
            n_freq=cfg.model_n_freq,
            cond_dim=cfg.model_cond_dim,
            n_classes=n_classes,
            time_conditioned=cfg.model_time_conditioned and not bsp_finetune,
            tau=cfg.model_tau,
        )
        model = MlpDenoiser(mcfg, seed=cfg.seed)
    elif bsp_finetune and model.time_conditioned:
        mcfg = MlpConfig(
            shape=model.config.shape,
            K=model.config.K,
            hidden=model.config.hidden,
            n_freq=model.config.n_freq,
            cond_dim=model.config.cond_dim,
            n_classes=model.config.n_classes,
            time_conditioned=False,
            tau=model.config.tau,
        )
        model = MlpDenoiser(mcfg, {k: v.copy() for k, v in model.params.items()})

    schedule = cfg.schedule()
    time_dist = cfg.time_dist()
    prior = Prior("uniform", K)
    n_steps = cfg.train_steps if steps is None else steps
    B = min(cfg.train_batch_size, len(grids))
    train_idx, hold_idx = _split(len(grids), cfg.train_holdout, cfg.seed)
    if train_idx.size == 0:
        train_idx = np.arange(len(grids))
    hold_items = [dataset[i] for i in hold_idx]

    def holdout_nll(m):
        if not hold_items:
            return float("nan")
        est = eval_nll(
            hold_items,
            m,
            schedule,
            cfg.train_eval_n_mc,
            rng=stream(cfg.seed, "holdout"),
            time_dist=None,
            conditioned=n_classes > 0,
        )
        return est.mean_per_token

    result = TrainResult(model)
    result.holdout_start = holdout_nll(model)
    velocity = {}
    last_good = {k: v.copy() for k, v in model.params.items()}
    scales = cfg.scales_for(shape[0])
    p_train = weights[train_idx] / weights[train_idx].sum()

    for step in range(n_steps):
        gen = stream(cfg.seed, "train", step)
        pick = gen.choice(train_idx, size=B, p=p_train)
        x0 = tokens[pick]
        cvec = conds[pick].copy()
        drop = gen.random(B) < cfg.train_cond_drop
        cvec[drop] = -1

        t = np.empty(B)
        x_t = np.empty_like(x0)
        for b in range(B):
            if bsp_finetune and gen.random() < 0.5:
                t_b = float(gen.random())
                mask = generate_block_mask(
                    BlockMaskConfig(shape, scales, t_b, cfg.bsp_allow_clipped), gen
                ).flat.astype(bool)
                t[b] = float(sample_time(BSP_TIME_DIST, gen))
                x_t[b] = x0[b]
                if mask.any():
                    rows = marginal_rows(x0[b][mask], prior, float(alpha(schedule, t[b])))
                    x_t[b][mask] = categorical_from_uniform(
                        rows, gen.random(int(mask.sum()))
                    )
            else:
                t[b] = float(sample_time(time_dist, gen))
                rows = marginal_rows(x0[b], prior, float(alpha(schedule, t[b])))
                x_t[b] = categorical_from_uniform(rows, gen.random(x0.shape[1]))

        try:
            loss, grads = mlp_grad(model, x0, x_t, t, cvec, schedule)
        except NumericError:
            model.params = last_good
            raise
        if cfg.train_optimizer == "adamw":
            adamw_update(
                model.params,
                grads,
                velocity,
                lr=cfg.train_lr,
                weight_decay=cfg.train_weight_decay,
            )
        else:
            sgd_update(
                model.params,
                grads,
                velocity,
                lr=cfg.train_lr,
                momentum=cfg.train_momentum,
                weight_decay=cfg.train_weight_decay,
            )
        if not all(np.all(np.isfinite(v)) for v in model.params.values()):
            model.params = last_good
            raise NumericError(f"non-finite parameters after step {step}")
        last_good = {k: v.copy() for k, v in model.params.items()}
        if log is not None and (step % max(1, cfg.train_eval_every) == 0):
            hn = holdout_nll(model)
            result.history.append({"step": step, "loss": loss, "holdout_nll": hn})
            log(f"step={step} loss={loss:.6f} holdout_nll={hn:.6f}")
        elif step % max(1, cfg.train_eval_every) == 0:
            result.history.append({"step": step, "loss": loss})

    result.model = model
    result.holdout_end = holdout_nll(model)
    return result
