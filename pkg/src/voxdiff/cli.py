"""Command-line interface.

Subcommands: synth, train, sample, inpaint, score, nll, bsp-mask, align,
chamfer. Every command accepts --seed (default: env DVD_SEED, then 0) and is
deterministic given it; outputs are byte-identical across reruns. --threads
caps the package's own worker count; the implementation is vectorized
single-process, so results never depend on it.

Exit codes: 0 ok, 2 configuration error, 3 file-format error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import formats
from .bsp import BlockMaskConfig, generate_block_mask
from .config import DEFAULTS, EngineConfig, load_config
from .denoiser import OracleDenoiser
from .diffusion import Prior
from .errors import ConfigError, FormatError, NumericError
from .grid import TokenGrid
from .loss import eval_nll
from .sampler import (
    ClampSpec,
    SamplerConfig,
    half_space_clamp,
    sample,
    trace_sample,
)
from .schedule import make_grid
from .train import train_model
from .uncertainty import gamma_score, rank_dataset
from .voxel import (
    SparseVoxels,
    best_pose_align,
    make_synthetic_grids,
    to_sparse,
    voxel_chamfer,
)

__all__ = ["main"]


def _default_seed() -> int:
    env = os.environ.get("DVD_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"DVD_SEED must be an integer, got {env!r}") from exc


def _load_engine(args) -> EngineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else DEFAULTS
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    elif cfg.seed == 0:
        from dataclasses import replace

        cfg = replace(cfg, seed=_default_seed())
    return cfg


def _denoiser_from_args(args, cfg: EngineConfig):
    have_ckpt = getattr(args, "ckpt", None)
    have_oracle = getattr(args, "oracle", None)
    if bool(have_ckpt) == bool(have_oracle):
        raise ConfigError("provide exactly one of --ckpt or --oracle")
    if have_ckpt:
        return formats.read_checkpoint(args.ckpt)
    _, items = formats.load_manifest_grids(args.oracle)
    prior = Prior(cfg.prior_kind, items[0][0].K)
    return OracleDenoiser(items, prior, cfg.schedule())


def cmd_synth(args) -> int:
    cfg = _load_engine(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    items = make_synthetic_grids(args.classes, args.n, args.count, seed=cfg.seed)
    rows = []
    for item_id, grid, class_id in items:
        fname = f"{item_id}.dvxg"
        formats.write_grid(outdir / fname, grid)
        rows.append({"path": fname, "weight": 1.0, "class_id": class_id})
    manifest = outdir / "manifest.json"
    formats.write_manifest(manifest, (args.n,) * 3, 2, rows)
    print(json.dumps({"manifest": str(manifest), "items": len(rows)}))
    return 0


def cmd_train(args) -> int:
    cfg = _load_engine(args)
    _, dataset = formats.load_manifest_grids(args.manifest)
    model = formats.read_checkpoint(args.init_ckpt) if args.init_ckpt else None
    result = train_model(
        dataset,
        cfg,
        model=model,
        bsp_finetune=args.bsp_finetune,
        steps=args.steps,
        log=lambda line: print(line, file=sys.stderr),
    )
    formats.write_checkpoint(args.out, result.model)
    print(
        json.dumps(
            {
                "checkpoint": str(args.out),
                "holdout_nll_start": result.holdout_start,
                "holdout_nll_end": result.holdout_end,
                "steps": args.steps if args.steps is not None else cfg.train_steps,
            }
        )
    )
    return 0


def _write_sample_output(args, denoiser, cfg, sampler_cfg, init=None) -> int:
    if args.trace_dir:
        grid, snaps = trace_sample(
            denoiser, sampler_cfg, record_every=args.trace_every, init=init
        )
        tdir = Path(args.trace_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        for idx, (t, fld) in enumerate(snaps):
            formats.write_probs(
                tdir / f"snapshot-{idx:04d}-t{t:.6f}.dvxp",
                fld.shape,
                fld.K,
                fld.probs,
            )
    else:
        grid = sample(denoiser, sampler_cfg, init=init)
    formats.write_grid(args.out, grid, packed=args.packed)
    print(
        json.dumps(
            {"out": str(args.out), "occupied": int((grid.tokens == 1).sum()), "seed": sampler_cfg.seed}
        )
    )
    return 0


def cmd_sample(args) -> int:
    cfg = _load_engine(args)
    denoiser = _denoiser_from_args(args, cfg)
    steps = args.steps if args.steps is not None else cfg.grid_steps
    scfg = SamplerConfig(
        grid=make_grid(steps, cfg.grid_kind, cfg.grid_t_min),
        schedule=cfg.schedule(),
        prior=Prior(cfg.prior_kind, denoiser.K),
        seed=cfg.seed,
        guidance=cfg.guidance(),
        cond=args.cond,
        clamp=None,
    )
    return _write_sample_output(args, denoiser, cfg, scfg)


def cmd_inpaint(args) -> int:
    cfg = _load_engine(args)
    denoiser = _denoiser_from_args(args, cfg)
    source = formats.read_grid(args.source)
    if args.half_space:
        axis, side = args.half_space
        clamp = half_space_clamp(source.shape, source, axis, side)
    elif args.mask:
        mshape, bits = formats.read_mask(args.mask)
        if mshape != source.shape:
            raise FormatError(
                f"mask shape {mshape} does not match source {source.shape}"
            )
        if args.invert_mask:
            bits = 1 - bits
        clamp = ClampSpec(bits, source.tokens.copy())
    else:
        raise ConfigError("inpaint needs --mask or --half-space")
    steps = args.steps if args.steps is not None else cfg.sampler_inpaint_steps
    scfg = SamplerConfig(
        grid=make_grid(steps, cfg.grid_kind, cfg.grid_t_min),
        schedule=cfg.schedule(),
        prior=Prior(cfg.prior_kind, denoiser.K),
        seed=cfg.seed,
        guidance=cfg.guidance(),
        cond=args.cond,
        clamp=clamp,
        apply_step1=cfg.sampler_step1 and not args.no_step1,
        apply_step2=cfg.sampler_step2 and not args.no_step2,
        apply_step3=cfg.sampler_step3 and not args.no_step3,
    )
    return _write_sample_output(args, denoiser, cfg, scfg, init=source)


def cmd_score(args) -> int:
    cfg = _load_engine(args)
    denoiser = _denoiser_from_args(args, cfg)
    doc, dataset = formats.load_manifest_grids(args.manifest)
    items = [
        (Path(doc["items"][i]["path"]).name, grid, cond)
        for i, (grid, _, cond) in enumerate(dataset)
    ]
    t_eval = args.t_eval if args.t_eval is not None else cfg.uncertainty_t_eval
    rho = args.rho if args.rho is not None else cfg.uncertainty_rho
    ranked = rank_dataset(
        items,
        denoiser,
        cfg.schedule(),
        t_eval=t_eval,
        rho=rho,
        seed=cfg.seed,
        n_draws=cfg.uncertainty_n_draws,
    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "gamma", "n_active", "t_eval", "rho"])
        for item_id, rep in ranked:
            writer.writerow(
                [item_id, repr(rep.gamma), rep.n_active, repr(rep.t_eval), repr(rep.rho)]
            )
    if args.per_voxel:
        pv = Path(args.per_voxel)
        pv.mkdir(parents=True, exist_ok=True)
        by_id = {iid: grid for iid, grid, _ in items}
        for item_id, rep in ranked:
            grid = by_id[item_id]
            formats.write_probs(
                pv / f"{item_id}.entropy.dvxp",
                grid.shape,
                1,
                rep.entropies[:, None],
            )
    print(json.dumps({"out": str(args.out), "items": len(ranked)}))
    return 0


def cmd_nll(args) -> int:
    cfg = _load_engine(args)
    denoiser = _denoiser_from_args(args, cfg)
    _, dataset = formats.load_manifest_grids(args.manifest)
    est = eval_nll(
        dataset,
        denoiser,
        cfg.schedule(),
        args.n_mc,
        rng=cfg.seed,
        conditioned=args.conditioned,
    )
    doc = {
        "mean_nll_nats": est.mean_per_token,
        "mc_stderr": est.stderr,
        "n_mc": est.n_mc,
    }
    text = json.dumps(doc)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_bsp_mask(args) -> int:
    cfg = _load_engine(args)
    shape = (args.n,) * args.dim
    scales = cfg.scales_for(args.n) if not args.scales else tuple(args.scales)
    mcfg = BlockMaskConfig(shape, scales, args.fraction, cfg.bsp_allow_clipped)
    mask = generate_block_mask(mcfg, cfg.seed)
    formats.write_mask(args.out, shape, mask.flat)
    print(
        json.dumps(
            {
                "target_fraction": args.fraction,
                "realized_fraction": mask.realized_fraction,
                "n_blocks_per_scale": {str(k): v for k, v in mask.n_blocks_per_scale.items()},
            }
        )
    )
    return 0


def _sparse_from_file(path) -> SparseVoxels:
    grid = formats.read_grid(path)
    sv = to_sparse(grid)
    if sv.count == 0:
        raise ConfigError(f"{path}: grid has no occupied voxels")
    return sv


def cmd_align(args) -> int:
    gen = _sparse_from_file(args.generated)
    ref = _sparse_from_file(args.reference)
    pose, dist = best_pose_align(gen, ref)
    print(json.dumps({"pose_id": pose, "chamfer": dist}))
    return 0


def cmd_chamfer(args) -> int:
    a = _sparse_from_file(args.a)
    b = _sparse_from_file(args.b)
    print(json.dumps({"chamfer": voxel_chamfer(a, b)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="voxdiff",
        description="Discrete diffusion over categorical voxel grids.",
    )
    top.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if config:
            p.add_argument("--config", default=None, help="engine config file")

    p = sub.add_parser("synth", help="generate a synthetic shape dataset")
    common(p)
    p.add_argument("--classes", nargs="+", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train or fine-tune the MLP denoiser")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init-ckpt", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--bsp-finetune", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="draw a grid from the reverse process")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--oracle", default=None, help="manifest backing an exact oracle")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--cond", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--packed", action="store_true")
    p.add_argument("--trace-dir", default=None)
    p.add_argument("--trace-every", type=int, default=1)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("inpaint", help="regenerate unmasked regions of a grid")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--oracle", default=None)
    p.add_argument("--source", required=True)
    p.add_argument("--mask", default=None, help="DVXM mask of KEPT voxels")
    p.add_argument("--invert-mask", action="store_true")
    p.add_argument(
        "--half-space",
        nargs=2,
        metavar=("AXIS", "SIDE"),
        default=None,
        help="keep one half, e.g. --half-space x low",
    )
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--cond", type=int, default=None)
    p.add_argument("--no-step1", action="store_true")
    p.add_argument("--no-step2", action="store_true")
    p.add_argument("--no-step3", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--packed", action="store_true")
    p.add_argument("--trace-dir", default=None)
    p.add_argument("--trace-every", type=int, default=1)
    p.set_defaults(fn=cmd_inpaint)

    p = sub.add_parser("score", help="rank a dataset by uncertainty score")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--oracle", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t-eval", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--per-voxel", default=None, help="directory for entropy rasters")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("nll", help="NELBO bound on a dataset")
    common(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--oracle", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-mc", type=int, default=64)
    p.add_argument("--conditioned", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_nll)

    p = sub.add_parser("bsp-mask", help="draw a block-structured mask")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--scales", type=int, nargs="*", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bsp_mask)

    p = sub.add_parser("align", help="24-pose chamfer alignment")
    common(p, config=False)
    p.add_argument("generated")
    p.add_argument("reference")
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("chamfer", help="voxel-center chamfer distance")
    common(p, config=False)
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(fn=cmd_chamfer)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
