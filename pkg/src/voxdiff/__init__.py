"""Uniform-state discrete diffusion over categorical voxel grids."""

from .bsp import BlockMask, BlockMaskConfig, compose_finetune_corruption, generate_block_mask
from .config import DEFAULTS, EngineConfig, load_config, parse_config
from .denoiser import (
    Denoiser,
    GuidanceSchedule,
    OracleDenoiser,
    cfg_combine,
    cfg_strength,
    process_logits,
)
from .diffusion import Prior, ancestral_step, corrupt, forward_marginal, posterior
from .errors import ConfigError, FormatError, NumericError, VoxdiffError
from .grid import ProbField, TokenGrid
from .loss import eval_nll, f_raw, f_rb, kappa, nelbo
from .mlp import MlpConfig, MlpDenoiser, mlp_grad
from .sampler import (
    ClampSpec,
    SamplerConfig,
    half_space_clamp,
    sample,
    sample_batch,
    trace_sample,
)
from .schedule import Schedule, TimeDistribution, TimeGrid, alpha, alpha_prime, make_grid, sample_time
from .uncertainty import UncertaintyReport, gamma_score, rank_dataset, token_entropy
from .voxel import (
    SparseVoxels,
    apply_pose,
    best_pose_align,
    to_dense,
    to_sparse,
    voxel_chamfer,
)

__version__ = "0.1.0"
