"""Grid geometry: sparse/dense views, cube poses, chamfer, synthetic shapes.

SparseVoxels lists the occupied positions of a binary grid. The 24
orientation-preserving cube symmetries act on positions as signed
permutations with re-centering into {0..N-1}; pose id 0 is the identity.
Chamfer distance treats voxel centers as points with coordinates divided by
N and uses squared Euclidean base distance; the reported value is the mean
of the two directed terms. Nearest neighbors are exact (KD-tree).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError
from .grid import TokenGrid
from .rng import stream

__all__ = [
    "SparseVoxels",
    "POSE_MATRICES",
    "N_POSES",
    "to_sparse",
    "to_dense",
    "apply_pose",
    "compose_poses",
    "inverse_pose",
    "voxel_chamfer",
    "best_pose_align",
    "make_box",
    "make_sphere",
    "make_l_shape",
    "make_checkerboard",
    "SHAPE_MAKERS",
    "make_synthetic_grids",
]


def _pose_matrices() -> np.ndarray:
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3), dtype=np.int64)
            for row, (col, sg) in enumerate(zip(perm, signs)):
                m[row, col] = sg
            if round(np.linalg.det(m)) == 1:
                mats.append((perm, tuple(0 if s == 1 else 1 for s in signs), m))
    mats.sort(key=lambda e: (e[0], e[1]))
    return np.stack([m for _, _, m in mats])


POSE_MATRICES = _pose_matrices()
N_POSES = len(POSE_MATRICES)


@dataclass
class SparseVoxels:
    N: int
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1, 3)
        if pos.size and (pos.min() < 0 or pos.max() >= self.N):
            raise ConfigError("positions out of bounds")
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ConfigError("duplicate voxel positions")
        self.positions = pos

    @property
    def count(self) -> int:
        return len(self.positions)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVoxels):
            return NotImplemented
        if self.N != other.N or self.count != other.count:
            return False
        a = self.positions[np.lexsort(self.positions.T)]
        b = other.positions[np.lexsort(other.positions.T)]
        return np.array_equal(a, b)


def to_sparse(grid: TokenGrid) -> SparseVoxels:
    if grid.K != 2:
        raise ConfigError("sparse view requires a binary grid (K=2)")
    if grid.ndim != 3:
        raise ConfigError("sparse view requires a 3-d grid")
    occ = grid.tokens.reshape(grid.shape)
    return SparseVoxels(grid.shape[0], np.argwhere(occ == 1))


def to_dense(sv: SparseVoxels) -> TokenGrid:
    occ = np.zeros((sv.N,) * 3, dtype=np.int64)
    if sv.count:
        occ[tuple(sv.positions.T)] = 1
    return TokenGrid((sv.N,) * 3, 2, occ.reshape(-1))


def apply_pose(sv: SparseVoxels, pose: int) -> SparseVoxels:
    """Rotate positions by cube symmetry ``pose``; bijective on the lattice."""
    if not (0 <= pose < N_POSES):
        raise ConfigError(f"pose id must lie in [0, {N_POSES}), got {pose}")
    R = POSE_MATRICES[pose]
    offset = (R.sum(axis=1) == -1) * (sv.N - 1)
    return SparseVoxels(sv.N, sv.positions @ R.T + offset)


def compose_poses(p: int, q: int) -> int:
    """Pose id of "apply p, then q"."""
    m = POSE_MATRICES[q] @ POSE_MATRICES[p]
    hits = np.flatnonzero((POSE_MATRICES == m).all(axis=(1, 2)))
    return int(hits[0])


def inverse_pose(p: int) -> int:
    m = POSE_MATRICES[p].T
    hits = np.flatnonzero((POSE_MATRICES == m).all(axis=(1, 2)))
    return int(hits[0])


def voxel_chamfer(a: SparseVoxels, b: SparseVoxels) -> float:
    """Symmetric squared chamfer over voxel centers scaled into [0, 1]^3."""
    if a.count == 0 or b.count == 0:
        raise ConfigError("chamfer distance needs nonempty voxel sets")
    if a.N != b.N:
        raise ConfigError("voxel sets live on different resolutions")
    pa = a.positions / a.N
    pb = b.positions / b.N
    d_ab = cKDTree(pb).query(pa)[0]
    d_ba = cKDTree(pa).query(pb)[0]
    return 0.5 * (float(np.mean(d_ab**2)) + float(np.mean(d_ba**2)))


def best_pose_align(gen: SparseVoxels, ref: SparseVoxels) -> tuple[int, float]:
    """Exhaustive 24-pose search; returns (argmin pose, its chamfer).

    Ties resolve to the lowest pose id, so identical inputs report pose 0.
    """
    best = (0, float("inf"))
    for pose in range(N_POSES):
        d = voxel_chamfer(apply_pose(gen, pose), ref)
        if d < best[1]:
            best = (pose, d)
    return best


def make_box(N: int, lo: tuple[int, ...], hi: tuple[int, ...]) -> TokenGrid:
    """Axis-aligned filled box with inclusive corner lo, exclusive corner hi."""
    if any(not (0 <= a < b <= N) for a, b in zip(lo, hi)):
        raise ConfigError(f"degenerate box extents {lo}..{hi}")
    occ = np.zeros((N,) * 3, dtype=np.int64)
    occ[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = 1
    return TokenGrid((N,) * 3, 2, occ.reshape(-1))


def make_sphere(N: int, radius: float, center: tuple[float, ...] | None = None) -> TokenGrid:
    """Digitized ball: cells whose center lies within ``radius`` of center."""
    if radius <= 0:
        raise ConfigError("radius must be positive")
    c = np.full(3, (N - 1) / 2.0) if center is None else np.asarray(center, float)
    ax = np.arange(N, dtype=np.float64)
    d2 = (
        (ax[:, None, None] - c[0]) ** 2
        + (ax[None, :, None] - c[1]) ** 2
        + (ax[None, None, :] - c[2]) ** 2
    )
    return TokenGrid((N,) * 3, 2, (d2 <= radius**2).astype(np.int64).reshape(-1))


def make_l_shape(N: int, arm: int, thickness: int) -> TokenGrid:
    """Union of two boxes sharing the origin corner."""
    if not (0 < thickness <= arm <= N):
        raise ConfigError("need 0 < thickness <= arm <= N")
    a = make_box(N, (0, 0, 0), (arm, thickness, thickness))
    b = make_box(N, (0, 0, 0), (thickness, arm, thickness))
    return TokenGrid((N,) * 3, 2, np.maximum(a.tokens, b.tokens))


def make_checkerboard(N: int, phase: int = 0, cell: int = 1) -> TokenGrid:
    """Parity pattern on cells of the given size."""
    if cell < 1:
        raise ConfigError("cell size must be >= 1")
    ax = np.arange(N) // cell
    par = (ax[:, None, None] + ax[None, :, None] + ax[None, None, :] + phase) % 2
    return TokenGrid((N,) * 3, 2, par.astype(np.int64).reshape(-1))


def _random_box(N: int, gen: np.random.Generator) -> TokenGrid:
    """Small axis-aligned boxes; occupancy well below the sphere class."""
    ext_hi = max(3, N // 2)
    for _ in range(100):
        lo = gen.integers(0, N - 2, size=3)
        hi = lo + gen.integers(2, ext_hi + 1, size=3)
        if np.all(hi <= N):
            return make_box(N, tuple(lo), tuple(hi))
    return make_box(N, (0, 0, 0), (2, 2, 2))


def _random_sphere(N: int, gen: np.random.Generator) -> TokenGrid:
    """Near-maximal digitized balls; occupancy well above the box class."""
    r = gen.uniform(0.33 * N, 0.44 * N)
    c = (N - 1) / 2.0 + gen.uniform(-0.75, 0.75, size=3)
    return make_sphere(N, r, tuple(c))


def _random_l(N: int, gen: np.random.Generator) -> TokenGrid:
    arm = int(gen.integers(max(2, N // 2), N + 1))
    thick = int(gen.integers(1, max(2, arm // 2)))
    return make_l_shape(N, arm, thick)


def _random_checker(N: int, gen: np.random.Generator) -> TokenGrid:
    phase = int(gen.integers(2))
    cell = int(gen.choice([1, 1, 2]))
    return make_checkerboard(N, phase, cell)


SHAPE_MAKERS = {
    "box": _random_box,
    "sphere": _random_sphere,
    "l-shape": _random_l,
    "checkerboard": _random_checker,
}


def make_synthetic_grids(
    classes: list[str], N: int, count_per_class: int, seed: int = 0
) -> list[tuple[str, TokenGrid, int]]:
    """Deterministic jittered shapes; returns (item_id, grid, class_id)."""
    if N < 4:
        raise ConfigError("synthetic shapes need N >= 4")
    unknown = [c for c in classes if c not in SHAPE_MAKERS]
    if unknown:
        raise ConfigError(f"unknown shape classes {unknown}")
    out = []
    for class_id, name in enumerate(classes):
        maker = SHAPE_MAKERS[name]
        for j in range(count_per_class):
            gen = stream(seed, "synth", name, j)
            grid = maker(N, gen)
            out.append((f"{name}-{j:04d}", grid, class_id))
    return out
