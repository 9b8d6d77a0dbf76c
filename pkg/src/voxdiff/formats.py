"""Bit-exact binary file formats and the JSON dataset manifest.

All integers are little-endian. Grids re-serialize byte-identically after a
read/write round trip; no format carries timestamps.

DVXG  token grid:   magic "DVXG", version u8, dim u8, K u16, sides dim*u32,
                    payload one byte per token, row-major.
DVXB  packed grid:  as DVXG with magic "DVXB", K must be 2, payload
                    bit-packed (MSB first).
DVXM  binary mask:  magic "DVXM", version u8, dim u8, sides dim*u32,
                    bit-packed payload.
DVXP  prob raster:  magic "DVXP", version u8, dim u8, K u16, sides dim*u32,
                    payload L*K float32, row-major.
DVDM  checkpoint:   magic "DVDM", version u8, dim u8, sides dim*u32, K u16,
                    n_classes u16, time_conditioned u8, n_freq u8,
                    cond_dim u16, hidden 2*u32, tau f64, then the parameter
                    tensors as float64 in a fixed order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import TokenGrid
from .mlp import PARAM_NAMES, MlpConfig, MlpDenoiser

VERSION = 1

__all__ = [
    "write_grid",
    "read_grid",
    "write_mask",
    "read_mask",
    "write_probs",
    "read_probs",
    "write_checkpoint",
    "read_checkpoint",
    "write_manifest",
    "read_manifest",
    "load_manifest_grids",
]


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError(
                f"{self.path}: truncated while reading {what} at byte offset {self.off}"
            )
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str, what: str):
        n = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(n, what))

    def expect_magic(self, magic: bytes):
        got = self.take(4, "magic")
        if got != magic:
            raise FormatError(
                f"{self.path}: bad magic {got!r} (expected {magic!r}) at byte offset 0"
            )

    def expect_end(self):
        if self.off != len(self.data):
            raise FormatError(
                f"{self.path}: {len(self.data) - self.off} trailing bytes at offset {self.off}"
            )


def _header(magic: bytes, dim: int, sides, K: int | None) -> bytes:
    out = magic + struct.pack("<BB", VERSION, dim)
    if K is not None:
        out += struct.pack("<H", K)
    out += struct.pack(f"<{dim}I", *sides)
    return out


def _read_header(r: _Reader, magic: bytes, with_k: bool):
    r.expect_magic(magic)
    (version, dim) = r.unpack("<BB", "version/dim")
    if version != VERSION:
        raise FormatError(f"{r.path}: unsupported version {version}")
    if not (1 <= dim <= 3):
        raise FormatError(f"{r.path}: bad dimension {dim} at byte offset 5")
    K = r.unpack("<H", "K")[0] if with_k else None
    sides = r.unpack(f"<{dim}I", "side lengths")
    if any(s == 0 for s in sides):
        raise FormatError(f"{r.path}: zero side length in header")
    return K, tuple(sides)


def write_grid(path, grid: TokenGrid, packed: bool = False) -> None:
    if grid.K > 256:
        raise FormatError("grid formats store one byte per token; K must be <= 256")
    if packed:
        if grid.K != 2:
            raise FormatError("packed grids require K = 2")
        payload = np.packbits(grid.tokens.astype(np.uint8)).tobytes()
        head = _header(b"DVXB", grid.ndim, grid.shape, grid.K)
    else:
        payload = grid.tokens.astype(np.uint8).tobytes()
        head = _header(b"DVXG", grid.ndim, grid.shape, grid.K)
    Path(path).write_bytes(head + payload)


def read_grid(path) -> TokenGrid:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(f"{path}: file shorter than a magic number")
    magic = data[:4]
    if magic not in (b"DVXG", b"DVXB"):
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0")
    r = _Reader(data, path)
    K, sides = _read_header(r, magic, with_k=True)
    L = int(np.prod(sides))
    if magic == b"DVXG":
        payload = r.take(L, "token payload")
        tokens = np.frombuffer(payload, dtype=np.uint8)
    else:
        if K != 2:
            raise FormatError(f"{path}: packed payload requires K=2, header says {K}")
        nbytes = (L + 7) // 8
        payload = r.take(nbytes, "packed payload")
        tokens = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:L]
    r.expect_end()
    if tokens.max(initial=0) >= K:
        raise FormatError(f"{path}: token value exceeds K={K}")
    return TokenGrid(sides, K, tokens)


def write_mask(path, shape: tuple[int, ...], mask: np.ndarray) -> None:
    m = np.asarray(mask).reshape(-1).astype(np.uint8)
    if not np.isin(m, (0, 1)).all():
        raise FormatError("mask payload must be binary")
    head = _header(b"DVXM", len(shape), shape, None)
    Path(path).write_bytes(head + np.packbits(m).tobytes())


def read_mask(path) -> tuple[tuple[int, ...], np.ndarray]:
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    _, sides = _read_header(r, b"DVXM", with_k=False)
    L = int(np.prod(sides))
    payload = r.take((L + 7) // 8, "packed mask payload")
    r.expect_end()
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:L]
    return sides, bits.astype(np.int64)


def write_probs(path, shape: tuple[int, ...], K: int, probs: np.ndarray) -> None:
    arr = np.asarray(probs, dtype="<f4")
    L = int(np.prod(shape))
    if arr.shape != (L, K):
        raise FormatError(f"probs payload must be ({L}, {K}), got {arr.shape}")
    head = _header(b"DVXP", len(shape), shape, K)
    Path(path).write_bytes(head + arr.tobytes())


def read_probs(path) -> tuple[tuple[int, ...], int, np.ndarray]:
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    K, sides = _read_header(r, b"DVXP", with_k=True)
    L = int(np.prod(sides))
    payload = r.take(L * K * 4, "float payload")
    r.expect_end()
    arr = np.frombuffer(payload, dtype="<f4").reshape(L, K).astype(np.float64)
    return sides, K, arr


def write_checkpoint(path, model: MlpDenoiser) -> None:
    cfg = model.config
    head = b"DVDM" + struct.pack("<BB", VERSION, len(cfg.shape))
    head += struct.pack(f"<{len(cfg.shape)}I", *cfg.shape)
    head += struct.pack(
        "<HHBBH2Id",
        cfg.K,
        cfg.n_classes,
        int(cfg.time_conditioned),
        cfg.n_freq,
        cfg.cond_dim,
        cfg.hidden[0],
        cfg.hidden[1],
        cfg.tau,
    )
    chunks = [head]
    for name in PARAM_NAMES:
        chunks.append(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path) -> MlpDenoiser:
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    r.expect_magic(b"DVDM")
    version, dim = r.unpack("<BB", "version/dim")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    sides = r.unpack(f"<{dim}I", "side lengths")
    K, n_classes, tcond, n_freq, cond_dim, h1, h2, tau = r.unpack(
        "<HHBBH2Id", "architecture header"
    )
    cfg = MlpConfig(
        shape=tuple(sides),
        K=K,
        hidden=(h1, h2),
        n_freq=n_freq,
        cond_dim=cond_dim,
        n_classes=n_classes,
        time_conditioned=bool(tcond),
        tau=tau,
    )
    probe = MlpDenoiser(cfg, seed=0)
    params = {}
    for name in PARAM_NAMES:
        shape = probe.params[name].shape
        n = int(np.prod(shape))
        payload = r.take(n * 8, f"parameter {name}")
        params[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    r.expect_end()
    return MlpDenoiser(cfg, params)


def write_manifest(path, shape: tuple[int, ...], K: int, items: list[dict]) -> None:
    """items: [{"path": str, "weight": float, "class_id": int-or-None}, ...]."""
    doc = {
        "shape": list(shape),
        "K": int(K),
        "items": [
            {
                "path": str(it["path"]),
                "weight": float(it.get("weight", 1.0)),
                "class_id": it.get("class_id"),
            }
            for it in items
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("shape", "K", "items"):
        if key not in doc:
            raise FormatError(f"{path}: manifest missing key {key!r}")
    if not doc["items"]:
        raise FormatError(f"{path}: manifest lists no items")
    for i, it in enumerate(doc["items"]):
        if "path" not in it:
            raise FormatError(f"{path}: item {i} missing 'path'")
        if float(it.get("weight", 1.0)) <= 0:
            raise FormatError(f"{path}: item {i} has nonpositive weight")
    doc["shape"] = tuple(doc["shape"])
    return doc


def load_manifest_grids(path) -> tuple[dict, list[tuple[TokenGrid, float, int | None]]]:
    """Read a manifest and every grid it references, validating consistency."""
    doc = read_manifest(path)
    base = Path(path).parent
    out = []
    for it in doc["items"]:
        gpath = Path(it["path"])
        if not gpath.is_absolute():
            gpath = base / gpath
        grid = read_grid(gpath)
        if grid.shape != doc["shape"] or grid.K != doc["K"]:
            raise FormatError(
                f"{gpath}: grid {grid.shape}/K={grid.K} does not match manifest "
                f"{doc['shape']}/K={doc['K']}"
            )
        cid = it.get("class_id")
        out.append((grid, float(it.get("weight", 1.0)), None if cid is None else int(cid)))
    return doc, out
