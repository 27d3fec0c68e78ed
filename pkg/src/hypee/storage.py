"""On-disk formats: binary embedding files, model checkpoints, atomic writes.

Embedding file layout (all little-endian)::

    offset size  field
    0      4     magic b"HYEE"
    4      2     format version (uint16, currently 1)
    6      4     count (uint32)
    10     4     spatial dimension n (uint32)
    14     8     curvature c (float64)
    22     1     mode (uint8: 0 hyperbolic, 1 euclidean)
    23     1     flags (uint8: bit 0 labels present, bit 1 exit ids present)
    24     ...   count * n float32 space components, row-major
           ...   count uint32 labels        (if flagged)
           ...   count uint32 exit ids      (if flagged)

Only space components are stored; hyperbolic time coordinates are re-derived
on read.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .errors import ContractError, DataError
from .geometry import lift
from .model import BackboneConfig, MultiExitModel

MAGIC = b"HYEE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIdBB")
_MODES = {"hyperbolic": 0, "euclidean": 1}
_FLAG_LABELS = 1
_FLAG_EXITS = 2

CHECKPOINT_VERSION = 1


class BadMagicError(DataError):
    code = "bad_magic"


class TruncatedError(DataError):
    code = "truncated"


class VersionMismatchError(DataError):
    code = "version_mismatch"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def config_hash(config: dict) -> str:
    """Short stable digest of a resolved configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class EmbeddingSet:
    """Parallel arrays of embeddings with optional labels and exit ids.

    ``space`` holds the spatial coordinates ``(count, n)``; in hyperbolic mode
    the hyperboloid points are ``lift(space, curvature)``.
    """

    space: np.ndarray
    labels: Optional[np.ndarray] = None
    exit_ids: Optional[np.ndarray] = None
    curvature: float = 1.0
    mode: str = "hyperbolic"

    def __post_init__(self):
        self.space = np.asarray(self.space)
        if self.space.ndim != 2:
            raise ContractError("space must be a (count, n) array")
        for name in ("labels", "exit_ids"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                if arr.shape != (len(self.space),):
                    raise ContractError(f"{name} must have one entry per point")
                setattr(self, name, arr)
        if self.mode not in _MODES:
            raise ContractError(f"unknown mode {self.mode!r}")

    def __len__(self) -> int:
        return len(self.space)

    @property
    def dim(self) -> int:
        return self.space.shape[1]

    def points(self) -> torch.Tensor:
        """Hyperboloid points (hyperbolic mode) or raw vectors, as float64 tensors."""
        s = torch.as_tensor(np.asarray(self.space, dtype=np.float64))
        return lift(s, self.curvature) if self.mode == "hyperbolic" else s

    def select(self, mask) -> "EmbeddingSet":
        mask = np.asarray(mask)
        return EmbeddingSet(
            self.space[mask],
            None if self.labels is None else self.labels[mask],
            None if self.exit_ids is None else self.exit_ids[mask],
            self.curvature,
            self.mode,
        )

    @classmethod
    def concat(cls, parts) -> "EmbeddingSet":
        parts = list(parts)
        first = parts[0]

        def cat(name):
            arrs = [getattr(p, name) for p in parts]
            return None if any(a is None for a in arrs) else np.concatenate(arrs)

        return cls(np.concatenate([p.space for p in parts]), cat("labels"), cat("exit_ids"), first.curvature, first.mode)


def encode_embeddings(es: EmbeddingSet) -> bytes:
    count, n = es.space.shape
    flags = (_FLAG_LABELS if es.labels is not None else 0) | (_FLAG_EXITS if es.exit_ids is not None else 0)
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, count, n, float(es.curvature), _MODES[es.mode], flags),
        np.ascontiguousarray(es.space, dtype="<f4").tobytes(),
    ]
    for arr in (es.labels, es.exit_ids):
        if arr is not None:
            if len(arr) and int(np.min(arr)) < 0:
                raise ContractError("labels and exit ids must be nonnegative")
            parts.append(np.ascontiguousarray(arr, dtype="<u4").tobytes())
    return b"".join(parts)


def decode_embeddings(blob: bytes) -> EmbeddingSet:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError("not an embedding file (bad magic bytes)")
    if len(blob) < _HEADER.size:
        raise TruncatedError(f"header needs {_HEADER.size} bytes, file has {len(blob)}")
    _, version, count, n, c, mode, flags = _HEADER.unpack_from(blob)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"embedding file version {version}, reader supports {FORMAT_VERSION}")
    modes = {v: k for k, v in _MODES.items()}
    if mode not in modes:
        raise DataError(f"unknown mode flag {mode}", code="bad_header")
    need = count * n * 4 + count * 4 * (bool(flags & _FLAG_LABELS) + bool(flags & _FLAG_EXITS))
    body = blob[_HEADER.size :]
    if len(body) < need:
        raise TruncatedError(f"payload needs {need} bytes, found {len(body)}")
    if len(body) > need:
        raise DataError(f"{len(body) - need} trailing bytes after payload", code="trailing_data")
    off = count * n * 4
    space = np.frombuffer(body[:off], dtype="<f4").reshape(count, n).copy()
    labels = exit_ids = None
    if flags & _FLAG_LABELS:
        labels = np.frombuffer(body[off : off + 4 * count], dtype="<u4").copy()
        off += 4 * count
    if flags & _FLAG_EXITS:
        exit_ids = np.frombuffer(body[off : off + 4 * count], dtype="<u4").copy()
    return EmbeddingSet(space, labels, exit_ids, c, modes[mode])


def write_embeddings(es: EmbeddingSet, path) -> None:
    """Atomically write ``es``; space values are truncated to float32."""
    atomic_write_bytes(path, encode_embeddings(es))


def read_embeddings(path) -> EmbeddingSet:
    return decode_embeddings(Path(path).read_bytes())


@torch.no_grad()
def embed_dataset(model: MultiExitModel, X, y=None) -> EmbeddingSet:
    """Embeddings of every sample at every exit, exit-major."""
    X = torch.as_tensor(X, dtype=torch.float64)
    out = model(X)
    hyper = out.mode == "hyperbolic"
    space = [(e[..., 1:] if hyper else e).numpy() for e in out.embeddings]
    B = len(X)
    labels = None if y is None else np.tile(np.asarray(y), out.num_exits)
    exits = np.repeat(np.arange(out.num_exits), B)
    return EmbeddingSet(np.concatenate(space), labels, exits, model.config.curvature, out.mode)


def save_checkpoint(model: MultiExitModel, path, run_config: Optional[dict] = None, seed: Optional[int] = None) -> None:
    """Store parameters (float64, exact) and metadata in a versioned ``.npz`` archive."""
    meta = {
        "format": "hypee-checkpoint",
        "version": CHECKPOINT_VERSION,
        "backbone": _backbone_dict(model.config),
        "seed": seed,
        "run_config": run_config,
    }
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())


def _backbone_dict(cfg: BackboneConfig) -> dict:
    return {
        "input_dim": cfg.input_dim,
        "hidden_dims": list(cfg.hidden_dims),
        "exit_after": list(cfg.exit_after),
        "latent_dim": cfg.latent_dim,
        "num_classes": cfg.num_classes,
        "mode": cfg.mode,
        "curvature": cfg.curvature,
        "tangent_clip": cfg.tangent_clip,
    }


def load_checkpoint(path):
    """Return ``(model, meta)``."""
    if not Path(path).is_file():
        raise FileNotFoundError(2, "no such checkpoint", str(path))
    try:
        archive = np.load(Path(path), allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: not a checkpoint archive ({exc})", code="bad_checkpoint") from exc
    with archive:
        if "meta" not in archive.files:
            raise DataError(f"{path}: checkpoint has no metadata", code="bad_checkpoint")
        meta = json.loads(archive["meta"].tobytes().decode())
        if meta.get("format") != "hypee-checkpoint":
            raise DataError(f"{path}: not a checkpoint archive", code="bad_checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise VersionMismatchError(f"checkpoint version {meta.get('version')}, reader supports {CHECKPOINT_VERSION}")
        model = MultiExitModel(BackboneConfig(**meta["backbone"]))
        state = {k[len("param/") :]: torch.from_numpy(archive[k].copy()) for k in archive.files if k.startswith("param/")}
    model.load_state_dict(state)
    model.eval()
    return model, meta
