"""On-disk formats.

Matrix files (``.mchs``) are little-endian::

    b"MCHS"  u32 version  u32 n_c  u32 n  u8 dtype(0 = complex128)
    n_c * n * (f64 re, f64 im), row-major

An optional JSON sidecar ``<file>.json`` carries generator parameters and
masks (masks as sorted ``[k, t]`` index lists, 0-based).

Config files are INI-style (``key = value`` under ``[section]`` headers) and
read with :mod:`configparser`.
"""

from __future__ import annotations

import configparser
import json
import struct
from pathlib import Path

import numpy as np

from .sampling import ObservationMask
from .signal_gen import MultiChannelSignal, SpectralParams

__all__ = [
    "MAGIC",
    "VERSION",
    "write_matrix",
    "read_matrix",
    "sidecar_path",
    "save_signal",
    "load_signal",
    "mask_to_json",
    "mask_from_json",
    "read_config",
    "to_jsonable",
]

MAGIC = b"MCHS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIB")
_DTYPE_COMPLEX128 = 0


def write_matrix(path, X: np.ndarray) -> None:
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    n_c, n = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n_c, n, _DTYPE_COMPLEX128))
        fh.write(np.ascontiguousarray(X).astype("<c16").tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, n_c, n, dtype = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if dtype != _DTYPE_COMPLEX128:
            raise ValueError(f"{path}: unsupported dtype code {dtype}")
        body = fh.read()
    if len(body) != 16 * n_c * n:
        raise ValueError(f"{path}: expected {16 * n_c * n} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<c16").reshape(n_c, n).astype(np.complex128)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays so ``json.dumps`` accepts them."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def mask_to_json(mask: ObservationMask) -> dict:
    return {
        "shape": list(mask.shape),
        "mode": mask.mode,
        "seed": mask.seed,
        "indices": mask.indices.tolist(),
        "info": to_jsonable(mask.info),
    }


def mask_from_json(d: dict) -> ObservationMask:
    return ObservationMask.from_indices(d["indices"], tuple(d["shape"]), mode=d["mode"], seed=d["seed"])


def save_signal(path, signal: MultiChannelSignal, extra: dict | None = None) -> None:
    """Write the matrix and, when there is metadata, its JSON sidecar."""
    write_matrix(path, signal.data)
    meta = dict(signal.meta)
    if signal.params is not None:
        meta["params"] = signal.params.to_dict()
    if signal.seed is not None:
        meta["seed"] = signal.seed
    if extra:
        meta.update(extra)
    if meta:
        sidecar_path(path).write_text(json.dumps(to_jsonable(meta), indent=1, sort_keys=True))


def load_signal(path) -> MultiChannelSignal:
    data = read_matrix(path)
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    params = SpectralParams.from_dict(meta.pop("params")) if "params" in meta else None
    seed = meta.pop("seed", None)
    return MultiChannelSignal(data, params=params, seed=seed, meta=meta)


def read_config(path) -> dict[str, dict[str, str]]:
    """Read an INI config into ``{section: {key: raw string}}``.

    Keys outside any section are not allowed by configparser; put them under
    ``[run]``.
    """
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    return {s: dict(parser[s]) for s in parser.sections()}
