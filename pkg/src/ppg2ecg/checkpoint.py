"""Checkpoint files: magic tag, JSON header, little-endian float64 payload.

Layout::

    b"P2ECKPT\\0" | uint64 LE header length | UTF-8 JSON header | float64 LE payload

The header carries the architecture manifest, the parameter order and
shapes, kept-channel sets of pruned models, the training configuration and
the seed. Keys are sorted so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import ArchConfig, ModelParams, param_shapes

MAGIC = b"P2ECKPT\0"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: ModelParams
    train_config: dict | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)


def _header(ckpt: Checkpoint) -> dict:
    m = ckpt.model
    shapes = param_shapes(m.arch)
    if list(shapes) != list(m.values) or any(m.values[k].shape != s for k, s in shapes.items()):
        raise ValueError("model values do not match the architecture manifest")
    return {
        "format_version": FORMAT_VERSION,
        "arch": m.arch.to_dict(),
        "layers": [[name, list(spec.quad)] for name, spec in m.arch.layer_table()],
        "params": [[k, list(s)] for k, s in shapes.items()],
        "n_params": int(sum(int(np.prod(s)) for s in shapes.values())),
        "f1_keep": m.f1_keep,
        "fstar_keep": m.fstar_keep,
        "meta": m.meta,
        "train_config": ckpt.train_config,
        "seed": ckpt.seed,
        "extra": ckpt.extra,
    }


def to_bytes(ckpt: Checkpoint) -> bytes:
    header = json.dumps(_header(ckpt), sort_keys=True, separators=(",", ":")).encode()
    payload = np.concatenate([v.ravel() for v in ckpt.model.values.values()]).astype("<f8").tobytes()
    return MAGIC + struct.pack("<Q", len(header)) + header + payload


def from_bytes(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (n,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + n].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
    flat = np.frombuffer(blob[16 + n :], dtype="<f8")
    if flat.size != header["n_params"]:
        raise ValueError(f"payload holds {flat.size} values, manifest says {header['n_params']}")
    arch = ArchConfig.from_dict(header["arch"])
    values, pos = {}, 0
    for name, shape in header["params"]:
        size = int(np.prod(shape))
        values[name] = flat[pos : pos + size].astype(np.float64).reshape(shape)
        pos += size
    if list(param_shapes(arch)) != list(values):
        raise ValueError("parameter list does not match the architecture")
    model = ModelParams(arch, values, header["f1_keep"], header["fstar_keep"], header["meta"])
    return Checkpoint(model, header["train_config"], header["seed"], header["extra"])


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    return from_bytes(path.read_bytes())
