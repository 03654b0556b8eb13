"""Self-describing checkpoint files.

Layout: 8-byte magic "DIGGAN01", a uint32 little-endian header length, a
JSON header (format version, stage tag, step, architecture hash, config
snapshot, optimizer scalars, tensor directory), then the raw tensor bytes
in directory order. Round-trips are bitwise lossless.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .errors import CheckpointVersionError, CorruptCheckpointError
from .networks import ModelParams, init_params

MAGIC = b"DIGGAN01"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    params: ModelParams
    config: dict
    stage: str
    optimizer_state: dict
    global_step: int
    version: int = FORMAT_VERSION
    loss_log: list = field(default_factory=list, repr=False)


def _flatten_opt_state(opt_state: dict):
    """Split torch optimizer state dicts into tensors and JSON-safe rest."""
    tensors = {}
    meta = {}
    for net, sd in opt_state.items():
        if sd is None:
            continue
        entry = {"param_groups": sd["param_groups"], "scalars": {}}
        for idx, slots in sd.get("state", {}).items():
            for slot, val in slots.items():
                key = f"{net}.{idx}.{slot}"
                if isinstance(val, torch.Tensor) and val.ndim > 0:
                    tensors[f"opt.{key}"] = val.detach().cpu().numpy()
                else:
                    entry["scalars"][key] = float(val)
        meta[net] = entry
    return tensors, meta


def _rebuild_opt_state(meta: dict, tensors: dict) -> dict:
    out = {}
    for net, entry in meta.items():
        state: dict = {}
        for key, val in entry["scalars"].items():
            _, idx, slot = key.split(".")  # "<net>.<idx>.<slot>"
            state.setdefault(int(idx), {})[slot] = torch.tensor(val)
        for key, arr in tensors.items():
            _, key_net, idx, slot = key.split(".")  # "opt.<net>.<idx>.<slot>"
            if key_net != net:
                continue
            state.setdefault(int(idx), {})[slot] = torch.as_tensor(arr.copy())
        out[net] = {"state": state, "param_groups": entry["param_groups"]}
    return out


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    params = ckpt.params
    entries = []  # (key, numpy array) in write order
    for key, arr in params.state_arrays().items():
        entries.append((f"model.{key}", arr))
    opt_tensors, opt_meta = _flatten_opt_state(ckpt.optimizer_state or {})
    for key in sorted(opt_tensors):
        entries.append((key, opt_tensors[key]))

    directory = []
    blobs = []
    for key, arr in entries:
        dt = _DTYPES.get(arr.dtype.name)
        if dt is None:
            raise CorruptCheckpointError(f"unsupported tensor dtype {arr.dtype}")
        data = np.ascontiguousarray(arr).astype(dt, copy=False).tobytes()
        directory.append({"key": key, "dtype": arr.dtype.name,
                          "shape": list(arr.shape)})
        blobs.append(data)

    header = {
        "version": ckpt.version,
        "stage": ckpt.stage,
        "global_step": int(ckpt.global_step),
        "arch_hash": params.arch_hash(),
        "net": {
            "d_z": params.d_z, "n_views": params.n_views,
            "image_dims": list(params.image_dims),
            "base_channels": params.base_channels,
            "n_blocks": params.n_blocks, "seed": params.seed,
            "dtype": str(params.dtype).replace("torch.", ""),
        },
        "config": ckpt.config,
        "optimizer": opt_meta,
        "tensors": directory,
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(hdr)))
        f.write(hdr)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(MAGIC):
        raise CorruptCheckpointError(f"{path}: file shorter than the magic header")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointVersionError(
            f"{path}: magic {data[:8]!r} is not a recognized checkpoint version"
        )
    if len(data) < len(MAGIC) + 4:
        raise CorruptCheckpointError(f"{path}: truncated before header length")
    (hdr_len,) = struct.unpack_from("<I", data, len(MAGIC))
    pos = len(MAGIC) + 4
    if len(data) < pos + hdr_len:
        raise CorruptCheckpointError(f"{path}: truncated JSON header")
    try:
        header = json.loads(data[pos : pos + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable header: {e}") from e
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {header.get('version')} not supported"
        )
    pos += hdr_len

    arrays = {}
    for ent in header["tensors"]:
        dt = np.dtype(_DTYPES[ent["dtype"]])
        count = int(np.prod(ent["shape"], dtype=np.int64)) if ent["shape"] else 1
        n_bytes = count * dt.itemsize
        if len(data) < pos + n_bytes:
            raise CorruptCheckpointError(f"{path}: truncated tensor {ent['key']}")
        arr = np.frombuffer(data, dtype=dt, count=count, offset=pos)
        arrays[ent["key"]] = arr.reshape(ent["shape"]).astype(ent["dtype"], copy=True)
        pos += n_bytes

    net = header["net"]
    dtype = {"float32": torch.float32, "float64": torch.float64}[net["dtype"]]
    params = init_params(
        d_z=net["d_z"], n_views=net["n_views"], image_dims=tuple(net["image_dims"]),
        seed=net["seed"], base_channels=net["base_channels"],
        n_blocks=net["n_blocks"], dtype=dtype,
    )
    params.load_state_arrays(
        {k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")}
    )
    if params.arch_hash() != header["arch_hash"]:
        raise CorruptCheckpointError(f"{path}: architecture hash mismatch")
    opt_tensors = {k: v for k, v in arrays.items() if k.startswith("opt.")}
    opt_state = _rebuild_opt_state(header.get("optimizer", {}), opt_tensors)
    return Checkpoint(
        params=params, config=header.get("config", {}), stage=header["stage"],
        optimizer_state=opt_state, global_step=header["global_step"],
        version=header["version"],
    )
