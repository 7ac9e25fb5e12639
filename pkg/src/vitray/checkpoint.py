"""Versioned binary checkpoint container.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON
header, then raw little-endian float64 blobs back to back. The header
records the model config, completed-epoch counter, optimizer scalars, and
a name/shape/offset index for every tensor. Writing the same state twice
produces identical bytes, and a write-then-read round trip is bit-exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .model import ViTConfig, ViTModel
from .optim import AdamW
from .tensor import Tensor

MAGIC = b"VITCKPT1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: ViTConfig
    params: dict[str, np.ndarray]
    epoch: int
    optimizer: Optional[dict] = None          # scalar state: t, lr, betas, eps, weight_decay
    opt_arrays: Optional[dict[str, np.ndarray]] = None  # m/<name>, v/<name>

    def build_model(self) -> ViTModel:
        return ViTModel(self.config, params={n: Tensor(a) for n, a in self.params.items()})


def save_checkpoint(path, model: ViTModel, epoch: int,
                    optimizer: Optional[AdamW] = None) -> None:
    tensors: dict[str, np.ndarray] = {f"param/{n}": t.data for n, t in model.params.items()}
    opt_meta = None
    if optimizer is not None:
        tensors.update({f"opt/{k}": v for k, v in optimizer.state_arrays().items()})
        opt_meta = {
            "t": optimizer.t,
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "weight_decay": optimizer.weight_decay,
        }

    index = []
    offset = 0
    for name, array in tensors.items():
        index.append({"name": name, "shape": list(array.shape), "offset": offset})
        offset += array.size * 8
    header = json.dumps({
        "version": FORMAT_VERSION,
        "vit_config": model.config.to_dict(),
        "epoch": int(epoch),
        "optimizer": opt_meta,
        "tensors": index,
    }, sort_keys=True).encode("utf-8")

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for array in tensors.values():
            fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())
    os.replace(tmp, path)  # never leave a half-written checkpoint behind


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    header_len = int.from_bytes(blob[8:16], "little")
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from None
    if header.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {header.get('version')}")

    base = 16 + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + entry["offset"]
        raw = blob[start:start + count * 8]
        if len(raw) != count * 8:
            raise DataError(f"{path}: tensor {entry['name']} truncated")
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    params = {n[len("param/"):]: a for n, a in tensors.items() if n.startswith("param/")}
    opt_arrays = {n[len("opt/"):]: a for n, a in tensors.items() if n.startswith("opt/")}
    return Checkpoint(
        config=ViTConfig.from_dict(header["vit_config"]),
        params=params,
        epoch=int(header["epoch"]),
        optimizer=header.get("optimizer"),
        opt_arrays=opt_arrays or None,
    )
