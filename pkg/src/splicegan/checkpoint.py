"""Single-file checkpoint archive.

Layout, all integers little-endian::

    offset 0   8 bytes   magic  b"SPLCGAN\\0"
    offset 8   uint32    format version (currently 1)
    offset 12  uint64    header length H in bytes
    offset 20  H bytes   UTF-8 JSON header
    ...        zero padding to the next multiple of 8
    data       tensor payload; each tensor is C-ordered, little-endian,
               placed at ``data + offset`` as listed in ``header["tensors"]``

The header carries the generator/discriminator spec descriptors, the training
config and its hash, the epoch, validation metrics, and a tensor index of
``{name, dtype, shape, offset, nbytes}`` records. Tensor names are prefixed
``generator/``, ``discriminator/``, ``optim/<net>/<param index>/<key>`` or
``rng``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import BadCheckpoint
from .models import DiscriminatorSpec, GeneratorSpec, from_params

MAGIC = b"SPLCGAN\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DTYPES = {
    torch.float32: "<f4",
    torch.float64: "<f8",
    torch.int64: "<i8",
    torch.uint8: "|u1",
}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    epoch: int
    generator_spec: GeneratorSpec
    discriminator_spec: DiscriminatorSpec
    generator: "OrderedDict[str, torch.Tensor]"
    discriminator: "OrderedDict[str, torch.Tensor]"
    optimizer: dict | None = None  # {"generator": state_dict, "discriminator": state_dict}
    rng_state: torch.Tensor | None = None
    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def recon_mode(self) -> str:
        return self.config.get("loss", {}).get("recon_mode", "bce")

    @property
    def val_metric(self) -> float | None:
        return self.metrics.get("val_metric")

    def build_generator(self):
        model = from_params(self.generator_spec, self.generator)
        return model.eval()

    def build_discriminator(self):
        return from_params(self.discriminator_spec, self.discriminator).eval()

    def _named_tensors(self) -> "OrderedDict[str, torch.Tensor]":
        out: OrderedDict[str, torch.Tensor] = OrderedDict()
        for prefix, params in (("generator", self.generator), ("discriminator", self.discriminator)):
            for name, tensor in params.items():
                out[f"{prefix}/{name}"] = tensor
        for net, state in (self.optimizer or {}).items():
            for index, slots in state["state"].items():
                for key, value in slots.items():
                    out[f"optim/{net}/{index}/{key}"] = torch.as_tensor(value)
        if self.rng_state is not None:
            out["rng"] = self.rng_state
        return out

    def save(self, path: str | Path) -> None:
        index, blobs, offset = [], [], 0
        for name, tensor in self._named_tensors().items():
            tensor = tensor.detach().cpu().contiguous()
            if tensor.dtype not in _DTYPES:
                raise BadCheckpoint(f"unsupported tensor dtype {tensor.dtype} for {name}")
            raw = tensor.numpy().astype(_DTYPES[tensor.dtype], copy=False).tobytes(order="C")
            index.append(
                {"name": name, "dtype": _DTYPES[tensor.dtype], "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)}
            )
            blobs.append(raw)
            pad = -len(raw) % 8
            if pad:
                blobs.append(b"\0" * pad)
            offset += len(raw) + pad
        header = {
            "format_version": FORMAT_VERSION,
            "epoch": self.epoch,
            "generator_spec": self.generator_spec.to_json(),
            "discriminator_spec": self.discriminator_spec.to_json(),
            "config": self.config,
            "config_hash": self.config_hash,
            "metrics": self.metrics,
            "optimizer_groups": {net: state["param_groups"] for net, state in (self.optimizer or {}).items()},
            "tensors": index,
        }
        head = json.dumps(header, sort_keys=True).encode()
        lead = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)) + head
        lead += b"\0" * (-len(lead) % 8)
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(lead)
            for blob in blobs:
                fh.write(blob)
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise BadCheckpoint(f"checkpoint not found: {path}")
        raw = path.read_bytes()
        if len(raw) < _PREFIX.size:
            raise BadCheckpoint(f"{path} is too short to be a checkpoint")
        magic, version, head_len = _PREFIX.unpack_from(raw)
        if magic != MAGIC:
            raise BadCheckpoint(f"{path} is not a checkpoint archive")
        if version != FORMAT_VERSION:
            raise BadCheckpoint(f"{path}: unsupported format version {version}")
        try:
            header = json.loads(raw[_PREFIX.size : _PREFIX.size + head_len])
        except ValueError as exc:
            raise BadCheckpoint(f"{path}: corrupt header ({exc})") from exc
        data_start = _PREFIX.size + head_len
        data_start += -data_start % 8

        tensors: OrderedDict[str, torch.Tensor] = OrderedDict()
        for entry in header["tensors"]:
            start = data_start + entry["offset"]
            chunk = raw[start : start + entry["nbytes"]]
            if len(chunk) != entry["nbytes"]:
                raise BadCheckpoint(f"{path}: truncated tensor {entry['name']}")
            array = np.frombuffer(chunk, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
            tensors[entry["name"]] = torch.from_numpy(array.astype(array.dtype.newbyteorder("="), copy=True))

        def take(prefix):
            return OrderedDict((k[len(prefix) :], v) for k, v in tensors.items() if k.startswith(prefix))

        optimizer = None
        if header.get("optimizer_groups"):
            optimizer = {}
            for net, groups in header["optimizer_groups"].items():
                state: dict[int, dict] = {}
                for key, value in take(f"optim/{net}/").items():
                    index, slot = key.split("/", 1)
                    state.setdefault(int(index), {})[slot] = value
                optimizer[net] = {"state": state, "param_groups": groups}
        return cls(
            epoch=int(header["epoch"]),
            generator_spec=GeneratorSpec.from_json(header["generator_spec"]),
            discriminator_spec=DiscriminatorSpec.from_json(header["discriminator_spec"]),
            generator=take("generator/"),
            discriminator=take("discriminator/"),
            optimizer=optimizer,
            rng_state=tensors.get("rng"),
            config=header.get("config", {}),
            metrics=header.get("metrics", {}),
        )
