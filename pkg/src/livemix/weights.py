"""Weight file container: JSON header plus flat little-endian float32 payload.

Layout:  b"LMWT" | uint32 header length | UTF-8 JSON header | tensor payload.
The header lists one or more model sections; each section carries its model
kind, its config, and (name, shape, offset) for every tensor. Offsets are
bytes from the start of the payload. The loader validates every shape
against the parameter table for the stored config.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from . import autodiff as ad
from .errors import InputError
from .model import ModelConfig, ModelParams, expected_shapes

MAGIC = b"LMWT"
FORMAT_VERSION = 1


def save_weights(path, models) -> None:
    """Write one ModelParams or a {kind: ModelParams} dict to ``path``."""
    if isinstance(models, ModelParams):
        models = {models.kind: models}
    sections = {}
    payload = bytearray()
    for kind in sorted(models):
        params = models[kind]
        entries = []
        for name, tensor in params.named_tensors():
            data = np.ascontiguousarray(tensor.value, dtype="<f4").tobytes()
            entries.append({"name": name, "shape": list(tensor.shape), "offset": len(payload)})
            payload.extend(data)
        sections[kind] = {"config": params.config.to_dict(), "tensors": entries}
    header = json.dumps(
        {"version": FORMAT_VERSION, "dtype": "float32", "byte_order": "little", "sections": sections},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_weights(path) -> dict:
    """Read every model section from ``path`` as {kind: ModelParams}."""
    if not os.path.exists(path):
        raise InputError(f"weights file not found: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise InputError(f"{path} is not a livemix weights file")
    (header_len,) = struct.unpack_from("<I", blob, 4)
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"corrupt weights header in {path}: {exc}") from exc
    if header.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported weights version {header.get('version')} in {path}")
    payload = blob[8 + header_len :]

    models = {}
    for kind, section in header["sections"].items():
        config = ModelConfig.from_dict(section["config"])
        shapes = expected_shapes(kind, config)
        tensors = {}
        for entry in section["tensors"]:
            name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
            if name not in shapes:
                raise InputError(f"unknown tensor {name!r} in {path}")
            if shape != shapes[name]:
                raise InputError(
                    f"tensor {name} in {path} has shape {shape}, expected {shapes[name]}"
                )
            count = int(np.prod(shape)) if shape else 1
            raw = payload[offset : offset + 4 * count]
            if len(raw) != 4 * count:
                raise InputError(f"truncated payload for tensor {name} in {path}")
            value = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            tensors[name] = ad.parameter(value, name=name)
        try:
            models[kind] = ModelParams(kind, config, tensors)
        except ValueError as exc:
            raise InputError(f"invalid weights in {path}: {exc}") from exc
    return models


def load_model(path, kind: str | None = None) -> ModelParams:
    """Load a single model section, by kind or the only one present."""
    models = load_weights(path)
    if kind is None:
        if len(models) != 1:
            raise InputError(
                f"{path} holds sections {sorted(models)}; specify which one to load"
            )
        return next(iter(models.values()))
    if kind not in models:
        raise InputError(f"{path} has no {kind!r} section (found {sorted(models)})")
    return models[kind]
