"""Checkpoint container for predictor weights and optimizer state.

Layout: magic "ODCK", version, a JSON header (variant, preset, training
stage, optimizer step, free-form config, and a manifest of named
arrays), then the raw little-endian array blobs in manifest order.
Parameters, batch-norm running statistics, and Adam moments all travel
as named arrays.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..tensor import AdamState
from .networks import PredictorNets, build_nets
from .presets import get_preset
from .variants import variant_from_name

_MAGIC = b"ODCK"
_VERSION = 1
_HEAD = struct.Struct("<4sII")  # magic, version, header length


def save_checkpoint(
    path: str | Path,
    nets: PredictorNets,
    adam: AdamState,
    stage: int,
    config: dict | None = None,
) -> None:
    params = nets.params()
    buffers = nets.buffers()
    entries = []
    blobs = []

    def put(name: str, kind: str, arr: np.ndarray) -> None:
        data = np.ascontiguousarray(arr)
        if data.dtype.byteorder == ">":
            data = data.astype(data.dtype.newbyteorder("<"))
        entries.append(
            {
                "name": name,
                "kind": kind,
                "shape": list(data.shape),
                "dtype": data.dtype.str,
            }
        )
        blobs.append(data.tobytes())

    for name, p in params.items():
        put(name, "param", p.data)
    for name, b in buffers.items():
        put(name, "buffer", b)
    for name, m in adam.m.items():
        put(name, "adam_m", m)
    for name, v in adam.v.items():
        put(name, "adam_v", v)

    header = {
        "variant": nets.variant.value,
        "preset": nets.preset.name,
        "mask_channels": int(nets.node_decoder.out_shape[0]),
        "stage": int(stage),
        "adam_step": int(adam.step),
        "config": config or {},
        "entries": entries,
    }
    head_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEAD.pack(_MAGIC, _VERSION, len(head_bytes)))
        f.write(head_bytes)
        for b in blobs:
            f.write(b)


def load_checkpoint(
    path: str | Path,
    rng: np.random.Generator | None = None,
) -> tuple[PredictorNets, AdamState, int, dict]:
    """Rebuild the networks a checkpoint describes and load its state.

    Returns (nets, adam state, curriculum stage, config). Malformed or
    incomplete files raise DataError.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from None
    if len(raw) < _HEAD.size:
        raise DataError(f"checkpoint {path} too short for a header")
    magic, version, head_len = _HEAD.unpack_from(raw)
    if magic != _MAGIC:
        raise DataError(f"checkpoint {path} has wrong magic {magic!r}")
    if version != _VERSION:
        raise DataError(f"checkpoint {path} has unsupported version {version}")
    if len(raw) < _HEAD.size + head_len:
        raise DataError(f"checkpoint {path} truncated inside the header")
    try:
        header = json.loads(raw[_HEAD.size : _HEAD.size + head_len])
    except ValueError as e:
        raise DataError(f"checkpoint {path} header is not valid JSON: {e}") from None

    try:
        variant = variant_from_name(header["variant"])
        preset = get_preset(header["preset"], int(header["mask_channels"]))
        stage = int(header["stage"])
        adam = AdamState(step=int(header["adam_step"]))
        entries = header["entries"]
        config = header["config"]
    except (KeyError, TypeError) as e:
        raise DataError(f"checkpoint {path} header missing field: {e}") from None

    nets = build_nets(variant, preset, rng or np.random.default_rng(0))
    params = nets.params()
    buffers = nets.buffers()

    off = _HEAD.size + head_len
    seen_params: set[str] = set()
    seen_buffers: set[str] = set()
    for ent in entries:
        name, kind = ent["name"], ent["kind"]
        shape = tuple(int(s) for s in ent["shape"])
        dtype = np.dtype(ent["dtype"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if off + nbytes > len(raw):
            raise DataError(f"checkpoint {path} truncated inside array {name!r}")
        arr = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)), offset=off)
        arr = arr.reshape(shape).copy()
        off += nbytes
        if kind == "param":
            if name not in params:
                raise DataError(f"checkpoint {path} names unknown parameter {name!r}")
            if params[name].data.shape != shape:
                raise DataError(
                    f"checkpoint {path}: parameter {name!r} has shape {shape}, "
                    f"model expects {params[name].data.shape}"
                )
            params[name].data = arr
            seen_params.add(name)
        elif kind == "buffer":
            if name not in buffers:
                raise DataError(f"checkpoint {path} names unknown buffer {name!r}")
            if buffers[name].shape != shape:
                raise DataError(f"checkpoint {path}: buffer {name!r} shape mismatch")
            buffers[name][...] = arr
            seen_buffers.add(name)
        elif kind == "adam_m":
            adam.m[name] = arr
        elif kind == "adam_v":
            adam.v[name] = arr
        else:
            raise DataError(f"checkpoint {path} has unknown entry kind {kind!r}")

    if off != len(raw):
        raise DataError(f"checkpoint {path} has {len(raw) - off} trailing bytes")
    missing = set(params) - seen_params
    if missing:
        raise DataError(f"checkpoint {path} missing parameters: {sorted(missing)[:3]}")
    missing = set(buffers) - seen_buffers
    if missing:
        raise DataError(f"checkpoint {path} missing buffers: {sorted(missing)[:3]}")
    return nets, adam, stage, config
