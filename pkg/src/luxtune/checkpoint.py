"""Versioned checkpoint format: named-tensor directory in one binary file.

Layout (little-endian): magic ``LXCK``, u32 version, u32 header length,
UTF-8 JSON header, then the concatenated float32 tensor payloads. The
header records the architecture config, modulation filter size, frozen
parameter names, (alpha1, alpha2) training anchors, free-form provenance,
and per-tensor name/shape/offset entries. Save/load round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .engine import Tensor
from .errors import AssetError, FormatError
from .network import EnhancerModel, UNetConfig

CHECKPOINT_MAGIC = b"LXCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(
    model: EnhancerModel, path: Path, provenance: Optional[Dict[str, Any]] = None
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    names = sorted(model.params)
    tensors = []
    offset = 0
    blobs = []
    for name in names:
        data = np.ascontiguousarray(model.params[name].data, dtype="<f4")
        blob = data.tobytes()
        tensors.append(
            {"name": name, "shape": list(data.shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)

    header = {
        "config": {
            "depth": model.config.depth,
            "base_channels": model.config.base_channels,
            "in_channels": model.config.in_channels,
            "out_channels": model.config.out_channels,
            "activation_slope": model.config.activation_slope,
            "modulate_projection": model.config.modulate_projection,
        },
        "filter_size": model.filter_size,
        "frozen": sorted(model.frozen),
        "anchors": [list(a) for a in model.anchors],
        "provenance": provenance or {},
        "tensors": tensors,
    }
    hblob = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<II", CHECKPOINT_VERSION, len(hblob)))
            f.write(hblob)
            for blob in blobs:
                f.write(blob)
    except OSError as e:
        raise AssetError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path: Path) -> EnhancerModel:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise AssetError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if len(blob) < 12 + hlen:
        raise FormatError(f"{path}: truncated JSON header")
    try:
        header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt JSON header ({e})") from e

    base = 12 + hlen
    frozen = frozenset(header.get("frozen", []))
    params: Dict[str, Tensor] = {}
    for entry in header["tensors"]:
        name = entry["name"]
        start = base + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise FormatError(f"{path}: tensor '{name}' payload extends past end of file")
        data = (
            np.frombuffer(blob, dtype="<f4", count=entry["nbytes"] // 4, offset=start)
            .reshape(entry["shape"])
            .copy()
        )
        params[name] = Tensor(data, requires_grad=name not in frozen, name=name)

    cfg = header["config"]
    model = EnhancerModel(
        config=UNetConfig(
            depth=cfg["depth"],
            base_channels=cfg["base_channels"],
            in_channels=cfg["in_channels"],
            out_channels=cfg["out_channels"],
            activation_slope=cfg["activation_slope"],
            modulate_projection=cfg.get("modulate_projection", False),
        ),
        params=params,
        filter_size=header.get("filter_size"),
        frozen=frozen,
        anchors=[tuple(a) for a in header.get("anchors", [])],
    )
    return model


def checkpoint_provenance(path: Path) -> Dict[str, Any]:
    """Read only the JSON header's provenance block."""
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    _, hlen = struct.unpack("<II", blob[4:12])
    return json.loads(blob[12 : 12 + hlen].decode("utf-8")).get("provenance", {})
