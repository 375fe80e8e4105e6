"""Binary parameter files with a JSON sidecar.

Layout of ``<name>.bin``::

    8 bytes   magic b"HTCNNP01"
    32 bytes  SHA-256 of the canonical JSON of the network spec
    8 bytes   parameter count, little-endian uint64
    8*n bytes parameters as little-endian float64 in declaration order

``<name>.json`` records the spec, the seed and any extra metadata.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .architectures import build_network
from .dataio import write_atomic
from .errors import DataError, ParseError

MAGIC = b"HTCNNP01"


def spec_hash(spec: dict) -> bytes:
    return hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).digest()


def save_network(path, network, seed: int, extra: dict | None = None) -> Path:
    path = Path(path).with_suffix(".bin")
    flat = network.get_flat().astype("<f8")
    blob = MAGIC + spec_hash(network.spec) + struct.pack("<Q", flat.size) + flat.tobytes()
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    sidecar = {"spec": network.spec, "seed": seed, **(extra or {})}
    write_atomic(path.with_suffix(".json"), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_network(path):
    """Rebuild a network from its files; returns (network, sidecar dict)."""
    path = Path(path).with_suffix(".bin")
    side_path = path.with_suffix(".json")
    try:
        sidecar = json.loads(side_path.read_text())
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise DataError(f"missing model file {exc.filename}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(side_path, str(exc), exc.lineno) from exc
    if blob[:8] != MAGIC:
        raise ParseError(path, "not a parameter file (bad magic bytes)")
    if blob[8:40] != spec_hash(sidecar["spec"]):
        raise ParseError(path, "spec hash does not match the JSON sidecar")
    (n,) = struct.unpack("<Q", blob[40:48])
    if len(blob) != 48 + 8 * n:
        raise ParseError(path, f"expected {n} parameters, file holds {(len(blob) - 48) // 8}")
    network = build_network(sidecar["spec"], sidecar.get("seed", 0))
    network.set_flat(np.frombuffer(blob, dtype="<f8", offset=48, count=n))
    return network, sidecar
