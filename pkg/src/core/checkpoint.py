"""
Checkpoint I/O - Parameter files with a JSON header and a float64 payload.

Layout: one UTF-8 JSON header line (shapes, seed, step, extras), a newline,
then every tensor's values as little-endian 64-bit floats in header order.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

FORMAT_NAME = "forcegrasp-params"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or does not match expectations."""


def save_tensors(
    path: Path,
    tensors: List[Tuple[str, np.ndarray]],
    seed: int,
    step: int,
    extra: Dict[str, Any] = None
):
    """
    Write named tensors to a checkpoint file.

    Args:
        path: Output file
        tensors: (name, array) pairs in a fixed order
        seed: Training seed recorded in the header
        step: Optimizer step recorded in the header
        extra: Additional JSON-serializable header fields
    """
    path = Path(path)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "seed": int(seed),
        "step": int(step),
        "tensors": [{"name": name, "shape": list(np.shape(array))} for name, array in tensors],
        "extra": extra or {},
    }
    payload = b"".join(np.ascontiguousarray(array, dtype=_DTYPE).tobytes() for _, array in tensors)

    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(payload)
    os.replace(tmp_path, path)


def read_header(path: Path) -> Dict[str, Any]:
    """Read only the JSON header of a checkpoint."""
    header, _ = _split(Path(path))
    return header


def _split(path: Path) -> Tuple[Dict[str, Any], bytes]:
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    data = path.read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(data[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: header is not valid JSON: {e}")
    if header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    return header, data[newline + 1:]


def load_tensors(path: Path) -> Tuple[Dict[str, Any], List[Tuple[str, np.ndarray]]]:
    """
    Read a checkpoint and validate its shape manifest against the payload.

    Args:
        path: Checkpoint file

    Returns:
        Tuple of (header, [(name, array), ...])
    """
    path = Path(path)
    header, payload = _split(path)

    manifest = header.get("tensors", [])
    sizes = [int(np.prod(entry["shape"], dtype=np.int64)) for entry in manifest]
    expected = sum(sizes) * _DTYPE.itemsize
    if expected != len(payload):
        raise CheckpointError(
            f"{path}: shape manifest needs {expected} payload bytes, found {len(payload)}"
        )

    values = np.frombuffer(payload, dtype=_DTYPE)
    tensors = []
    offset = 0
    for entry, size in zip(manifest, sizes):
        array = values[offset:offset + size].astype(np.float64).reshape(entry["shape"])
        tensors.append((entry["name"], array))
        offset += size
    return header, tensors
