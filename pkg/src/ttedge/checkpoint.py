"""Binary parameter container: one JSON header line, then f32 payloads.

The header lists every factor's name, shape, and byte offset into the
payload section, in storage order. Payloads are little-endian float32.
Round trips are bit-exact, and saving the loaded content reproduces the
file byte for byte.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint"]

_FORMAT = "ttedge-checkpoint"


def save_checkpoint(path, named_arrays) -> None:
    entries = []
    payload = bytearray()
    for name, arr in named_arrays:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload += arr.tobytes()
    header = {"format": _FORMAT, "version": 1, "tensors": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode("ascii"))
        fh.write(b"\n")
        fh.write(bytes(payload))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    header = json.loads(header_line.decode("ascii"))
    if header.get("format") != _FORMAT:
        raise ValueError(f"{path}: not a {_FORMAT} file")
    out: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        out[entry["name"]] = arr.reshape(shape).copy()
    return out
