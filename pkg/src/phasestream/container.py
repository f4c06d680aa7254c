"""Tensor container file format.

Layout: an 8-byte little-endian unsigned header length, a UTF-8 JSON header,
then the concatenated raw value blobs. The header records byte order (always
little-endian on disk), and dtype/shape/offset for every named tensor, so a
file is self-describing and round-trips bit-exactly.
"""

import json

import numpy as np

from .errors import ConfigError

_MAGIC_ORDER = "little"
_SUPPORTED = {"float32", "float64", "int32", "int64", "uint8"}


def save_tensors(path, tensors):
    """Write a dict of named arrays to `path`.

    Arrays are stored little-endian and C-contiguous; loading returns
    bit-identical values.
    """
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.name not in _SUPPORTED:
            raise ConfigError(f"unsupported dtype {arr.dtype} for tensor '{name}'")
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.name,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"byte_order": _MAGIC_ORDER, "tensors": entries}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(len(header).to_bytes(8, _MAGIC_ORDER))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_tensors(path):
    """Read a container file back into a dict of named arrays."""
    with open(path, "rb") as fh:
        hlen = int.from_bytes(fh.read(8), _MAGIC_ORDER)
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    if header.get("byte_order") != _MAGIC_ORDER:
        raise ConfigError(f"unsupported byte order {header.get('byte_order')!r}")
    out = {}
    for entry in header["tensors"]:
        start = entry["offset"]
        raw = payload[start : start + entry["nbytes"]]
        dt = np.dtype(entry["dtype"]).newbyteorder("<")
        arr = np.frombuffer(raw, dtype=dt).reshape(entry["shape"])
        out[entry["name"]] = arr.astype(np.dtype(entry["dtype"]), copy=True)
    return out


def save_tensor(path, arr):
    """Single-tensor convenience wrapper (stored under the name 'data')."""
    save_tensors(path, {"data": arr})


def load_tensor(path):
    tensors = load_tensors(path)
    if "data" in tensors:
        return tensors["data"]
    if len(tensors) == 1:
        return next(iter(tensors.values()))
    raise ConfigError(f"{path} holds {len(tensors)} tensors, expected one")


def validate_finite(arr, what="tensor"):
    """Raise if `arr` holds NaN or Inf; contract check for numeric carriers."""
    if not np.all(np.isfinite(arr)):
        bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise ValueError(f"{what} contains {bad} non-finite values")
    return arr
