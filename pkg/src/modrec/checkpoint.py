"""Parameter checkpoint file: JSON index header + float32 blob, little-endian.

Layout: u32 header length, then UTF-8 JSON
`{"version": 1, "tensors": [{"name", "shape", "offset"}...], "extra": {...}}`,
then the concatenated '<f4' tensor data. `extra` carries arbitrary metadata
(the model config, typically). Tensor order follows the store's insertion
order.
"""

import json
import struct

import numpy as np

from .autodiff import Tensor


def save_params(path, params, extra=None):
    """Write named parameters (Tensor or ndarray values) plus metadata."""
    index = []
    blobs = []
    offset = 0
    for name, value in params.items():
        data = value.data if isinstance(value, Tensor) else np.asarray(value)
        blob = np.ascontiguousarray(data, dtype="<f4")
        index.append({"name": name, "shape": list(blob.shape), "offset": offset})
        blobs.append(blob.tobytes())
        offset += blob.nbytes
    header = json.dumps({"version": 1, "tensors": index, "extra": extra},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    return path


def load_params(path):
    """Read a checkpoint; returns ({name: float32 ndarray}, extra)."""
    with open(path, "rb") as fh:
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version")
        payload = fh.read()
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        params[entry["name"]] = arr.reshape(shape).copy()
    return params, header.get("extra")
