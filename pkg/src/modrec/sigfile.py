"""SIGF binary dataset format.

Little-endian layout:

    magic    4 bytes  b"SIGF"
    version  u32      1
    domain   u8       0 = I/Q, 1 = A/P
    frames   u64      frame count
    N        u32      samples per frame
    classes  u16      class count

then per frame:

    label    u16
    snr_db   i16      integer dB
    frame_id u64
    payload  2*N float32, interleaved (I,Q) or (A,P)

A JSON sidecar `<path>.meta.json` carries class names, the generation spec,
the master seed, the split assignment and a creation timestamp (the only
timestamp any artifact carries).
"""

import json
import struct
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .preprocess import ApMatrix
from .siggen import Dataset, GenSpec, IqFrame

MAGIC = b"SIGF"
VERSION = 1
DOMAIN_IQ = 0
DOMAIN_AP = 1
_HEADER = struct.Struct("<4sIBQIH")
_FRAME_HEADER = struct.Struct("<HhQ")


def meta_path(path):
    return Path(str(path) + ".meta.json")


def write_sigf(path, dataset: Dataset, spec: GenSpec | None = None, seed=None):
    """Write a dataset plus its meta sidecar; returns the data path."""
    path = Path(path)
    frames = dataset.frames
    if not frames:
        raise ValueError("refusing to write an empty dataset")
    domain = DOMAIN_AP if dataset.domain == "ap" else DOMAIN_IQ
    if domain == DOMAIN_AP:
        n = frames[0].data.shape[0]
    else:
        n = frames[0].samples.size

    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, domain, len(frames), n, len(dataset.class_names)))
        for frame in frames:
            fh.write(_FRAME_HEADER.pack(frame.label, int(round(frame.snr_db)), frame.frame_id))
            if domain == DOMAIN_AP:
                payload = np.ascontiguousarray(frame.data, dtype="<f4")
                if payload.shape != (n, 2):
                    raise ValueError(f"frame {frame.frame_id}: shape {payload.shape} != ({n}, 2)")
            else:
                samples = frame.samples
                if samples.size != n:
                    raise ValueError(f"frame {frame.frame_id}: length {samples.size} != {n}")
                payload = np.empty(2 * n, dtype="<f4")
                payload[0::2] = samples.real
                payload[1::2] = samples.imag
            fh.write(payload.tobytes())

    meta = {
        "class_names": list(dataset.class_names),
        "spec": spec.to_dict() if spec is not None else None,
        "seed": seed,
        "split": {str(fid): which for fid, which in sorted(dataset.split.items())},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_sigf(path) -> Dataset:
    """Read a SIGF file and its meta sidecar back into a Dataset."""
    path = Path(path)
    mpath = meta_path(path)
    if not mpath.exists():
        raise FileNotFoundError(f"missing sidecar {mpath}")
    with open(mpath) as fh:
        meta = json.load(fh)

    with open(path, "rb") as fh:
        magic, version, domain, n_frames, n, n_classes = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a SIGF file")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported SIGF version {version}")
        frames = []
        for _ in range(n_frames):
            label, snr_db, frame_id = _FRAME_HEADER.unpack(fh.read(_FRAME_HEADER.size))
            raw = np.frombuffer(fh.read(8 * n), dtype="<f4")
            if raw.size != 2 * n:
                raise ValueError(f"{path}: truncated frame payload")
            if domain == DOMAIN_AP:
                frames.append(ApMatrix(raw.reshape(n, 2).copy(), label, float(snr_db), frame_id))
            else:
                samples = raw[0::2] + 1j * raw[1::2]
                frames.append(IqFrame(samples.astype(np.complex64), label, float(snr_db), frame_id))

    class_names = meta["class_names"]
    if len(class_names) != n_classes:
        raise ValueError(f"{path}: class count mismatch between file and sidecar")
    split = {int(fid): which for fid, which in meta["split"].items()}
    dataset = Dataset(frames, class_names, split,
                      domain="ap" if domain == DOMAIN_AP else "iq")
    return dataset.validate()


def read_meta(path) -> dict:
    with open(meta_path(path)) as fh:
        return json.load(fh)
