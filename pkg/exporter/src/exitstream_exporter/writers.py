"""Writers for the engine's file formats (the contract boundary).

PRVW weights: magic "PRVW", version u32 = 1, entry count u32; per entry the
name (u16 length + UTF-8 bytes), dtype u8 (0 = float32), rank u8, dims
u32 x rank, then the row-major little-endian float32 payload.

PRVC clips: magic "PRVC", version u32 = 1, dims u32 x 4 (C, T, H, W),
float32 payload.

Spec documents: versioned JSON, format id "PRVS"; tensors are referenced by
convention names derived from the layer name.
"""

import json
import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def write_weights(path, tensors: dict) -> None:
    out = bytearray()
    out += struct.pack("<4sII", b"PRVW", FORMAT_VERSION, len(tensors))
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype=np.float32)
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<BB", 0, a.ndim)
        out += struct.pack(f"<{a.ndim}I", *a.shape)
        out += a.tobytes()
    Path(path).write_bytes(bytes(out))


def write_clip(path, clip: np.ndarray) -> None:
    a = np.ascontiguousarray(clip, dtype=np.float32)
    if a.ndim != 4:
        raise ValueError("clip must be (C, T, H, W)")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI4I", b"PRVC", FORMAT_VERSION, *a.shape))
        fh.write(a.tobytes())


def write_spec(path, doc: dict) -> None:
    doc = dict(doc, format="PRVS", version=FORMAT_VERSION)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
