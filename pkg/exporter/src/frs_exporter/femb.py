"""Minimal writer for the FEMB embedding interchange format.

Little-endian: magic "FEMB", version u16 = 1, flags u16 (bit 0 set when
stored values are pre-normalized), dim u32, count u64, then per record a
u16-length-prefixed UTF-8 subject id, a u16-length-prefixed UTF-8 sample
id, the f32 pre-normalization norm and dim f32 values.  The exporter
stores raw model outputs, so the flag stays unset.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IdCollisionError, ModelContractError

_HEADER = struct.Struct("<4sHHIQ")
_U16 = struct.Struct("<H")
_F32 = struct.Struct("<f")


def write_femb(records, dim: int, destination, normalized: bool = False) -> None:
    """Write (subject_id, sample_id, vector) records in input order."""
    records = list(records)
    seen = set()
    chunks = [_HEADER.pack(b"FEMB", 1, 1 if normalized else 0, dim, len(records))]
    for subject_id, sample_id, vector in records:
        key = (subject_id, sample_id)
        if key in seen:
            raise IdCollisionError(f"duplicate (subject, sample) {key}")
        seen.add(key)
        values = np.asarray(vector, dtype=np.float32).reshape(-1)
        if values.shape[0] != dim:
            raise ModelContractError(
                f"record {key} has {values.shape[0]} values, expected {dim}"
            )
        norm = float(np.linalg.norm(values.astype(np.float64)))
        if not np.isfinite(values).all() or norm <= 1e-12:
            raise ModelContractError(f"record {key} has a degenerate embedding")
        for text in key:
            raw = text.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise IdCollisionError(f"id too long in record {key}")
            chunks.append(_U16.pack(len(raw)))
            chunks.append(raw)
        chunks.append(_F32.pack(norm))
        chunks.append(values.tobytes())
    Path(destination).write_bytes(b"".join(chunks))
