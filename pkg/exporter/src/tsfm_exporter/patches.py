"""Reader for the patch interchange pair: CSV manifest + TSPX values file.

Layout (little-endian): magic ``TSPX``, u32 version, u64 patch count,
u32 patch length, then count x length float32 values. The manifest names
each row's patch, patient, domain, optional integer label, and start day.
"""

import csv
import struct
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import PatchFormatError

PATCH_MAGIC = b"TSPX"
PATCH_FORMAT_VERSION = 1
MANIFEST_FIELDS = ["patch_id", "patient_id", "domain", "ga_weeks",
                   "patch_start_day", "row"]


@dataclass(frozen=True)
class Patch:
    patch_id: str
    patient_id: str
    domain: str
    values: np.ndarray
    ga_weeks: Optional[int]
    patch_start_day: int


def read_patches(manifest_path: str, values_path: str) -> List[Patch]:
    with open(values_path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20:
        raise PatchFormatError(
            f"{values_path}: shorter than the 20-byte header")
    if raw[:4] != PATCH_MAGIC:
        raise PatchFormatError(
            f"{values_path}: bad magic {raw[:4]!r}, expected {PATCH_MAGIC!r}")
    version, count = struct.unpack_from("<IQ", raw, 4)
    if version != PATCH_FORMAT_VERSION:
        raise PatchFormatError(f"{values_path}: unsupported version {version}")
    (length,) = struct.unpack_from("<I", raw, 16)
    payload = raw[20:]
    if len(payload) != count * length * 4:
        raise PatchFormatError(
            f"{values_path}: payload holds {len(payload)} bytes, expected "
            f"{count * length * 4} ({count} patches x {length} values)")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, length)

    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_FIELDS:
            raise PatchFormatError(
                f"{manifest_path}: columns {reader.fieldnames} != "
                f"{MANIFEST_FIELDS}")
        rows = list(reader)
    if len(rows) != count:
        raise PatchFormatError(
            f"{manifest_path}: lists {len(rows)} patches, values file "
            f"declares {count}")

    patches = []
    for entry in rows:
        idx = int(entry["row"])
        if not 0 <= idx < count:
            raise PatchFormatError(
                f"{manifest_path}: row index {idx} outside values file "
                f"(count {count})")
        ga = entry["ga_weeks"]
        patches.append(Patch(
            patch_id=entry["patch_id"],
            patient_id=entry["patient_id"],
            domain=entry["domain"],
            values=matrix[idx],
            ga_weeks=None if ga == "" else int(ga),
            patch_start_day=int(entry["patch_start_day"]),
        ))
    return patches
