"""Writer for the TSEB embedding interchange format.

Binary layout (little-endian): magic ``TSEB``, u32 version, u64 row
count, u32 dimension, then count x dim float32 rows. A sibling
``<path>.manifest`` maps rows back to patches; ``# key=value`` comment
lines at its top carry free-form provenance metadata.
"""

import csv
import io
import os
import struct
from typing import Dict, Sequence

import numpy as np

from .patches import Patch

EMBED_MAGIC = b"TSEB"
EMBED_FORMAT_VERSION = 1
MANIFEST_FIELDS = ["row", "patch_id", "patient_id", "domain", "ga_weeks"]


def manifest_path(path: str) -> str:
    return path + ".manifest"


def write_tseb(path: str, patches: Sequence[Patch], matrix: np.ndarray,
               metadata: Dict[str, str]) -> None:
    count, dim = matrix.shape
    assert count == len(patches)
    header = (EMBED_MAGIC + struct.pack("<I", EMBED_FORMAT_VERSION)
              + struct.pack("<Q", count) + struct.pack("<I", dim))
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()

    buf = io.StringIO()
    for key in sorted(metadata):
        buf.write(f"# {key}={metadata[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_FIELDS)
    for row, p in enumerate(patches):
        ga = "" if p.ga_weeks is None else str(int(p.ga_weeks))
        writer.writerow([row, p.patch_id, p.patient_id, p.domain, ga])

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header + payload)
    with open(manifest_path(path), "w") as fh:
        fh.write(buf.getvalue())
