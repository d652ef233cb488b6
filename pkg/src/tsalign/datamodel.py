"""Core domain types, GA binning, patient-level splits, and patch files.

Everything downstream (simulator, encoder, alignment, metrics) works on the
types defined here. All containers are immutable after construction; numpy
value arrays are marked read-only so instances can be shared freely.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ConfigurationError,
    FormatError,
    LabelRangeError,
    MagicError,
    TruncatedFileError,
    VersionError,
)
from .fileio import atomic_write_bytes, atomic_write_text
from .seeding import derive_rng

MINUTES_PER_DAY = 1440

PATCH_MAGIC = b"TSPX"
PATCH_FORMAT_VERSION = 1


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"


def _frozen_array(values, dtype=np.float32) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr.ndim != 1:
        raise ConfigurationError(f"expected a 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("array contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSeriesPatch:
    """Fixed-length window of 1-minute activity counts with metadata.

    ``ga_weeks`` on a target-domain patch exists for evaluation only and must
    never feed classifier training; the alignment trainer guards this.
    """

    patch_id: str
    patient_id: str
    domain: Domain
    values: np.ndarray
    ga_weeks: Optional[int] = None
    patch_start_day: int = 0

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if np.any(arr < 0):
            raise ConfigurationError("activity counts must be non-negative")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "domain", Domain(self.domain))

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_values(self, values, domain: Optional[Domain] = None) -> "TimeSeriesPatch":
        return replace(self, values=values, domain=domain or self.domain)


class LabelVault:
    """Counts every read of the labels it guards."""

    __slots__ = ("reads",)

    def __init__(self):
        self.reads = 0


class SealedLabel:
    """A target-domain label that cannot be read without leaving a trace.

    The trainer receives target embeddings with their ``ga_weeks`` wrapped in
    this type; any arithmetic on it raises, and ``unseal`` increments the
    shared vault counter, so a zero counter after training proves label
    hygiene.
    """

    __slots__ = ("_value", "_vault")

    def __init__(self, value: int, vault: LabelVault):
        self._value = value
        self._vault = vault

    def unseal(self) -> int:
        self._vault.reads += 1
        return self._value

    def __repr__(self):
        return "SealedLabel(<hidden>)"


GALabel = Union[int, SealedLabel, None]


def reveal_ga(label: GALabel) -> Optional[int]:
    """Read a possibly-sealed label. Evaluation code only."""
    if isinstance(label, SealedLabel):
        return label.unseal()
    return label


@dataclass(frozen=True)
class EmbeddingRecord:
    """Frozen-encoder output vector with the producing patch's metadata."""

    vector: np.ndarray
    patient_id: str
    domain: Domain
    source_patch_id: str
    ga_weeks: GALabel = None

    def __post_init__(self):
        object.__setattr__(self, "vector", _frozen_array(self.vector))
        object.__setattr__(self, "domain", Domain(self.domain))

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class AlignedEmbedding:
    """Adapter output in the aligned space; metadata mirrors the input record."""

    vector: np.ndarray
    patient_id: str
    domain: Domain
    source_patch_id: str
    ga_weeks: GALabel = None

    def __post_init__(self):
        object.__setattr__(self, "vector", _frozen_array(self.vector))
        object.__setattr__(self, "domain", Domain(self.domain))

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


def seal_target_labels(records: Sequence[EmbeddingRecord]):
    """Hide ga_weeks of target-domain records behind a counting guard.

    Returns the guarded records plus the :class:`LabelVault` whose ``reads``
    counter exposes every unseal.
    """
    vault = LabelVault()
    out = []
    for rec in records:
        if rec.domain is Domain.TARGET and isinstance(rec.ga_weeks, int):
            out.append(replace(rec, ga_weeks=SealedLabel(rec.ga_weeks, vault)))
        else:
            out.append(rec)
    return out, vault


def vectors_matrix(records) -> np.ndarray:
    """Stack record vectors into an (n, d) float32 matrix."""
    if not records:
        raise ConfigurationError("no records to stack")
    return np.stack([r.vector for r in records]).astype(np.float32, copy=False)


@dataclass(frozen=True)
class GABinning:
    """Maps integer gestational-age weeks onto consecutive weekly bins."""

    bin_min: int = 20
    n_bins: int = 38

    def __post_init__(self):
        if self.n_bins < 2:
            raise ConfigurationError(f"n_bins must be >= 2, got {self.n_bins}")

    @property
    def bin_max_week(self) -> int:
        return self.bin_min + self.n_bins - 1

    def week_to_bin(self, ga_weeks: int) -> int:
        if not self.bin_min <= ga_weeks <= self.bin_max_week:
            raise LabelRangeError(
                f"ga_weeks={ga_weeks} outside bin range "
                f"[{self.bin_min}, {self.bin_max_week}]"
            )
        return int(ga_weeks) - self.bin_min

    def bin_to_week(self, bin_index: int) -> int:
        if not 0 <= bin_index < self.n_bins:
            raise LabelRangeError(
                f"bin index {bin_index} outside [0, {self.n_bins - 1}]"
            )
        return self.bin_min + int(bin_index)


@dataclass(frozen=True)
class RunConfig:
    """Every hyperparameter of the pipeline, with desk-scale defaults."""

    seed: int = 12
    out_dir: str = "runs/latest"

    # cohort
    n_patients: int = 50
    patches_per_patient: int = 10
    patch_days: int = 7
    bin_min: int = 20
    n_bins: int = 38
    eval_fraction: float = 0.2

    # encoder
    d_embed: int = 256
    d_align: int = 128
    surrogate_seed: int = 90210

    # simulator
    delta: float = 0.5
    n_max: int = 50
    noise_sigma: float = 0.25
    noise_sigma_adaptive: bool = True
    smoothing_window: int = 31
    rescale_low: float = 0.6
    rescale_high: float = 1.0
    mask_fraction: float = 0.15
    mask_min_run: int = 30
    mask_max_run: int = 240

    # alignment
    lambda_adv: float = 1.0
    lr_adapter: float = 1e-3
    lr_discriminator: Optional[float] = None  # None -> 2 * lr_adapter
    batch_size: int = 64
    epochs: int = 60
    symmetric_adversary: bool = False
    decode: str = "argmax"  # or "expected"

    # metrics
    knn_k: int = 20

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError(f"delta must lie in [0,1], got {self.delta}")
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ConfigurationError(
                f"mask_fraction must lie in [0,1), got {self.mask_fraction}"
            )
        if self.lr_adapter <= 0:
            raise ConfigurationError("lr_adapter must be positive")
        if self.lr_discriminator is not None and self.lr_discriminator <= 0:
            raise ConfigurationError("lr_discriminator must be positive")
        if self.d_embed < self.d_align:
            raise ConfigurationError(
                f"d_embed ({self.d_embed}) must be >= d_align ({self.d_align})"
            )
        if self.n_max < 1:
            raise ConfigurationError("n_max must be >= 1")

    @property
    def patch_length(self) -> int:
        return self.patch_days * MINUTES_PER_DAY

    @property
    def lr_discriminator_effective(self) -> float:
        if self.lr_discriminator is None:
            return 2.0 * self.lr_adapter
        return self.lr_discriminator

    @property
    def binning(self) -> GABinning:
        return GABinning(bin_min=self.bin_min, n_bins=self.n_bins)

    @property
    def rescale_range(self):
        return (self.rescale_low, self.rescale_high)


def split_patient_ids(patient_ids, eval_fraction: float, seed: int):
    """Deterministically partition patient ids into (train, eval) sets.

    Eval size is round(eval_fraction * n), clamped to [1, n-1]. The split
    depends only on the id set and the seed, not on input order.
    """
    unique = sorted(set(patient_ids))
    if len(unique) < 2:
        raise ConfigurationError(
            f"need at least 2 distinct patients, got {len(unique)}"
        )
    n_eval = int(round(eval_fraction * len(unique)))
    n_eval = max(1, min(n_eval, len(unique) - 1))
    perm = derive_rng(seed, "patient-split").permutation(len(unique))
    eval_ids = frozenset(unique[i] for i in perm[:n_eval])
    train_ids = frozenset(u for u in unique if u not in eval_ids)
    return train_ids, eval_ids


def split_by_patient(records, eval_fraction: float, seed: int):
    """Split any records carrying ``patient_id`` with no patient leakage."""
    train_ids, eval_ids = split_patient_ids(
        (r.patient_id for r in records), eval_fraction, seed
    )
    train = [r for r in records if r.patient_id in train_ids]
    evalset = [r for r in records if r.patient_id in eval_ids]
    return train, evalset


# ---------------------------------------------------------------------------
# Patch manifest (CSV) + values file ("TSPX")
# ---------------------------------------------------------------------------

_MANIFEST_FIELDS = ["patch_id", "patient_id", "domain", "ga_weeks",
                    "patch_start_day", "row"]


def write_patches(patches: Sequence[TimeSeriesPatch], manifest_path: str,
                  values_path: str) -> None:
    """Write the CSV manifest plus the binary values file atomically."""
    if not patches:
        raise ConfigurationError("no patches to write")
    length = len(patches[0])
    for p in patches:
        if len(p) != length:
            raise ConfigurationError(
                f"patch {p.patch_id} has length {len(p)}, expected {length}"
            )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_MANIFEST_FIELDS)
    for row, p in enumerate(patches):
        ga = "" if p.ga_weeks is None else str(int(p.ga_weeks))
        writer.writerow([p.patch_id, p.patient_id, p.domain.value, ga,
                         p.patch_start_day, row])
    atomic_write_text(manifest_path, buf.getvalue())

    header = PATCH_MAGIC + struct.pack("<IQ", PATCH_FORMAT_VERSION, len(patches))
    body = struct.pack("<I", length)
    data = np.stack([p.values for p in patches]).astype("<f4").tobytes()
    atomic_write_bytes(values_path, header + body + data)


def load_patches(manifest_path: str, values_path: str):
    """Load patches; validates magic, version, count, length, payload size."""
    with open(values_path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise TruncatedFileError(
            f"values file shorter than 16-byte header in {values_path}",
            offset=len(raw))
    if raw[:4] != PATCH_MAGIC:
        raise MagicError(
            f"bad magic {raw[:4]!r}, expected {PATCH_MAGIC!r}", offset=0)
    version, count = struct.unpack_from("<IQ", raw, 4)
    if version != PATCH_FORMAT_VERSION:
        raise VersionError(
            f"unsupported values-file version {version}", offset=4)
    if len(raw) < 20:
        raise TruncatedFileError("missing patch length field", offset=16)
    (length,) = struct.unpack_from("<I", raw, 16)
    payload = raw[20:]
    expected = count * length * 4
    if len(payload) != expected:
        raise TruncatedFileError(
            f"payload holds {len(payload)} bytes, expected {expected} "
            f"({count} patches x {length} values)", offset=20 + len(payload))
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, length)

    patches = []
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames != _MANIFEST_FIELDS:
            raise FormatError(
                f"manifest columns {reader.fieldnames} != {_MANIFEST_FIELDS}")
        for entry in reader:
            row = int(entry["row"])
            if not 0 <= row < count:
                raise FormatError(
                    f"manifest row index {row} outside values file "
                    f"(count {count})")
            ga = entry["ga_weeks"]
            patches.append(TimeSeriesPatch(
                patch_id=entry["patch_id"],
                patient_id=entry["patient_id"],
                domain=Domain(entry["domain"]),
                values=matrix[row],
                ga_weeks=None if ga == "" else int(ga),
                patch_start_day=int(entry["patch_start_day"]),
            ))
    if len(patches) != count:
        raise FormatError(
            f"manifest lists {len(patches)} patches, values file declares {count}")
    return patches
