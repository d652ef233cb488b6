"""Cross-domain label transfer for 1-minute activity-count series.

The pipeline: synthesize a labeled clinical-style cohort, degrade it into
an anonymized consumer-style stream, embed both with a frozen encoder,
adversarially align the embedding spaces with a small adapter, and carry
gestational-age labels across zero-shot. Mixing metrics and MAE reports
quantify the before/after gap.
"""

__version__ = "0.1.0"

from .datamodel import (  # noqa: F401
    AlignedEmbedding,
    Domain,
    EmbeddingRecord,
    GABinning,
    LabelVault,
    RunConfig,
    SealedLabel,
    TimeSeriesPatch,
    load_patches,
    reveal_ga,
    seal_target_labels,
    split_by_patient,
    split_patient_ids,
    vectors_matrix,
    write_patches,
)
from .errors import (  # noqa: F401
    ConfigurationError,
    DegenerateDataError,
    DimensionMismatchError,
    FormatError,
    GuardViolationError,
    IdentityError,
    LabelRangeError,
    MagicError,
    NumericError,
    ShapeError,
    StateError,
    TruncatedFileError,
    TsalignError,
    VersionError,
)
