"""Export frozen time-series foundation-model embeddings to TSEB files."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigurationError,
    DimensionMismatchError,
    ExporterError,
    ModelLoadError,
    PatchFormatError,
)
from .export import DEFAULT_MODEL_ID, ExportJob, export, load_encoder  # noqa: F401
from .patches import Patch, read_patches  # noqa: F401
from .tokenizer import BinTokenizer, split_into_chunks  # noqa: F401
