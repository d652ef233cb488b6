"""Run a frozen encoder checkpoint over patch files and write embeddings.

The model is any T5-family encoder whose checkpoint carries the
tokenization constants of the mean-scale uniform-bin scheme (the Chronos
family does) in a ``chronos_config`` block; checkpoints without the block
fall back to that family's published defaults. Embeddings are the mean of
the encoder output sequence over valid positions. Patches longer than the
model context are split into near-equal chunks, each chunk embedded, and
the chunk embeddings averaged; the choice is recorded in the output
manifest so downstream consumers can see exactly how each row was made.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, ModelLoadError
from .patches import Patch, read_patches
from .tokenizer import BinTokenizer, split_into_chunks
from .tseb import write_tseb

DEFAULT_MODEL_ID = "amazon/chronos-t5-large"
DEFAULT_HIDDEN_SIZE = 1024

# published tokenization constants of the default checkpoint family, used
# only when a checkpoint does not declare its own
_FALLBACK_TOKENIZER = dict(
    low_limit=-15.0, high_limit=15.0, n_tokens=4096, n_special_tokens=2,
    pad_token_id=0, eos_token_id=1, context_length=512, use_eos_token=True,
)


@dataclass(frozen=True)
class ExportJob:
    """Everything one export run needs, validated up front."""

    manifest_path: str
    output_path: str
    model_id: str = DEFAULT_MODEL_ID
    pooling: str = "mean"
    batch_size: int = 16
    device: str = "cpu"
    expected_dim: int = DEFAULT_HIDDEN_SIZE
    values_path: Optional[str] = None  # default: manifest with .tspx suffix

    def __post_init__(self):
        if self.pooling != "mean":
            raise ConfigurationError(
                f"pooling {self.pooling!r} not supported, only 'mean'")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if self.expected_dim < 1:
            raise ConfigurationError("expected_dim must be positive")
        if self.values_path is None:
            stem = self.manifest_path
            if stem.endswith(".csv"):
                stem = stem[: -len(".csv")]
            object.__setattr__(self, "values_path", stem + ".tspx")


def load_encoder(model_id: str, device: str = "cpu"):
    """Load the frozen encoder plus the tokenizer its checkpoint declares."""
    import torch
    from transformers import T5EncoderModel

    try:
        model = T5EncoderModel.from_pretrained(model_id)
    except Exception as exc:
        raise ModelLoadError(f"cannot load encoder {model_id!r}: {exc}") from exc
    model.to(device)
    model.eval()

    declared = getattr(model.config, "chronos_config", None) or {}
    kwargs = dict(_FALLBACK_TOKENIZER)
    for key in ("context_length", "n_tokens", "n_special_tokens",
                "pad_token_id", "eos_token_id", "use_eos_token"):
        if key in declared:
            kwargs[key] = declared[key]
    limits = declared.get("tokenizer_kwargs", {})
    kwargs["low_limit"] = limits.get("low_limit", kwargs["low_limit"])
    kwargs["high_limit"] = limits.get("high_limit", kwargs["high_limit"])
    if kwargs["n_tokens"] > model.config.vocab_size:
        raise ModelLoadError(
            f"tokenizer wants {kwargs['n_tokens']} tokens but the model "
            f"vocabulary holds {model.config.vocab_size}")
    return model, BinTokenizer(**kwargs)


def _embed_sequences(model, sequences: List[Tuple[np.ndarray, np.ndarray]],
                     batch_size: int, device: str) -> np.ndarray:
    """Mean-pooled encoder output for each (ids, mask) sequence."""
    import torch

    pooled = []
    with torch.no_grad():
        for start in range(0, len(sequences), batch_size):
            batch = sequences[start:start + batch_size]
            width = max(ids.shape[0] for ids, _ in batch)
            ids_t = torch.zeros((len(batch), width), dtype=torch.long)
            mask_t = torch.zeros((len(batch), width), dtype=torch.long)
            for i, (ids, mask) in enumerate(batch):
                ids_t[i, : ids.shape[0]] = torch.from_numpy(ids)
                mask_t[i, : mask.shape[0]] = torch.from_numpy(mask)
            out = model(input_ids=ids_t.to(device),
                        attention_mask=mask_t.to(device))
            hidden = out.last_hidden_state
            weights = mask_t.to(hidden.dtype).unsqueeze(-1).to(hidden.device)
            summed = (hidden * weights).sum(dim=1)
            counts = weights.sum(dim=1).clamp(min=1.0)
            pooled.append((summed / counts).cpu().numpy())
    return np.concatenate(pooled, axis=0)


def export(job: ExportJob) -> np.ndarray:
    """Embed every patch in the job's manifest and write the TSEB pair.

    Returns the float32 embedding matrix, one row per patch in manifest
    order. Deterministic: the model is frozen and inference-only, so two
    runs of the same job produce byte-identical output files.
    """
    import torch

    patches = read_patches(job.manifest_path, job.values_path)
    model, tokenizer = load_encoder(job.model_id, job.device)
    hidden = int(model.config.d_model)
    if hidden != job.expected_dim:
        raise DimensionMismatchError(
            f"job declares dim {job.expected_dim}, model {job.model_id!r} "
            f"produces {hidden}")

    torch.manual_seed(0)  # inference draws nothing, but pin it anyway
    sequences = []
    chunk_counts = []
    for patch in patches:
        chunks = split_into_chunks(patch.values, tokenizer.context_length)
        chunk_counts.append(len(chunks))
        for chunk in chunks:
            ids, mask, _ = tokenizer.tokenize(chunk)
            sequences.append((ids, mask))

    chunk_vectors = _embed_sequences(model, sequences, job.batch_size,
                                     job.device)
    rows = np.empty((len(patches), hidden), dtype=np.float32)
    offset = 0
    for i, n_chunks in enumerate(chunk_counts):
        rows[i] = chunk_vectors[offset:offset + n_chunks].mean(axis=0)
        offset += n_chunks

    if max(chunk_counts) == 1:
        chunking = "none"
    else:
        chunking = (f"split into {min(chunk_counts)}-{max(chunk_counts)} "
                    f"equal chunks of <= {tokenizer.context_length}, "
                    f"chunk embeddings averaged")
    metadata = _metadata(job, tokenizer, hidden, chunking)
    write_tseb(job.output_path, patches, rows, metadata)
    return rows


def _metadata(job: ExportJob, tokenizer: BinTokenizer, hidden: int,
              chunking: str) -> Dict[str, str]:
    from . import __version__

    return {
        "exporter": f"tsfm-exporter {__version__}",
        "model_id": job.model_id,
        "hidden_size": str(hidden),
        "pooling": "mean over encoder output positions with attention",
        "tokenizer": (f"mean-scale uniform bins "
                      f"[{tokenizer.low_limit}, {tokenizer.high_limit}], "
                      f"{tokenizer.n_tokens} tokens"),
        "context_length": str(tokenizer.context_length),
        "chunking": chunking,
    }
