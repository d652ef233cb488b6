"""Mean-scale uniform-bin tokenization for real-valued series.

The published scheme used by the Chronos family of T5 checkpoints: each
context window is divided by the mean of its absolute values, then every
scaled value is bucketized into uniformly spaced bins between two fixed
limits. Token ids 0..n_special_tokens-1 are reserved (pad, eos); finite
values map into the remaining vocabulary. Windows longer than the model
context are handled upstream by chunking, not truncation.
"""

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class BinTokenizer:
    """Maps a float series to token ids plus an attention mask and scale."""

    low_limit: float = -15.0
    high_limit: float = 15.0
    n_tokens: int = 4096
    n_special_tokens: int = 2
    pad_token_id: int = 0
    eos_token_id: int = 1
    context_length: int = 512
    use_eos_token: bool = True
    boundaries: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.high_limit <= self.low_limit:
            raise ConfigurationError(
                f"bin limits [{self.low_limit}, {self.high_limit}] are empty")
        n_centers = self.n_tokens - self.n_special_tokens - 1
        if n_centers < 2:
            raise ConfigurationError(
                f"{self.n_tokens} tokens leave no room for value bins")
        if self.context_length < 1:
            raise ConfigurationError("context_length must be positive")
        centers = np.linspace(self.low_limit, self.high_limit, n_centers)
        # open-ended buckets at both extremes; interior edges halfway
        # between neighboring centers
        boundaries = np.concatenate(
            ([-1e20], (centers[1:] + centers[:-1]) / 2.0, [1e20]))
        object.__setattr__(self, "boundaries", boundaries)

    def tokenize(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        """Token ids, attention mask and the scale for one context window.

        NaN entries become pad tokens with mask 0. The scale is the mean
        absolute value over the valid entries, falling back to 1.0 when
        that mean is zero or undefined, so all-zero and empty windows
        still tokenize.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1:
            raise ConfigurationError(
                f"expected a 1-D context window, got shape {values.shape}")
        if values.shape[0] > self.context_length:
            raise ConfigurationError(
                f"window of {values.shape[0]} exceeds the model context "
                f"{self.context_length}; chunk it first")
        valid = ~np.isnan(values)
        scale = float(np.abs(values[valid]).mean()) if valid.any() else 0.0
        if not scale > 0.0:
            scale = 1.0
        scaled = values / scale

        ids = np.searchsorted(self.boundaries, scaled, side="right")
        ids = np.clip(ids + self.n_special_tokens, 0, self.n_tokens - 1)
        ids[~valid] = self.pad_token_id
        mask = valid.astype(np.int64)

        if self.use_eos_token:
            ids = np.concatenate((ids, [self.eos_token_id]))
            mask = np.concatenate((mask, [1]))
        return ids.astype(np.int64), mask, scale


def split_into_chunks(values: np.ndarray, context_length: int) -> List[np.ndarray]:
    """Split a series into near-equal chunks that each fit the context."""
    values = np.asarray(values)
    n_chunks = max(1, math.ceil(values.shape[0] / context_length))
    return [chunk for chunk in np.array_split(values, n_chunks)]
