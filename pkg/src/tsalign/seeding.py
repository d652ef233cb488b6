"""Deterministic seed derivation.

Python's builtin ``hash`` is salted per process, so every derived seed here
goes through sha256 of a canonical string instead. All randomness in the
package flows through :func:`derive_rng` so that parallel or reordered
execution cannot change outputs.
"""

import hashlib

import numpy as np


def derive_seed(base_seed: int, *tokens) -> int:
    """Map (base_seed, tokens...) to a stable 64-bit seed."""
    canon = "|".join([str(int(base_seed))] + [str(t) for t in tokens])
    digest = hashlib.sha256(canon.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(base_seed: int, *tokens) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``base_seed``."""
    return np.random.default_rng(derive_seed(base_seed, *tokens))
