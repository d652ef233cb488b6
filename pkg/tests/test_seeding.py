"""Seed derivation must be stable across processes, platforms, and time."""

import numpy as np

from tsalign.seeding import derive_rng, derive_seed


def test_derive_seed_is_deterministic():
    assert derive_seed(0) == derive_seed(0)
    assert derive_seed(123, "stage", 7) == derive_seed(123, "stage", 7)


def test_derive_seed_golden_values():
    # Frozen outputs: a change here silently breaks every stored artifact.
    assert derive_seed(0) == 4066689987807800415
    assert derive_seed(0, "anonymize-noise") == 11533607828305594617
    assert derive_seed(90210, "projection") == 7711208094356993685


def test_token_order_and_identity_matter():
    assert derive_seed(1, "a", "b") != derive_seed(1, "b", "a")
    assert derive_seed(1, "ab") != derive_seed(1, "a", "b")
    assert derive_seed(1) != derive_seed(2)


def test_numeric_tokens_match_string_form():
    # Tokens are canonicalized through str(), so 7 and "7" are one stream.
    assert derive_seed(5, 7) == derive_seed(5, "7")


def test_derive_rng_streams_are_independent():
    a = derive_rng(42, "x").normal(size=8)
    b = derive_rng(42, "y").normal(size=8)
    a2 = derive_rng(42, "x").normal(size=8)
    assert np.array_equal(a, a2)
    assert not np.array_equal(a, b)
