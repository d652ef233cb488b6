"""Shared fixtures: a tiny random-weight encoder checkpoint and a patch
corpus written by the pipeline package this exporter feeds.

The checkpoint has real structure (T5 encoder with a chronos_config
block) but random weights and toy sizes, so the suite runs offline in
seconds. Release-criterion verdicts are echoed after the summary.
"""

import numpy as np
import pytest

_ACCEPTANCE_RESULTS = []


@pytest.fixture
def check():
    def _check(name, passed, detail):
        _ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return _check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}: {detail}")


HIDDEN_SIZE = 64
CONTEXT_LENGTH = 48
N_TOKENS = 256
PATCH_LENGTH = 120  # 2.5x the context, so every patch needs chunking


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    import torch
    from transformers import T5Config, T5EncoderModel

    path = tmp_path_factory.mktemp("checkpoint") / "tiny-t5"
    torch.manual_seed(7)
    config = T5Config(
        vocab_size=N_TOKENS, d_model=HIDDEN_SIZE, d_kv=16, d_ff=128,
        num_layers=1, num_heads=4, relative_attention_num_buckets=16,
        dropout_rate=0.0, pad_token_id=0, eos_token_id=1,
        decoder_start_token_id=0,
    )
    config.chronos_config = {
        "tokenizer_class": "MeanScaleUniformBins",
        "tokenizer_kwargs": {"low_limit": -15.0, "high_limit": 15.0},
        "context_length": CONTEXT_LENGTH,
        "n_tokens": N_TOKENS,
        "n_special_tokens": 2,
        "pad_token_id": 0,
        "eos_token_id": 1,
        "use_eos_token": True,
        "model_type": "seq2seq",
    }
    model = T5EncoderModel(config)
    model.save_pretrained(str(path))
    return str(path)


def make_values(seed, length=PATCH_LENGTH):
    rng = np.random.default_rng(seed)
    base = 40.0 + 30.0 * np.sin(np.linspace(0.0, 6.0, length))
    return np.clip(base + rng.normal(0.0, 8.0, size=length), 0.0, None)


@pytest.fixture(scope="session")
def patch_files(tmp_path_factory):
    """A small mixed-domain corpus written with the pipeline's own writer."""
    from tsalign.datamodel import TimeSeriesPatch, write_patches

    directory = tmp_path_factory.mktemp("patches")
    manifest = str(directory / "patches.csv")
    values = str(directory / "patches.tspx")
    patches = []
    for i in range(6):
        domain = "source" if i < 3 else "target"
        patches.append(TimeSeriesPatch(
            patch_id=f"p{i:02d}",
            patient_id=f"pat{i % 3}",
            domain=domain,
            values=make_values(seed=i),
            ga_weeks=28 + i if domain == "source" else None,
            patch_start_day=7 * i,
        ))
    # an exact duplicate of the first patch, for the identical-rows check
    patches.append(TimeSeriesPatch(
        patch_id="p00-copy", patient_id="pat0", domain="source",
        values=make_values(seed=0), ga_weeks=28, patch_start_day=0,
    ))
    write_patches(patches, manifest, values)
    return manifest, values
