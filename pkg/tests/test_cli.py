"""Command-line surface: config resolution, exit codes, artifact layout."""

import json
import os
import shutil

import numpy as np
import pytest

from tsalign.cli import (
    CONFIG_ENV_VAR,
    EXIT_BAD_CONFIG,
    EXIT_DIMENSION,
    EXIT_ERROR,
    EXIT_MISSING_FILE,
    EXIT_NONFINITE,
    Paths,
    _coerce,
    build_parser,
    load_config,
    main,
    resolve_config,
)
from tsalign.datamodel import RunConfig
from tsalign.errors import ConfigurationError
from tsalign.fileio import sha256_file


TINY_INI = """\
[cohort]
n_patients = 4
patches_per_patient = 3
patch_days = 1
eval_fraction = 0.25

[encoder]
d_embed = 16
d_align = 8

[simulate]
n_max = 8

[align]
epochs = 2
batch_size = 16

[eval]
knn_k = 3
"""


def write_ini(tmp_path, text=TINY_INI, name="config.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def test_defaults_without_file():
    assert load_config(None, {}) == RunConfig()


def test_file_values_override_defaults(tmp_path):
    config = load_config(write_ini(tmp_path), {})
    assert config.n_patients == 4
    assert config.d_embed == 16
    assert config.epochs == 2
    assert config.knn_k == 3
    assert config.seed == RunConfig().seed  # untouched fields keep defaults


def test_overrides_beat_file(tmp_path):
    config = load_config(write_ini(tmp_path), {"n_patients": 9, "seed": 77})
    assert config.n_patients == 9
    assert config.seed == 77
    assert config.d_embed == 16


def test_flag_beats_set_beats_file(tmp_path):
    ini = write_ini(tmp_path)
    args = build_parser().parse_args(
        ["gen", "--config", ini, "--set", "cohort.n_patients=6",
         "--n-patients", "5"])
    assert resolve_config(args).n_patients == 5
    args = build_parser().parse_args(
        ["gen", "--config", ini, "--set", "cohort.n_patients=6"])
    assert resolve_config(args).n_patients == 6


def test_env_var_supplies_config(tmp_path, monkeypatch):
    ini = write_ini(tmp_path)
    monkeypatch.setenv(CONFIG_ENV_VAR, ini)
    args = build_parser().parse_args(["gen"])
    assert resolve_config(args).n_patients == 4
    # an explicit --config wins over the environment
    other = write_ini(tmp_path, TINY_INI.replace("n_patients = 4",
                                                 "n_patients = 7"),
                      name="other.ini")
    args = build_parser().parse_args(["gen", "--config", other])
    assert resolve_config(args).n_patients == 7


def test_unknown_section_and_key_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(write_ini(tmp_path, "[mystery]\nx = 1\n"), {})
    with pytest.raises(ConfigurationError):
        load_config(write_ini(tmp_path, "[cohort]\nmystery = 1\n"), {})
    with pytest.raises(ConfigurationError):
        load_config(None, {"mystery": 1})
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "absent.ini"), {})


def test_set_flag_parse_errors():
    for bad in ("noequals", "nodot=3", "mystery.key=1", "run.mystery=1"):
        args = build_parser().parse_args(["gen", "--set", bad])
        with pytest.raises(ConfigurationError):
            resolve_config(args)


def test_coerce_typing():
    assert _coerce("n_patients", " 12 ") == 12
    assert _coerce("delta", "0.5") == 0.5
    assert _coerce("out_dir", "runs/x") == "runs/x"
    assert _coerce("noise_sigma_adaptive", "true") is True
    assert _coerce("noise_sigma_adaptive", "off") is False
    assert _coerce("lr_discriminator", "none") is None
    assert _coerce("lr_discriminator", "0.002") == 0.002
    for field, raw in (("n_patients", "abc"), ("delta", "x"),
                       ("noise_sigma_adaptive", "maybe")):
        with pytest.raises(ConfigurationError):
            _coerce(field, raw)


def test_version_flag():
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0


# ---------------------------------------------------------------------------
# Tiny end-to-end pipeline through the real entry point
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli-pipeline")
    ini = write_ini(tmp)
    out = str(tmp / "run")
    base = ["--config", ini, "--out-dir", out]
    for argv in (["gen"], ["train-identifier"], ["simulate"],
                 ["embed", "--which", "both"], ["align", "--baseline"],
                 ["align"], ["eval", "--model", "baseline"], ["eval"]):
        assert main(argv + base) == 0, f"stage {argv} failed"
    return out


def test_pipeline_writes_all_artifacts(pipeline_dir):
    paths = Paths(pipeline_dir)
    expected = [
        paths.source_manifest, paths.source_values,
        paths.target_manifest, paths.target_values,
        paths.traces, paths.identifier_net, paths.identifier_labels,
        paths.source_tseb, paths.target_tseb, paths.manifest,
    ]
    expected += [os.path.join(paths.model_dir(tag), name)
                 for tag in ("baseline", "aligned")
                 for name in ("adapter.tsnn", "discriminator.tsnn",
                              "classifier.tsnn", "alignment.txt")]
    expected += [paths.report(tag, space, ext)
                 for tag in ("baseline", "aligned")
                 for space in ("raw", "aligned") for ext in ("txt", "csv")]
    expected += [paths.projection(tag, space)
                 for tag in ("baseline", "aligned")
                 for space in ("raw", "aligned")]
    for path in expected:
        assert os.path.exists(path), f"missing artifact {path}"


def test_manifest_hashes_match_artifacts(pipeline_dir):
    manifest = json.load(open(Paths(pipeline_dir).manifest))
    assert manifest["config"]["n_patients"] == 4
    assert manifest["config"]["lr_ratio"] == 2.0
    stages = manifest["stages"]
    for name in ("gen", "train-identifier", "simulate", "embed-source",
                 "embed-target", "align-baseline", "align-aligned",
                 "eval-baseline", "eval-aligned"):
        assert name in stages, f"stage {name} not recorded"
        assert stages[name]["seconds"] >= 0.0
    for stage in stages.values():
        for path, digest in {**stage["inputs"], **stage["outputs"]}.items():
            assert sha256_file(path) == digest


def test_report_files_are_parseable(pipeline_dir):
    paths = Paths(pipeline_dir)
    rows = dict(
        line.split(",", 1)
        for line in open(paths.report("aligned", "aligned", "csv"))
        .read().strip().splitlines()[1:])
    assert rows["space"] == "aligned"
    assert 0.0 <= float(rows["mixing_entropy"]) <= 1.0
    assert float(rows["mae_source_weeks"]) >= 0.0
    assert int(rows["n_source"]) == 3  # one held-out patient, 3 patches
    proj = open(paths.projection("aligned", "raw")).read().splitlines()
    assert proj[0] == "x,y,domain,ga_weeks"
    assert len(proj) == 1 + 6  # 3 source + 3 target held-out patches


def test_repro_subcommand_writes_summary(tmp_path):
    ini = write_ini(tmp_path)
    out = str(tmp_path / "repro")
    assert main(["repro-fig3", "--config", ini, "--out-dir", out]) == 0
    summary = open(Paths(out).summary).read()
    assert "MAE (weeks) on held-out patients" in summary
    assert "target/source" in summary
    assert "discriminator accuracy" in summary


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------

def test_exit_missing_inputs(tmp_path):
    out = str(tmp_path / "empty")
    assert main(["simulate", "--out-dir", out]) == EXIT_MISSING_FILE
    assert main(["gen", "--config", str(tmp_path / "no.ini")]) \
        == EXIT_MISSING_FILE


def test_exit_bad_config(tmp_path):
    ini = write_ini(tmp_path, "[cohort]\nmystery = 1\n")
    assert main(["gen", "--config", ini]) == EXIT_BAD_CONFIG
    assert main(["gen", "--set", "cohort.n_patients=abc"]) == EXIT_BAD_CONFIG
    assert main(["gen", "--set", "nonsense"]) == EXIT_BAD_CONFIG


def test_exit_dimension_mismatch(pipeline_dir, tmp_path):
    # stored embeddings are 16-wide; asking for 32 must fail cleanly
    ini = write_ini(tmp_path)
    code = main(["align", "--config", ini, "--out-dir", pipeline_dir,
                 "--d-embed", "32"])
    assert code == EXIT_DIMENSION


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_nonfinite(pipeline_dir, tmp_path):
    ini = write_ini(tmp_path)
    code = main(["align", "--config", ini, "--out-dir", pipeline_dir,
                 "--set", "align.lr_adapter=1e8"])
    assert code == EXIT_NONFINITE


def test_exit_generic_pipeline_error(pipeline_dir, tmp_path):
    # corrupted patch values surface as a format error, exit code 1
    broken = str(tmp_path / "broken")
    os.makedirs(broken)
    src = Paths(pipeline_dir)
    dst = Paths(broken)
    shutil.copy(src.source_manifest, dst.source_manifest)
    raw = bytearray(open(src.source_values, "rb").read())
    raw[:4] = b"XXXX"
    open(dst.source_values, "wb").write(bytes(raw))
    assert main(["train-identifier", "--out-dir", broken]) == EXIT_ERROR
