"""Pipeline command line.

Subcommands cover each stage (gen, simulate, embed, train-identifier,
align, eval) plus ``repro-fig3`` which runs the whole experiment and
prints the 4-cell MAE comparison with before/after mixing rows.

Configuration precedence: built-in defaults < config file (INI sections)
< ``--set section.key=value`` < dedicated flags. The config file path can
also come from the TSALIGN_CONFIG environment variable. Every artifact is
written atomically and hashed into ``manifest.json``.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .align import (
    AlignmentModel,
    adapt,
    discriminator_accuracy,
    load_alignment,
    predict_ga,
    save_alignment,
    train,
)
from .cohortgen import generate_cohort
from .datamodel import (
    Domain,
    RunConfig,
    load_patches,
    reveal_ga,
    seal_target_labels,
    split_by_patient,
    write_patches,
)
from .encoder import (
    EncoderSpec,
    FileEncoder,
    build_encoder,
    embed_patches,
    load_embeddings,
    save_embeddings,
)
from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    NumericError,
    ShapeError,
    TsalignError,
)
from .fileio import atomic_write_text, sha256_file
from .identifier import load_identifier, save_identifier, train_identifier
from .metrics import (
    EvaluationReport,
    ari_two_means,
    domain_probe_auc,
    mae_weeks,
    mixing_entropy,
    pca_project_2d,
    per_bin_summary,
    write_projection,
    write_report,
)
from .seeding import derive_seed
from .simulator import make_patient_scorer, simulate_cohort

CONFIG_ENV_VAR = "TSALIGN_CONFIG"

EXIT_ERROR = 1
EXIT_MISSING_FILE = 2
EXIT_BAD_CONFIG = 3
EXIT_DIMENSION = 4
EXIT_NONFINITE = 5

_SECTIONS = {
    "run": ("seed", "out_dir"),
    "cohort": ("n_patients", "patches_per_patient", "patch_days", "bin_min",
               "n_bins", "eval_fraction"),
    "encoder": ("d_embed", "d_align", "surrogate_seed"),
    "simulate": ("delta", "n_max", "noise_sigma", "noise_sigma_adaptive",
                 "smoothing_window", "rescale_low", "rescale_high",
                 "mask_fraction", "mask_min_run", "mask_max_run"),
    "align": ("lambda_adv", "lr_adapter", "lr_discriminator", "batch_size",
              "epochs", "symmetric_adversary", "decode"),
    "eval": ("knn_k",),
}

_BOOL_FIELDS = {"noise_sigma_adaptive", "symmetric_adversary"}
_STR_FIELDS = {"out_dir", "decode"}
_FLOAT_FIELDS = {"eval_fraction", "delta", "noise_sigma", "rescale_low",
                 "rescale_high", "mask_fraction", "lambda_adv", "lr_adapter"}
_OPT_FLOAT_FIELDS = {"lr_discriminator"}


def _coerce(field: str, raw: str):
    raw = raw.strip()
    try:
        if field in _STR_FIELDS:
            return raw
        if field in _BOOL_FIELDS:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if field in _OPT_FLOAT_FIELDS:
            return None if raw.lower() == "none" else float(raw)
        if field in _FLOAT_FIELDS:
            return float(raw)
        return int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {field}: {exc}") from exc


_KNOWN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: Optional[str], overrides: Dict[str, object]) -> RunConfig:
    """Resolve the effective RunConfig from file plus overrides."""
    values: Dict[str, object] = {}
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path)
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigurationError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigurationError(
                        f"unknown key {key!r} in section [{section}]")
                values[key] = _coerce(key, raw)
    for key, val in overrides.items():
        if key not in _KNOWN_FIELDS:
            raise ConfigurationError(f"unknown config field {key!r}")
        values[key] = val
    return RunConfig(**values)


def _overrides_from_args(args) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for spec in getattr(args, "set", None) or []:
        dotted, _, raw = spec.partition("=")
        if not _ or "." not in dotted:
            raise ConfigurationError(
                f"--set expects section.key=value, got {spec!r}")
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS or key not in _SECTIONS[section]:
            raise ConfigurationError(f"unknown config entry {dotted!r}")
        out[key] = _coerce(key, raw)
    for flag in ("seed", "out_dir", "n_patients", "patches_per_patient",
                 "epochs", "delta", "d_embed", "d_align", "knn_k"):
        val = getattr(args, flag, None)
        if val is not None:
            out[flag] = val
    return out


def resolve_config(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    return load_config(path, _overrides_from_args(args))


# ---------------------------------------------------------------------------
# Artifact layout and the run manifest
# ---------------------------------------------------------------------------

class Paths:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        j = lambda name: os.path.join(out_dir, name)
        self.source_manifest = j("source_patches.csv")
        self.source_values = j("source_patches.tspx")
        self.target_manifest = j("target_patches.csv")
        self.target_values = j("target_patches.tspx")
        self.traces = j("simulation_traces.jsonl")
        self.identifier_net = j("identifier.tsnn")
        self.identifier_labels = j("identifier_labels.txt")
        self.source_tseb = j("source_embeddings.tseb")
        self.target_tseb = j("target_embeddings.tseb")
        self.manifest = j("manifest.json")
        self.summary = j("summary.txt")

    def model_dir(self, tag: str) -> str:
        return os.path.join(self.out_dir, f"align_{tag}")

    def report(self, tag: str, space: str, ext: str) -> str:
        return os.path.join(self.out_dir, f"report_{tag}_{space}.{ext}")

    def projection(self, tag: str, space: str) -> str:
        return os.path.join(self.out_dir, f"projection_{tag}_{space}.csv")


class RunManifest:
    """Json ledger of config, hashes and timings, updated per stage."""

    def __init__(self, path: str):
        self.path = path
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                self.data = json.load(fh)
        else:
            self.data = {"tool_version": __version__, "stages": {}}

    def record(self, stage: str, config: RunConfig, seconds: float,
               inputs: List[str], outputs: List[str]) -> None:
        self.data["tool_version"] = __version__
        self.data["seed"] = config.seed
        self.data["config"] = dataclasses.asdict(config)
        self.data["config"]["lr_discriminator_effective"] = (
            config.lr_discriminator_effective)
        self.data["config"]["lr_ratio"] = (
            config.lr_discriminator_effective / config.lr_adapter)
        self.data["stages"][stage] = {
            "seconds": round(seconds, 3),
            "inputs": {p: sha256_file(p) for p in inputs if os.path.exists(p)},
            "outputs": {p: sha256_file(p) for p in outputs},
        }
        atomic_write_text(self.path,
                          json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _timed(manifest: RunManifest, stage: str, config: RunConfig,
           inputs: List[str], outputs: List[str], fn):
    t0 = time.perf_counter()
    result = fn()
    manifest.record(stage, config, time.perf_counter() - t0, inputs, outputs)
    return result


# ---------------------------------------------------------------------------
# Stages (shared between individual subcommands and repro-fig3)
# ---------------------------------------------------------------------------

def _surrogate(config: RunConfig):
    spec = EncoderSpec(kind="surrogate", d_embed=config.d_embed,
                       surrogate_seed=config.surrogate_seed)
    return build_encoder(spec, config.patch_length)


def stage_gen(config: RunConfig, paths: Paths):
    os.makedirs(paths.out_dir, exist_ok=True)
    patches = generate_cohort(config.n_patients, config.patches_per_patient,
                              config, config.seed)
    write_patches(patches, paths.source_manifest, paths.source_values)
    return patches


def stage_train_identifier(config: RunConfig, paths: Paths):
    patches = load_patches(paths.source_manifest, paths.source_values)
    encoder = _surrogate(config)
    records = embed_patches(encoder, patches)
    model = train_identifier(records, seed=derive_seed(config.seed, "identifier"))
    save_identifier(model, paths.identifier_net, paths.identifier_labels)
    return model


def stage_simulate(config: RunConfig, paths: Paths):
    patches = load_patches(paths.source_manifest, paths.source_values)
    identifier = load_identifier(paths.identifier_net, paths.identifier_labels)
    scorer = make_patient_scorer(identifier, _surrogate(config))
    targets, traces = simulate_cohort(patches, scorer, config, config.seed)
    write_patches(targets, paths.target_manifest, paths.target_values)
    atomic_write_text(paths.traces,
                      "".join(t.to_json_line() + "\n" for t in traces))
    return targets, traces


def stage_embed(config: RunConfig, paths: Paths, which: str,
                from_file: Optional[str] = None):
    if which == "source":
        patches = load_patches(paths.source_manifest, paths.source_values)
        out = paths.source_tseb
    else:
        patches = load_patches(paths.target_manifest, paths.target_values)
        out = paths.target_tseb
    if from_file is not None:
        encoder = FileEncoder(from_file)
    else:
        encoder = _surrogate(config)
    records = embed_patches(encoder, patches)
    save_embeddings(records, out, metadata={
        "encoder": "file" if from_file else "surrogate",
        "surrogate_seed": config.surrogate_seed,
        "patch_days": config.patch_days,
    })
    return records


def stage_align(config: RunConfig, paths: Paths, baseline: bool):
    source = load_embeddings(paths.source_tseb, expected_dim=config.d_embed)
    target = load_embeddings(paths.target_tseb, expected_dim=config.d_embed)
    train_src, _ = split_by_patient(source, config.eval_fraction, config.seed)
    train_tgt, _ = split_by_patient(target, config.eval_fraction, config.seed)
    sealed_tgt, vault = seal_target_labels(train_tgt)
    model = train(train_src, sealed_tgt, config, seed=config.seed,
                  baseline=baseline)
    if vault.reads != 0:
        raise TsalignError(
            f"target labels were read {vault.reads} times during training")
    tag = "baseline" if baseline else "aligned"
    save_alignment(model, paths.model_dir(tag))
    return model


def stage_eval(config: RunConfig, paths: Paths, tag: str) -> Dict[str, float]:
    model = load_alignment(paths.model_dir(tag))
    source = load_embeddings(paths.source_tseb, expected_dim=config.d_embed)
    target = load_embeddings(paths.target_tseb, expected_dim=config.d_embed)
    _, eval_src = split_by_patient(source, config.eval_fraction, config.seed)
    _, eval_tgt = split_by_patient(target, config.eval_fraction, config.seed)

    preds_src = predict_ga(model, eval_src)
    truths_src = np.array([reveal_ga(r.ga_weeks) for r in eval_src], dtype=float)
    preds_tgt = predict_ga(model, eval_tgt)
    truths_tgt = np.array([reveal_ga(r.ga_weeks) for r in eval_tgt], dtype=float)
    mae_src = mae_weeks(preds_src, truths_src)
    mae_tgt = mae_weeks(preds_tgt, truths_tgt)

    held = list(eval_src) + list(eval_tgt)
    aligned = adapt(model.adapter, held)
    k = min(config.knn_k, len(held) - 1)
    numbers: Dict[str, float] = {"mae_source": mae_src, "mae_target": mae_tgt}
    for space, records in (("raw", held), ("aligned", aligned)):
        report = EvaluationReport(
            mae_source_weeks=mae_src,
            mae_target_weeks=mae_tgt,
            mixing_entropy=mixing_entropy(records, k),
            ari=ari_two_means(records, seed=derive_seed(config.seed, "ari", space)),
            domain_probe_auc=domain_probe_auc(
                records, seed=derive_seed(config.seed, "probe", space)),
            knn_k=k,
            n_source=len(eval_src),
            n_target=len(eval_tgt),
            space=space,
            per_bin=per_bin_summary(preds_tgt, truths_tgt),
        )
        write_report(report, paths.report(tag, space, "txt"),
                     paths.report(tag, space, "csv"))
        coords, _ = pca_project_2d(records)
        write_projection(paths.projection(tag, space), held, coords)
        numbers[f"entropy_{space}"] = report.mixing_entropy
        numbers[f"ari_{space}"] = report.ari
        numbers[f"auc_{space}"] = report.domain_probe_auc
    numbers["disc_accuracy"] = discriminator_accuracy(model, eval_src, eval_tgt)
    return numbers


def _mae_ratio(numbers: Dict[str, float]) -> float:
    if numbers["mae_source"] == 0.0:
        return float("inf")
    return numbers["mae_target"] / numbers["mae_source"]


def _summary_text(base: Dict[str, float], alig: Dict[str, float]) -> str:
    lines = [
        "MAE (weeks) on held-out patients",
        "model      source    target    target/source",
        "baseline   {0:8.3f}  {1:8.3f}  {2:8.3f}".format(
            base["mae_source"], base["mae_target"], _mae_ratio(base)),
        "aligned    {0:8.3f}  {1:8.3f}  {2:8.3f}".format(
            alig["mae_source"], alig["mae_target"], _mae_ratio(alig)),
        "",
        "domain mixing on held-out embeddings (aligned model)",
        "space      entropy   ari       probe_auc",
        "raw        {0:8.3f}  {1:8.3f}  {2:8.3f}".format(
            alig["entropy_raw"], alig["ari_raw"], alig["auc_raw"]),
        "aligned    {0:8.3f}  {1:8.3f}  {2:8.3f}".format(
            alig["entropy_aligned"], alig["ari_aligned"],
            alig["auc_aligned"]),
        "",
        "discriminator accuracy on held-out aligned embeddings: "
        "{0:.3f}".format(alig["disc_accuracy"]),
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_gen(args) -> None:
    config = resolve_config(args)
    paths = Paths(config.out_dir)
    manifest = RunManifest(paths.manifest)
    _timed(manifest, "gen", config, [],
           [paths.source_manifest, paths.source_values],
           lambda: stage_gen(config, paths))


def cmd_train_identifier(args) -> None:
    config = resolve_config(args)
    paths = Paths(config.out_dir)
    manifest = RunManifest(paths.manifest)
    model = _timed(manifest, "train-identifier", config,
                   [paths.source_manifest, paths.source_values],
                   [paths.identifier_net, paths.identifier_labels],
                   lambda: stage_train_identifier(config, paths))
    acc = model.training_report.get("holdout_accuracy")
    print(f"identifier holdout accuracy: {acc:.3f}")


def cmd_simulate(args) -> None:
    config = resolve_config(args)
    paths = Paths(config.out_dir)
    manifest = RunManifest(paths.manifest)
    _, traces = _timed(
        manifest, "simulate", config,
        [paths.source_manifest, paths.source_values, paths.identifier_net],
        [paths.target_manifest, paths.target_values, paths.traces],
        lambda: stage_simulate(config, paths))
    reached = sum(t.anonymization.final_score <= t.anonymization.s_thresh
                  for t in traces)
    print(f"anonymization threshold reached on {reached}/{len(traces)} patches")


def cmd_embed(args) -> None:
    config = resolve_config(args)
    paths = Paths(config.out_dir)
    manifest = RunManifest(paths.manifest)
    targets = {"source": [paths.source_tseb], "target": [paths.target_tseb],
               "both": [paths.source_tseb, paths.target_tseb]}[args.which]
    for which, out in zip(("source", "target") if args.which == "both"
                          else (args.which,), targets):
        _timed(manifest, f"embed-{which}", config,
               [paths.source_manifest if which == "source"
                else paths.target_manifest],
               [out],
               lambda w=which: stage_embed(config, paths, w, args.from_file))


def cmd_align(args) -> None:
    config = resolve_config(args)
    paths = Paths(config.out_dir)
    manifest = RunManifest(paths.manifest)
    tag = "baseline" if args.baseline else "aligned"
    model_dir = paths.model_dir(tag)
    _timed(manifest, f"align-{tag}", config,
           [paths.source_tseb, paths.target_tseb],
           [os.path.join(model_dir, n) for n in
            ("adapter.tsnn", "discriminator.tsnn", "classifier.tsnn",
             "alignment.txt")],
           lambda: stage_align(config, paths, args.baseline))


def cmd_eval(args) -> None:
    config = resolve_config(args)
    paths = Paths(config.out_dir)
    manifest = RunManifest(paths.manifest)
    tag = args.model
    outputs = [paths.report(tag, s, e) for s in ("raw", "aligned")
               for e in ("txt", "csv")]
    outputs += [paths.projection(tag, s) for s in ("raw", "aligned")]
    numbers = _timed(manifest, f"eval-{tag}", config,
                     [paths.source_tseb, paths.target_tseb],
                     outputs,
                     lambda: stage_eval(config, paths, tag))
    for key in sorted(numbers):
        print(f"{key}: {numbers[key]:.4f}")


def cmd_repro_fig3(args) -> None:
    config = resolve_config(args)
    paths = Paths(config.out_dir)
    manifest = RunManifest(paths.manifest)
    _timed(manifest, "gen", config, [],
           [paths.source_manifest, paths.source_values],
           lambda: stage_gen(config, paths))
    _timed(manifest, "train-identifier", config,
           [paths.source_values], [paths.identifier_net],
           lambda: stage_train_identifier(config, paths))
    _timed(manifest, "simulate", config, [paths.source_values],
           [paths.target_manifest, paths.target_values, paths.traces],
           lambda: stage_simulate(config, paths))
    for which, out in (("source", paths.source_tseb),
                       ("target", paths.target_tseb)):
        _timed(manifest, f"embed-{which}", config, [], [out],
               lambda w=which: stage_embed(config, paths, w))
    for baseline in (True, False):
        tag = "baseline" if baseline else "aligned"
        _timed(manifest, f"align-{tag}", config,
               [paths.source_tseb, paths.target_tseb], [],
               lambda b=baseline: stage_align(config, paths, b))
    base = _timed(manifest, "eval-baseline", config, [], [],
                  lambda: stage_eval(config, paths, "baseline"))
    alig = _timed(manifest, "eval-aligned", config, [], [],
                  lambda: stage_eval(config, paths, "aligned"))
    summary = _summary_text(base, alig)
    atomic_write_text(paths.summary, summary)
    print(summary, end="")


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsalign",
        description="cross-domain label transfer pipeline for 1-minute "
                    "activity-count series")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (or set "
                        f"{CONFIG_ENV_VAR})")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config entry; repeatable")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--n-patients", dest="n_patients", type=int)
    common.add_argument("--patches-per-patient", dest="patches_per_patient",
                        type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--delta", type=float)
    common.add_argument("--d-embed", dest="d_embed", type=int)
    common.add_argument("--d-align", dest="d_align", type=int)
    common.add_argument("--knn-k", dest="knn_k", type=int)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common],
                   help="synthesize the labeled source cohort").set_defaults(
        func=cmd_gen)
    sub.add_parser("train-identifier", parents=[common],
                   help="fit the patient re-identification scorer").set_defaults(
        func=cmd_train_identifier)
    sub.add_parser("simulate", parents=[common],
                   help="anonymize and degrade patches into the target "
                        "domain").set_defaults(func=cmd_simulate)
    p_embed = sub.add_parser("embed", parents=[common],
                             help="run the frozen encoder over patch files")
    p_embed.add_argument("--which", choices=("source", "target", "both"),
                         default="both")
    p_embed.add_argument("--from-file", dest="from_file",
                         help="reuse embeddings from an existing .tseb file "
                              "instead of the built-in encoder")
    p_embed.set_defaults(func=cmd_embed)
    p_align = sub.add_parser("align", parents=[common],
                             help="train the adversarial adapter (or the "
                                  "source-only baseline)")
    p_align.add_argument("--baseline", action="store_true",
                         help="classifier only: lambda=0, discriminator "
                              "untouched")
    p_align.set_defaults(func=cmd_align)
    p_eval = sub.add_parser("eval", parents=[common],
                            help="score a trained model on held-out patients")
    p_eval.add_argument("--model", choices=("baseline", "aligned"),
                        default="aligned")
    p_eval.set_defaults(func=cmd_eval)
    sub.add_parser("repro-fig3", parents=[common],
                   help="full pipeline: baseline vs aligned MAE table plus "
                        "mixing metrics").set_defaults(func=cmd_repro_fig3)
    return parser


def _fail(code: int, tag: str, exc: BaseException) -> int:
    message = " ".join(str(exc).split())
    print(f"error: {tag}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
        return 0
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING_FILE, "missing-file", exc)
    except NumericError as exc:
        return _fail(EXIT_NONFINITE, "non-finite-loss", exc)
    except (DimensionMismatchError, ShapeError) as exc:
        return _fail(EXIT_DIMENSION, "dimension-mismatch", exc)
    except (ConfigurationError, configparser.Error) as exc:
        return _fail(EXIT_BAD_CONFIG, "bad-config", exc)
    except TsalignError as exc:
        return _fail(EXIT_ERROR, "pipeline-error", exc)


if __name__ == "__main__":
    sys.exit(main())
