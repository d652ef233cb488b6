"""Adversarial adapter training for cross-domain label transfer.

A small adapter network maps frozen encoder embeddings into a shared
aligned space. A discriminator tries to tell source from target in that
space; the adapter is trained to fool it (least-squares GAN objective)
while a task classifier learns weekly GA bins on the source side only.
Target labels never enter the training path: they arrive sealed and the
trainer refuses plain integers on target records.
"""

from __future__ import annotations

import io
import os
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .datamodel import (
    AlignedEmbedding,
    Domain,
    EmbeddingRecord,
    GABinning,
    RunConfig,
    SealedLabel,
    vectors_matrix,
)
from .errors import (
    ConfigurationError,
    GuardViolationError,
    NumericError,
    ShapeError,
    StateError,
)
from .fileio import atomic_write_text
from .neuralnet import (
    Network,
    adam_step,
    backward,
    cross_entropy_softmax,
    forward,
    init_adam,
    init_network,
    load_network,
    mse,
    save_network,
)
from .seeding import derive_rng, derive_seed

ADAPTER_HIDDEN = 256
DISC_HIDDEN = 64
CLASSIFIER_HIDDEN = 64

# Momentum damping for the two adversarial players. With the default 0.9 the
# adapter/discriminator pair locks into a coherent chase (every step amplifies
# the last) and the shared space drifts without the distributions ever
# overlapping. A short first-moment memory keeps the two players honest.
ADVERSARIAL_BETA1 = 0.5


@dataclass
class AlignmentModel:
    adapter: Network
    discriminator: Network
    task_classifier: Network
    binning: GABinning
    lambda_adv: float
    lr_adapter: float
    lr_discriminator: float
    decode: str = "argmax"
    baseline: bool = False
    # one row per epoch: (classification, adversarial, discriminator) losses
    history: Tuple[Tuple[float, float, float], ...] = ()

    def __post_init__(self):
        d_align = self.adapter.layers[-1].weights.shape[1]
        if self.discriminator.layers[0].weights.shape[0] != d_align:
            raise ConfigurationError("discriminator input dim != adapter output dim")
        if self.task_classifier.layers[0].weights.shape[0] != d_align:
            raise ConfigurationError("classifier input dim != adapter output dim")
        if self.task_classifier.layers[-1].weights.shape[1] != self.binning.n_bins:
            raise ConfigurationError("classifier output dim != number of GA bins")

    @property
    def d_align(self) -> int:
        return self.adapter.layers[-1].weights.shape[1]


def build_networks(config: RunConfig, seed: int):
    adapter = init_network(
        [config.d_embed, ADAPTER_HIDDEN, config.d_align], ["relu", "linear"],
        seed=derive_seed(seed, "adapter-init"))
    discriminator = init_network(
        [config.d_align, DISC_HIDDEN, 1], ["relu", "linear"],
        seed=derive_seed(seed, "discriminator-init"))
    classifier = init_network(
        [config.d_align, CLASSIFIER_HIDDEN, config.n_bins], ["relu", "linear"],
        seed=derive_seed(seed, "classifier-init"))
    return adapter, discriminator, classifier


def adapt_vectors(adapter: Network, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float32)
    out, _ = forward(adapter, X)
    return out


def adapt(adapter: Network, records: Sequence[EmbeddingRecord]) -> List[AlignedEmbedding]:
    """Map embeddings into the aligned space, carrying metadata through."""
    if not records:
        return []
    aligned_vecs = adapt_vectors(adapter, vectors_matrix(records))
    return [
        AlignedEmbedding(
            vector=vec,
            patient_id=rec.patient_id,
            domain=rec.domain,
            source_patch_id=rec.source_patch_id,
            ga_weeks=rec.ga_weeks,
        )
        for rec, vec in zip(records, aligned_vecs)
    ]


def discriminator_loss(discriminator: Network, z_source: np.ndarray,
                       z_target: np.ndarray):
    """LSGAN discriminator objective: source scored toward 1, target toward 0.

    The aligned inputs are constants here; only discriminator gradients
    are returned.
    """
    z_source = np.asarray(z_source, dtype=np.float32)
    z_target = np.asarray(z_target, dtype=np.float32)
    if z_source.shape[0] == 0 or z_target.shape[0] == 0:
        raise ConfigurationError("discriminator batches must be non-empty")

    preds_s, cache_s = forward(discriminator, z_source)
    loss_s, dpred_s = mse(preds_s, np.ones_like(preds_s))
    preds_t, cache_t = forward(discriminator, z_target)
    loss_t, dpred_t = mse(preds_t, np.zeros_like(preds_t))

    grads_s, _ = backward(discriminator, cache_s, 0.5 * dpred_s)
    grads_t, _ = backward(discriminator, cache_t, 0.5 * dpred_t)
    grads = [(gs_w + gt_w, gs_b + gt_b)
             for (gs_w, gs_b), (gt_w, gt_b) in zip(grads_s, grads_t)]
    return 0.5 * (loss_s + loss_t), grads


def adapter_loss(adapter: Network, discriminator: Network,
                 task_classifier: Network, z_source: np.ndarray,
                 source_bins: np.ndarray, z_target: np.ndarray,
                 lambda_adv: float, target_bins=None, symmetric: bool = False):
    """Joint adapter/classifier objective: source-bin cross-entropy plus
    lambda times the fooling term mse(D(adapter(z_target)), 1).

    Discriminator parameters are treated as frozen. Returns
    (total, adapter grads, classifier grads, cls loss, adv loss).
    """
    if target_bins is not None:
        raise GuardViolationError(
            "target labels must not enter the classification path")
    z_source = np.asarray(z_source, dtype=np.float32)
    z_target = np.asarray(z_target, dtype=np.float32)
    if z_source.shape[0] == 0 or z_target.shape[0] == 0:
        raise ConfigurationError("adapter batches must be non-empty")

    za_s, cache_as = forward(adapter, z_source)
    logits, cache_c = forward(task_classifier, za_s)
    l_cls, dlogits = cross_entropy_softmax(logits, source_bins)
    cls_grads, dza_s = backward(task_classifier, cache_c, dlogits)
    adapter_grads, _ = backward(adapter, cache_as, dza_s)

    za_t, cache_at = forward(adapter, z_target)
    if symmetric:
        # both domains pushed toward the 0.5 decision boundary
        preds_t, cache_dt = forward(discriminator, za_t)
        loss_t, dpred_t = mse(preds_t, np.full_like(preds_t, 0.5))
        preds_s2, cache_ds = forward(discriminator, za_s)
        loss_s2, dpred_s2 = mse(preds_s2, np.full_like(preds_s2, 0.5))
        l_adv = 0.5 * (loss_t + loss_s2)
        _, dza_t = backward(discriminator, cache_dt, dpred_t)
        _, dza_s2 = backward(discriminator, cache_ds, dpred_s2)
        gt, _ = backward(adapter, cache_at,
                         (lambda_adv * 0.5 * dza_t).astype(np.float32))
        gs2, _ = backward(adapter, cache_as,
                          (lambda_adv * 0.5 * dza_s2).astype(np.float32))
        adv_grads = [(a_w + b_w, a_b + b_b)
                     for (a_w, a_b), (b_w, b_b) in zip(gt, gs2)]
    else:
        preds_t, cache_d = forward(discriminator, za_t)
        l_adv, dpred_t = mse(preds_t, np.ones_like(preds_t))
        _, dza_t = backward(discriminator, cache_d, dpred_t)
        adv_grads, _ = backward(adapter, cache_at,
                                (lambda_adv * dza_t).astype(np.float32))

    adapter_grads = [(g_w + a_w, g_b + a_b)
                     for (g_w, g_b), (a_w, a_b) in zip(adapter_grads, adv_grads)]
    total = float(l_cls + lambda_adv * l_adv)
    return total, adapter_grads, cls_grads, float(l_cls), float(l_adv)


def _training_arrays(source_records, target_records, binning: GABinning):
    for rec in source_records:
        if not isinstance(rec.ga_weeks, (int, np.integer)):
            raise ConfigurationError(
                f"source record {rec.source_patch_id} lacks a plain GA label")
    for rec in target_records:
        if isinstance(rec.ga_weeks, (int, np.integer)):
            raise GuardViolationError(
                f"target record {rec.source_patch_id} carries an unsealed GA "
                f"label; target labels may only be read by evaluation code")
    z_s = vectors_matrix(source_records)
    z_t = vectors_matrix(target_records)
    bins = np.array([binning.week_to_bin(int(rec.ga_weeks))
                     for rec in source_records], dtype=np.int64)
    return z_s, bins, z_t


def train(source_records: Sequence[EmbeddingRecord],
          target_records: Sequence[EmbeddingRecord],
          config: RunConfig, seed: Optional[int] = None,
          baseline: bool = False) -> AlignmentModel:
    """Alternating LSGAN game: one discriminator step then one
    adapter+classifier step per batch. Baseline mode trains the classifier
    alone (lambda 0, discriminator untouched).
    """
    if seed is None:
        seed = config.seed
    binning = config.binning
    z_s, bins_s, z_t = _training_arrays(source_records, target_records, binning)
    if z_s.shape[1] != config.d_embed or z_t.shape[1] != config.d_embed:
        raise ShapeError(
            f"embeddings are {z_s.shape[1]}-d, config expects {config.d_embed}")

    adapter, discriminator, classifier = build_networks(config, seed)
    disc_init_bytes = discriminator.param_bytes()
    lr_a = config.lr_adapter
    lr_d = config.lr_discriminator_effective
    opt_adapter = init_adam(adapter, lr=lr_a, beta1=ADVERSARIAL_BETA1)
    opt_classifier = init_adam(classifier, lr=lr_a)
    opt_disc = init_adam(discriminator, lr=lr_d, beta1=ADVERSARIAL_BETA1)

    n_s, n_t = z_s.shape[0], z_t.shape[0]
    batch = min(config.batch_size, n_s)
    n_batches = (n_s + batch - 1) // batch
    total_steps = config.epochs * n_batches
    warmup_steps = max(1, int(np.ceil(0.1 * total_steps)))

    history = []
    checkpoint = None
    step = 0
    for epoch in range(config.epochs):
        perm_s = derive_rng(seed, "align-epoch", epoch, "source").permutation(n_s)
        perm_t = derive_rng(seed, "align-epoch", epoch, "target").permutation(n_t)
        sums = np.zeros(3)
        for b in range(n_batches):
            idx_s = perm_s[b * batch:(b + 1) * batch]
            idx_t = np.take(perm_t, np.arange(b * batch, b * batch + len(idx_s)),
                            mode="wrap")
            lam = 0.0 if baseline else (
                config.lambda_adv * min(1.0, (step + 1) / warmup_steps))
            step += 1

            l_disc = 0.0
            if not baseline:
                za_s = adapt_vectors(adapter, z_s[idx_s])
                za_t = adapt_vectors(adapter, z_t[idx_t])
                frozen = adapter.param_bytes() + classifier.param_bytes()
                l_disc, d_grads = discriminator_loss(discriminator, za_s, za_t)
                adam_step(opt_disc, discriminator, d_grads)
                if adapter.param_bytes() + classifier.param_bytes() != frozen:
                    raise StateError(
                        "adapter/classifier changed during a discriminator step")

            if baseline:
                za_s, cache_a = forward(adapter, z_s[idx_s])
                logits, cache_c = forward(classifier, za_s)
                l_cls, dlogits = cross_entropy_softmax(logits, bins_s[idx_s])
                cls_grads, dza = backward(classifier, cache_c, dlogits)
                a_grads, _ = backward(adapter, cache_a, dza)
                l_adv = 0.0
            else:
                frozen_d = discriminator.param_bytes()
                _, a_grads, cls_grads, l_cls, l_adv = adapter_loss(
                    adapter, discriminator, classifier, z_s[idx_s],
                    bins_s[idx_s], z_t[idx_t], lam,
                    symmetric=config.symmetric_adversary)
            if not np.isfinite(l_cls + l_adv + l_disc):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {b} "
                    f"(cls={l_cls}, adv={l_adv}, disc={l_disc}); last good "
                    f"checkpoint from epoch {epoch - 1}"
                ) from _attach_checkpoint(checkpoint)
            adam_step(opt_adapter, adapter, a_grads)
            adam_step(opt_classifier, classifier, cls_grads)
            if not baseline and discriminator.param_bytes() != frozen_d:
                raise StateError("discriminator changed during an adapter step")
            sums += (l_cls, l_adv, l_disc)
        history.append(tuple((sums / n_batches).tolist()))
        checkpoint = (adapter.copy(), discriminator.copy(), classifier.copy())

    if baseline and discriminator.param_bytes() != disc_init_bytes:
        raise StateError("baseline mode must leave the discriminator untouched")

    return AlignmentModel(
        adapter=adapter,
        discriminator=discriminator,
        task_classifier=classifier,
        binning=binning,
        lambda_adv=0.0 if baseline else config.lambda_adv,
        lr_adapter=lr_a,
        lr_discriminator=lr_d,
        decode=config.decode,
        baseline=baseline,
        history=tuple(history),
    )


def _attach_checkpoint(checkpoint):
    if checkpoint is None:
        return None
    err = StateError("last good checkpoint attached")
    err.checkpoint = checkpoint
    return err


def predict_ga(model: AlignmentModel, records: Sequence[EmbeddingRecord]) -> np.ndarray:
    """Predicted GA in weeks for each record, via the classifier over the
    aligned space. Identical path for source and target."""
    if not records:
        return np.zeros(0)
    za = adapt_vectors(model.adapter, vectors_matrix(records))
    logits, _ = forward(model.task_classifier, za)
    weeks = np.array([model.binning.bin_to_week(b)
                      for b in range(model.binning.n_bins)], dtype=np.float64)
    if model.decode == "expected":
        shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        return probs @ weeks
    return weeks[np.argmax(logits, axis=1)]


def discriminator_accuracy(model: AlignmentModel, source_records,
                           target_records) -> float:
    """Fraction of held-out aligned embeddings the discriminator gets
    right with a 0.5 threshold. Near 0.5 means confusion."""
    za_s = adapt_vectors(model.adapter, vectors_matrix(source_records))
    za_t = adapt_vectors(model.adapter, vectors_matrix(target_records))
    pred_s, _ = forward(model.discriminator, za_s)
    pred_t, _ = forward(model.discriminator, za_t)
    hits = float((pred_s[:, 0] >= 0.5).sum() + (pred_t[:, 0] < 0.5).sum())
    return hits / (len(source_records) + len(target_records))


# ---------------------------------------------------------------------------
# Persistence: three network files plus a manifest
# ---------------------------------------------------------------------------

_ADAPTER_FILE = "adapter.tsnn"
_DISC_FILE = "discriminator.tsnn"
_CLASSIFIER_FILE = "classifier.tsnn"
_MANIFEST_FILE = "alignment.txt"


def save_alignment(model: AlignmentModel, dir_path: str) -> None:
    os.makedirs(dir_path, exist_ok=True)
    save_network(model.adapter, os.path.join(dir_path, _ADAPTER_FILE))
    save_network(model.discriminator, os.path.join(dir_path, _DISC_FILE))
    save_network(model.task_classifier, os.path.join(dir_path, _CLASSIFIER_FILE))
    buf = io.StringIO()
    buf.write(f"lambda_adv={model.lambda_adv}\n")
    buf.write(f"lr_adapter={model.lr_adapter}\n")
    buf.write(f"lr_discriminator={model.lr_discriminator}\n")
    buf.write(f"lr_ratio={model.lr_discriminator / model.lr_adapter}\n")
    buf.write(f"decode={model.decode}\n")
    buf.write(f"baseline={int(model.baseline)}\n")
    buf.write(f"bin_min={model.binning.bin_min}\n")
    buf.write(f"n_bins={model.binning.n_bins}\n")
    buf.write("history=epoch,l_cls,l_adv,l_disc\n")
    for e, (l_cls, l_adv, l_disc) in enumerate(model.history):
        buf.write(f"{e},{l_cls:.8f},{l_adv:.8f},{l_disc:.8f}\n")
    atomic_write_text(os.path.join(dir_path, _MANIFEST_FILE), buf.getvalue())


def load_alignment(dir_path: str) -> AlignmentModel:
    adapter = load_network(os.path.join(dir_path, _ADAPTER_FILE))
    discriminator = load_network(os.path.join(dir_path, _DISC_FILE))
    classifier = load_network(os.path.join(dir_path, _CLASSIFIER_FILE))
    fields = {}
    history = []
    in_history = False
    with open(os.path.join(dir_path, _MANIFEST_FILE), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if in_history:
                parts = line.split(",")
                history.append(tuple(float(p) for p in parts[1:4]))
                continue
            key, _, value = line.partition("=")
            if key == "history":
                in_history = True
                continue
            fields[key] = value
    return AlignmentModel(
        adapter=adapter,
        discriminator=discriminator,
        task_classifier=classifier,
        binning=GABinning(bin_min=int(fields["bin_min"]),
                          n_bins=int(fields["n_bins"])),
        lambda_adv=float(fields["lambda_adv"]),
        lr_adapter=float(fields["lr_adapter"]),
        lr_discriminator=float(fields["lr_discriminator"]),
        decode=fields.get("decode", "argmax"),
        baseline=bool(int(fields.get("baseline", "0"))),
        history=tuple(history),
    )
