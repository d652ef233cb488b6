"""Patient-identification scorer: softmax classifier over patient identities.

Trained on source-domain embeddings; its confidence in the true patient is
the anonymization score that drives the simulator's noise loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .datamodel import EmbeddingRecord, vectors_matrix
from .errors import ConfigurationError, IdentityError, ShapeError
from .neuralnet import (
    Network,
    adam_step,
    backward,
    cross_entropy_softmax,
    forward,
    init_adam,
    init_network,
    load_network,
    save_network,
    softmax,
)
from .seeding import derive_rng

HIDDEN_UNITS = 256


@dataclass
class IdentifierModel:
    label_set: Tuple[str, ...]
    network: Network
    training_report: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self._index = {p: i for i, p in enumerate(self.label_set)}

    @property
    def n_patients(self) -> int:
        return len(self.label_set)

    def label_index(self, patient_id: str) -> int:
        try:
            return self._index[patient_id]
        except KeyError:
            raise IdentityError(
                f"patient id {patient_id!r} not in identifier label set") from None

    def predict_proba(self, vector: np.ndarray) -> np.ndarray:
        """Probability vector over the label set for one embedding."""
        vector = np.asarray(vector)
        if vector.ndim != 1 or vector.shape[0] != self.network.in_dim:
            raise ShapeError(
                f"embedding shape {vector.shape} does not match identifier "
                f"input dim {self.network.in_dim}")
        logits, _ = forward(self.network, vector[None, :].astype(np.float32))
        return softmax(logits)[0]

    def predict_proba_batch(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] != self.network.in_dim:
            raise ShapeError(
                f"batch shape {matrix.shape} does not match identifier "
                f"input dim {self.network.in_dim}")
        logits, _ = forward(self.network, matrix)
        return softmax(logits)


def train_identifier(source_embeddings: Sequence[EmbeddingRecord], seed: int,
                     lr: float = 1e-3, batch_size: int = 64,
                     max_epochs: int = 200, loss_tol: float = 0.01,
                     holdout_fraction: float = 0.25) -> IdentifierModel:
    """Train the scorer with a patch-level holdout inside each patient.

    Identity is a per-patient property, so unlike the task split the holdout
    keeps every patient in training and holds out some of their patches.
    """
    by_patient: Dict[str, List[int]] = {}
    for i, rec in enumerate(source_embeddings):
        by_patient.setdefault(rec.patient_id, []).append(i)
    if len(by_patient) < 2:
        raise ConfigurationError(
            f"identifier needs >= 2 patients, got {len(by_patient)}")
    for pid, idxs in by_patient.items():
        if len(idxs) < 2:
            raise ConfigurationError(
                f"identifier needs >= 2 patches per patient; {pid!r} has "
                f"{len(idxs)}")

    label_set = tuple(sorted(by_patient))
    label_of = {p: i for i, p in enumerate(label_set)}
    X = vectors_matrix(source_embeddings)
    y = np.array([label_of[r.patient_id] for r in source_embeddings])

    train_idx, hold_idx = [], []
    for pid in label_set:
        idxs = np.array(by_patient[pid])
        perm = derive_rng(seed, "identifier-holdout", pid).permutation(len(idxs))
        n_hold = max(1, int(round(holdout_fraction * len(idxs))))
        hold_idx.extend(idxs[perm[:n_hold]])
        train_idx.extend(idxs[perm[n_hold:]])
    train_idx = np.array(sorted(train_idx))
    hold_idx = np.array(sorted(hold_idx))

    net = init_network([X.shape[1], HIDDEN_UNITS, len(label_set)],
                       ["relu", "linear"], seed=derive_rng(seed, "identifier-init").integers(2**31))
    opt = init_adam(net, lr=lr)
    epochs_run = 0
    for epoch in range(max_epochs):
        perm = derive_rng(seed, "identifier-epoch", epoch).permutation(len(train_idx))
        order = train_idx[perm]
        losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            logits, cache = forward(net, X[batch])
            loss, dlogits = cross_entropy_softmax(logits, y[batch])
            grads, _ = backward(net, cache, dlogits)
            adam_step(opt, net, grads)
            losses.append(loss)
        epochs_run = epoch + 1
        if float(np.mean(losses)) < loss_tol:
            break

    logits, _ = forward(net, X[hold_idx])
    holdout_acc = float(np.mean(np.argmax(logits, axis=1) == y[hold_idx]))
    model = IdentifierModel(
        label_set=label_set, network=net,
        training_report={
            "holdout_accuracy": holdout_acc,
            "n_train": int(len(train_idx)),
            "n_holdout": int(len(hold_idx)),
            "epochs_run": epochs_run,
        })
    return model


def top1_accuracy(model: IdentifierModel,
                  embeddings: Sequence[EmbeddingRecord]) -> float:
    """Fraction of embeddings whose argmax identity matches the true patient."""
    if not embeddings:
        raise ConfigurationError("no embeddings to score")
    probs = model.predict_proba_batch(vectors_matrix(embeddings))
    truth = np.array([model.label_index(r.patient_id) for r in embeddings])
    return float(np.mean(np.argmax(probs, axis=1) == truth))


def save_identifier(model: IdentifierModel, network_path: str,
                    labels_path: str) -> None:
    from .fileio import atomic_write_text

    save_network(model.network, network_path)
    atomic_write_text(labels_path, "".join(f"{p}\n" for p in model.label_set))


def load_identifier(network_path: str, labels_path: str) -> IdentifierModel:
    with open(labels_path) as fh:
        label_set = tuple(line.strip() for line in fh if line.strip())
    return IdentifierModel(label_set=label_set, network=load_network(network_path))
