"""Evaluation suite: GA MAE, k-NN domain-mixing entropy, 2-means ARI,
domain probe AUC, and 2D PCA export.

All procedures are deterministic given their seed and pinned down to the
tie-breaking rule, because report files must be byte-reproducible. Each
nontrivial metric has an exhaustive/brute-force twin on the test side.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .datamodel import Domain, reveal_ga, vectors_matrix
from .errors import ConfigurationError, DegenerateDataError
from .fileio import atomic_write_text
from .neuralnet import (
    adam_step,
    backward,
    cross_entropy_softmax,
    forward,
    init_adam,
    init_network,
    softmax,
)
from .seeding import derive_rng


def mae_weeks(predictions, truths) -> float:
    """Mean absolute error in weeks."""
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape or predictions.size == 0:
        raise ConfigurationError(
            f"predictions {predictions.shape} and truths {truths.shape} must "
            f"be equal-length and non-empty")
    return float(np.mean(np.abs(predictions - truths)))


def _binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p))


def _source_mask(records) -> np.ndarray:
    return np.array([r.domain is Domain.SOURCE for r in records], dtype=bool)


def mixing_entropy_arrays(X: np.ndarray, is_source: np.ndarray, k: int) -> float:
    """Mean binary entropy of the domain mix in each point's k-NN set.

    Euclidean distances, self excluded, distance ties broken by index.
    1.0 means every neighborhood is perfectly balanced.
    """
    X = np.asarray(X, dtype=np.float64)
    is_source = np.asarray(is_source, dtype=bool)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ConfigurationError(f"need 1 <= k < n, got k={k}, n={n}")
    if is_source.all() or not is_source.any():
        warnings.warn("mixing_entropy on a single-domain input; returning 0")
        return 0.0
    total = 0.0
    for i in range(n):
        d2 = ((X - X[i]) ** 2).sum(axis=1)
        order = np.argsort(d2, kind="stable")
        neighbors = order[order != i][:k]
        p = float(is_source[neighbors].mean())
        total += _binary_entropy(p)
    return total / n


def mixing_entropy(records, k: int = 20) -> float:
    return mixing_entropy_arrays(vectors_matrix(records), _source_mask(records), k)


# ---------------------------------------------------------------------------
# 2-means + adjusted Rand index
# ---------------------------------------------------------------------------

def _comb2(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    return float((counts * (counts - 1.0) / 2.0).sum())


def ari_score(labels_a, labels_b) -> float:
    """Adjusted Rand index via the contingency-table formula.

    Convention: 0.0 when the adjusted denominator vanishes (both partitions
    trivial), matching the pair-counting oracle used in the tests.
    """
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    if labels_a.shape != labels_b.shape or labels_a.ndim != 1:
        raise ConfigurationError("label vectors must be equal-length 1-D")
    n = labels_a.shape[0]
    _, inv_a = np.unique(labels_a, return_inverse=True)
    _, inv_b = np.unique(labels_b, return_inverse=True)
    contingency = np.zeros((inv_a.max() + 1, inv_b.max() + 1))
    np.add.at(contingency, (inv_a, inv_b), 1.0)

    sum_cells = _comb2(contingency.ravel())
    sum_rows = _comb2(contingency.sum(axis=1))
    sum_cols = _comb2(contingency.sum(axis=0))
    pairs = n * (n - 1.0) / 2.0
    expected = sum_rows * sum_cols / pairs if pairs else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    denom = max_index - expected
    if denom == 0.0:
        return 0.0
    return float((sum_cells - expected) / denom)


def two_means(X: np.ndarray, seed: int, restarts: int = 10,
              max_iter: int = 100) -> np.ndarray:
    """Lloyd's 2-means: seeded restarts, best inertia, empty-cluster reseed
    to the point farthest from its assigned center."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    best_labels, best_inertia = None, np.inf
    for r in range(restarts):
        rng = derive_rng(seed, "two-means", r)
        centers = X[rng.choice(n, size=2, replace=False)].copy()
        labels = np.zeros(n, dtype=int)
        for _ in range(max_iter):
            d0 = ((X - centers[0]) ** 2).sum(axis=1)
            d1 = ((X - centers[1]) ** 2).sum(axis=1)
            new_labels = (d1 < d0).astype(int)
            for j in (0, 1):
                if not np.any(new_labels == j):
                    dist_own = np.where(new_labels == 1, d1, d0)
                    far = int(np.argmax(dist_own))
                    centers[j] = X[far]
                    d0 = ((X - centers[0]) ** 2).sum(axis=1)
                    d1 = ((X - centers[1]) ** 2).sum(axis=1)
                    new_labels = (d1 < d0).astype(int)
            if np.array_equal(new_labels, labels):
                labels = new_labels
                break
            labels = new_labels
            for j in (0, 1):
                centers[j] = X[labels == j].mean(axis=0)
        d0 = ((X - centers[0]) ** 2).sum(axis=1)
        d1 = ((X - centers[1]) ** 2).sum(axis=1)
        inertia = float(np.where(labels == 1, d1, d0).sum())
        if inertia < best_inertia:
            best_inertia, best_labels = inertia, labels
    return best_labels


def ari_two_means(records, seed: int = 0) -> float:
    """ARI between a 2-means clustering of the vectors and the domain labels."""
    X = vectors_matrix(records).astype(np.float64)
    is_source = _source_mask(records)
    if X.shape[0] < 4:
        raise ConfigurationError(f"need >= 4 points, got {X.shape[0]}")
    if is_source.all() or not is_source.any():
        raise ConfigurationError("both domains must be present")
    if np.allclose(X, X[0]):
        warnings.warn("all embeddings identical; ARI defined as 0")
        return 0.0
    labels = two_means(X, seed)
    return ari_score(labels, is_source.astype(int))


# ---------------------------------------------------------------------------
# Domain probe
# ---------------------------------------------------------------------------

def domain_probe_auc(records, seed: int = 0, epochs: int = 200) -> float:
    """Logistic probe fit on half the points; ROC-AUC on the held-out half."""
    X = vectors_matrix(records).astype(np.float64)
    y = _source_mask(records).astype(int)
    if y.all() or not y.any():
        raise ConfigurationError("both domains must be present")

    train_idx, eval_idx = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            raise ConfigurationError(
                f"domain class {cls} has {len(idx)} points; need >= 2")
        perm = derive_rng(seed, "probe-split", cls).permutation(len(idx))
        half = (len(idx) + 1) // 2
        train_idx.extend(idx[perm[:half]])
        eval_idx.extend(idx[perm[half:]])
    train_idx = np.array(sorted(train_idx))
    eval_idx = np.array(sorted(eval_idx))

    mu = X[train_idx].mean(axis=0)
    sd = X[train_idx].std(axis=0)
    sd[sd < 1e-12] = 1.0
    Z = ((X - mu) / sd).astype(np.float32)

    net = init_network([X.shape[1], 2], ["linear"],
                       seed=derive_rng(seed, "probe-init").integers(2**31))
    opt = init_adam(net, lr=0.05)
    for _ in range(epochs):
        logits, cache = forward(net, Z[train_idx])
        _, dlogits = cross_entropy_softmax(logits, y[train_idx])
        grads, _ = backward(net, cache, dlogits)
        adam_step(opt, net, grads)

    logits, _ = forward(net, Z[eval_idx])
    scores = softmax(logits)[:, 1]
    return auc_from_scores(scores, y[eval_idx])


def auc_from_scores(scores, labels) -> float:
    """Rank-based ROC-AUC (Mann-Whitney), average ranks on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ConfigurationError("AUC needs both classes in the eval half")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# PCA projection
# ---------------------------------------------------------------------------

def _power_iteration(C: np.ndarray, v0: np.ndarray, max_iter: int = 1000,
                     tol: float = 1e-13):
    v = v0 / np.linalg.norm(v0)
    for _ in range(max_iter):
        w = C @ v
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            return v, 0.0
        w = w / norm
        if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < tol:
            v = w
            break
        v = w
    return v, float(v @ C @ v)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    for x in v:
        if abs(x) > 1e-9:
            return v if x > 0 else -v
    return v


def pca_project_2d(records):
    """Top-2 principal components by power iteration on the centered
    covariance. Returns ((n, 2) coordinates, (var1, var2))."""
    X = vectors_matrix(records).astype(np.float64)
    n, d = X.shape
    if n < 3:
        raise ConfigurationError(f"need >= 3 points for a 2-D projection, got {n}")
    Xc = X - X.mean(axis=0)
    if not np.any(np.abs(Xc) > 1e-12):
        raise DegenerateDataError("zero-variance input has no principal axes")
    C = (Xc.T @ Xc) / (n - 1)
    v0 = 1.0 + 1e-3 * np.arange(d) / max(d - 1, 1)
    v1, var1 = _power_iteration(C, v0)
    C2 = C - var1 * np.outer(v1, v1)
    v2, var2 = _power_iteration(C2, v0)
    v2 = v2 - (v2 @ v1) * v1
    norm2 = np.linalg.norm(v2)
    if norm2 > 1e-12:
        v2 = v2 / norm2
    v1 = _fix_sign(v1)
    v2 = _fix_sign(v2)
    coords = Xc @ np.stack([v1, v2], axis=1)
    return coords, (var1, max(var2, 0.0))


def write_projection(path: str, records, coords: np.ndarray) -> None:
    """4-column text export (x, y, domain, ga_weeks) for external plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "domain", "ga_weeks"])
    for rec, (x, y) in zip(records, coords):
        ga = reveal_ga(rec.ga_weeks)
        writer.writerow([f"{x:.6f}", f"{y:.6f}", rec.domain.value,
                         "" if ga is None else int(ga)])
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# Report container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvaluationReport:
    mae_source_weeks: float
    mae_target_weeks: float
    mixing_entropy: float
    ari: float
    domain_probe_auc: float
    knn_k: int
    n_source: int
    n_target: int
    space: str = "aligned"  # which embedding space the mixing metrics used
    per_bin: Tuple[Tuple[int, int, float], ...] = ()  # (week, n, mae) on target

    def __post_init__(self):
        if not 0.0 <= self.mixing_entropy <= 1.0:
            raise ConfigurationError(
                f"mixing entropy {self.mixing_entropy} outside [0,1]")
        if min(self.mae_source_weeks, self.mae_target_weeks) < 0:
            raise ConfigurationError("MAE cannot be negative")


def per_bin_summary(predictions, truths) -> Tuple[Tuple[int, int, float], ...]:
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths)
    rows = []
    for week in np.unique(truths):
        sel = truths == week
        rows.append((int(week), int(sel.sum()),
                     float(np.mean(np.abs(predictions[sel] - week)))))
    return tuple(rows)


def report_text(report: EvaluationReport) -> str:
    lines = [
        "metric                 value",
        "---------------------  ----------",
        f"space                  {report.space}",
        f"mae_source_weeks       {report.mae_source_weeks:.6f}",
        f"mae_target_weeks       {report.mae_target_weeks:.6f}",
        f"mixing_entropy         {report.mixing_entropy:.6f}",
        f"ari                    {report.ari:.6f}",
        f"domain_probe_auc       {report.domain_probe_auc:.6f}",
        f"knn_k                  {report.knn_k}",
        f"n_source               {report.n_source}",
        f"n_target               {report.n_target}",
    ]
    if report.per_bin:
        lines.append("")
        lines.append("target per-bin:  week  n  mae_weeks")
        for week, n, mae in report.per_bin:
            lines.append(f"                 {week:4d}  {n:3d}  {mae:.6f}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "value"])
    writer.writerow(["space", report.space])
    writer.writerow(["mae_source_weeks", f"{report.mae_source_weeks:.6f}"])
    writer.writerow(["mae_target_weeks", f"{report.mae_target_weeks:.6f}"])
    writer.writerow(["mixing_entropy", f"{report.mixing_entropy:.6f}"])
    writer.writerow(["ari", f"{report.ari:.6f}"])
    writer.writerow(["domain_probe_auc", f"{report.domain_probe_auc:.6f}"])
    writer.writerow(["knn_k", report.knn_k])
    writer.writerow(["n_source", report.n_source])
    writer.writerow(["n_target", report.n_target])
    for week, n, mae in report.per_bin:
        writer.writerow([f"bin_{week}", f"{n};{mae:.6f}"])
    return buf.getvalue()


def write_report(report: EvaluationReport, txt_path: str, csv_path: str) -> None:
    atomic_write_text(txt_path, report_text(report))
    atomic_write_text(csv_path, report_csv(report))
