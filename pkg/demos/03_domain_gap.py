"""Measure how far apart the two embedding spaces sit before alignment.

Clean clinical patches and their degraded consumer-style counterparts are
embedded with the same frozen encoder. Three views of the same question:
can you tell the domains apart from the embeddings alone?
"""

import numpy as np

from tsalign import RunConfig, vectors_matrix
from tsalign.cohortgen import generate_cohort
from tsalign.encoder import EncoderSpec, build_encoder, embed_patches
from tsalign.identifier import train_identifier
from tsalign.metrics import (
    ari_two_means,
    domain_probe_auc,
    mixing_entropy,
    pca_project_2d,
)
from tsalign.simulator import make_patient_scorer, simulate_cohort

config = RunConfig(n_patients=10, patches_per_patient=4, patch_days=2,
                   d_embed=64, d_align=32)
patches = generate_cohort(10, 4, config, seed=6)

spec = EncoderSpec(kind="surrogate", d_embed=64, surrogate_seed=config.surrogate_seed)
encoder = build_encoder(spec, config.patch_length)
identifier = train_identifier(embed_patches(encoder, patches), seed=6)
targets, _ = simulate_cohort(patches, make_patient_scorer(identifier, encoder),
                             config, seed=6)

source = embed_patches(encoder, patches)
target = embed_patches(encoder, targets)
records = source + target
print(f"{len(source)} source + {len(target)} target embeddings, "
      f"dim {source[0].vector.shape[0]}")
print()

# 1. mixing entropy: how domain-mixed is each embedding's neighborhood?
#    0 means every neighbor shares your domain, 1 means a coin-flip mix.
entropy = mixing_entropy(records, k=10)
print(f"k-NN mixing entropy (k=10): {entropy:.3f}  (0 = fully separated)")

# 2. cluster agreement: does a blind 2-means rediscover the domain split?
ari = ari_two_means(records, seed=6)
print(f"2-means vs domain ARI:      {ari:.3f}  (1 = clusters ARE the domains)")

# 3. a logistic probe trained to classify the domain directly
auc = domain_probe_auc(records, seed=6)
print(f"domain probe ROC-AUC:       {auc:.3f}  (0.5 = indistinguishable)")
print()

# the gap is also visible in plain coordinate statistics
Xs, Xt = vectors_matrix(source), vectors_matrix(target)
gap = np.linalg.norm(Xs.mean(axis=0) - Xt.mean(axis=0))
print(f"distance between domain centroids: {gap:.2f}")

# and in a 2D projection (first two principal components)
coords, _ = pca_project_2d(records)
n_s = len(source)
print(f"PC1 range, source: [{coords[:n_s, 0].min():+.2f}, {coords[:n_s, 0].max():+.2f}]")
print(f"PC1 range, target: [{coords[n_s:, 0].min():+.2f}, {coords[n_s:, 0].max():+.2f}]")
