"""Degrade clinical patches into anonymized consumer-style streams.

A patient identifier is trained on clean embeddings, then each patch is
pushed through smoothing, rescaling, masked dropouts, and a noise loop
that keeps injecting (increasingly strong) noise until the identifier's
confidence in the true patient drops below half its clean value.
"""

import numpy as np

from tsalign import RunConfig
from tsalign.cohortgen import generate_cohort
from tsalign.encoder import EncoderSpec, build_encoder, embed_patches
from tsalign.identifier import top1_accuracy, train_identifier
from tsalign.simulator import make_patient_scorer, simulate_cohort

config = RunConfig(n_patients=8, patches_per_patient=4, patch_days=2,
                   d_embed=64, d_align=32)
patches = generate_cohort(8, 4, config, seed=5)

spec = EncoderSpec(kind="surrogate", d_embed=64, surrogate_seed=config.surrogate_seed)
encoder = build_encoder(spec, config.patch_length)
clean = embed_patches(encoder, patches)

identifier = train_identifier(clean, seed=5)
print(f"identifier trained on {len(clean)} clean embeddings, "
      f"held-out top-1 {identifier.training_report['holdout_accuracy']:.2f}")
print()

scorer = make_patient_scorer(identifier, encoder)
targets, traces = simulate_cohort(patches, scorer, config, seed=5)

# per-patch anonymization traces: score before, score after, noise steps
print(f"{'patch':<10} {'s_base':>7} {'final':>7} {'iters':>5}  noise schedule")
for tr in traces[:8]:
    a = tr.anonymization
    scales = ", ".join(f"{s:.2f}" for s in a.noise_scales[:4])
    more = " ..." if len(a.noise_scales) > 4 else ""
    print(f"{tr.patch_id:<10} {a.s_base:>7.3f} {a.final_score:>7.3f} "
          f"{a.iterations_used:>5}  [{scales}{more}]")
print()

reached = sum(t.anonymization.final_score <= 0.5 * t.anonymization.s_base
              for t in traces)
print(f"{reached}/{len(traces)} patches pushed below half their clean score")

# the identifier should now do much worse on the degraded copies
degraded = embed_patches(encoder, targets)
acc_clean = top1_accuracy(identifier, clean)
acc_sim = top1_accuracy(identifier, degraded)
print(f"identifier top-1: {acc_clean:.2f} on clean patches, "
      f"{acc_sim:.2f} on simulated consumer patches")

# the signal itself is visibly transformed
before, after = patches[0].values, targets[0].values
print()
print(f"patch {patches[0].patch_id}: mean {before.mean():.1f} -> {after.mean():.1f}, "
      f"zero-fraction {np.mean(before == 0):.2f} -> {np.mean(after == 0):.2f}")
