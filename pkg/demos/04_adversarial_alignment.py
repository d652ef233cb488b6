"""Close the domain gap adversarially and watch the label transfer recover.

Two models are trained on the same patient-level splits: a baseline whose
adapter only sees the source classification loss, and an adversarial one
whose adapter additionally has to fool a domain discriminator. Week-level
mean absolute error on held-out patients tells the story.
"""

from tsalign import RunConfig, reveal_ga, seal_target_labels, split_by_patient
from tsalign.align import adapt, discriminator_accuracy, predict_ga, train
from tsalign.cohortgen import generate_cohort
from tsalign.encoder import EncoderSpec, build_encoder, embed_patches
from tsalign.identifier import train_identifier
from tsalign.metrics import ari_two_means, mae_weeks, mixing_entropy
from tsalign.simulator import make_patient_scorer, simulate_cohort

# full default scale: 50 patients x 10 week-long patches, 256-d embeddings.
# Smaller cohorts make the adversarial game a seed lottery; this one takes
# about ten seconds and tells the whole story.
config = RunConfig()

patches = generate_cohort(config.n_patients, config.patches_per_patient,
                          config, seed=config.seed)
spec = EncoderSpec(kind="surrogate", d_embed=config.d_embed,
                   surrogate_seed=config.surrogate_seed)
encoder = build_encoder(spec, config.patch_length)
identifier = train_identifier(embed_patches(encoder, patches), seed=config.seed)
targets, _ = simulate_cohort(patches, make_patient_scorer(identifier, encoder),
                             config, seed=config.seed)

source = embed_patches(encoder, patches)
target = embed_patches(encoder, targets)

# patient-level splits; target labels are sealed before training ever sees them
train_s, eval_s = split_by_patient(source, config.eval_fraction, config.seed)
train_t, eval_t = split_by_patient(target, config.eval_fraction, config.seed)
sealed_t, vault = seal_target_labels(train_t)

baseline = train(train_s, sealed_t, config, seed=config.seed, baseline=True)
aligned = train(train_s, sealed_t, config, seed=config.seed)
print(f"trained on {len(train_s)}+{len(sealed_t)} patches, "
      f"evaluating on {len(eval_s)}+{len(eval_t)} held-out")
print(f"target labels read during training: {vault.reads}")
print()

# adversarial loss history: classifier converges while the game stays balanced
print("epoch   cls-loss   adv-loss   disc-loss")
for e in (0, 9, 19, 39, 59):
    l_cls, l_adv, l_disc = aligned.history[e]
    print(f"{e:>5}   {l_cls:>8.3f}   {l_adv:>8.3f}   {l_disc:>9.3f}")
print()


def evaluate(name, model):
    truths_s = [reveal_ga(r.ga_weeks) for r in eval_s]
    truths_t = [reveal_ga(r.ga_weeks) for r in eval_t]
    mae_s = mae_weeks(predict_ga(model, eval_s), truths_s)
    mae_t = mae_weeks(predict_ga(model, eval_t), truths_t)
    held = adapt(model.adapter, eval_s + eval_t)
    ent = mixing_entropy(held, k=config.knn_k)
    ari = ari_two_means(held, seed=config.seed)
    print(f"{name:<12} MAE source {mae_s:.2f}  target {mae_t:.2f}  "
          f"ratio {mae_t / mae_s:.2f} | entropy {ent:.2f}  ari {ari:+.2f}")
    return mae_t


mae_base = evaluate("baseline", baseline)
mae_alig = evaluate("adversarial", aligned)
print()

acc = discriminator_accuracy(aligned, eval_s, eval_t)
print(f"discriminator accuracy on held-out embeddings: {acc:.2f} "
      f"(0.5 = fully fooled)")
print(f"target MAE rescued: {mae_alig:.2f} < {mae_base:.2f} = {mae_alig < mae_base}")
