"""
One model, two segmentation criteria
====================================

A generated corpus is annotated twice: ``fine`` splits 刘 + 国梁, ``coarse``
keeps 刘国梁 whole. A single encoder with a private projection per criterion
and one shared projection learns both. Training the same architecture on the
naively merged data cannot, because the merged labels contradict each other.

Takes a few minutes on one CPU.
"""

# %%
from mccws.evaluation import macro_f1
from mccws.synthetic import make_criteria_corpus, merged
from mccws.trainer import TrainConfig, evaluate_model, train_single_criteria, train_teacher

corpus = make_criteria_corpus(1000, seed=0)
for name, sents in corpus.train.items():
    print(name, " ".join(sents[0].words()))

# %%
# Small encoder, few epochs: enough to see the effect.
config = TrainConfig(epochs=8, num_layers=2)
joint, report = train_teacher(corpus.train, config)
print("dev macro-F1 per epoch", [round(f, 3) for f in report.macro_dev_f1])

# %%
# The criterion is picked at decode time.
sentence = "刘国梁赢得世界冠军"
for domain in ("fine", "coarse", "shared"):
    print(f"{domain:>7}:", " ".join(joint.segment([sentence], domain)[0].words))

# %%
# Same architecture, one projection, both corpora pooled under one name.
single, _ = train_single_criteria(merged(corpus.train), config)
joint_scores = evaluate_model(joint, corpus.test)
single_scores = evaluate_model(single, corpus.test, {"fine": "merged", "coarse": "merged"})
for name in corpus.test:
    print(f"{name:>7}: joint {joint_scores[name].f1:.3f}  merged {single_scores[name].f1:.3f}")
print(f"macro gap: {100 * (macro_f1(joint_scores) - macro_f1(single_scores)):.1f} points")
