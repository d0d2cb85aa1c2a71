"""
Where the model looks, and which layer it needs
===============================================

Averaging attention rows by position shows how much weight stays near the
query character. A layer probe mixes every layer's output with learned
softmax weights: stacking two untrained layers on a trained model, the probe
should settle on the last trained layer.
"""

# %%
import numpy as np

from mccws.encoder import local_mass, mean_attention_by_offset
from mccws.synthetic import make_criteria_corpus
from mccws.trainer import TrainConfig, layer_attention_probe, train_teacher, with_noise_layers

corpus = make_criteria_corpus(1000, seed=2)
config = TrainConfig(epochs=8, num_layers=3)
model, _ = train_teacher(corpus.train, config)

# %%
q = 5
lines = [ts.chars for ts in corpus.test["fine"] if len(ts) > q]
records = [r.attention for r in model.segment_normalized(lines, "fine", capture_attention=True)]
profile = mean_attention_by_offset(records, q)
print(np.round(profile[:12], 3))
print("mass within 3 characters of the query:", round(local_mass(profile, q), 3))

# %%
noisy = with_noise_layers(model, 2, seed=7)
weights, _ = layer_attention_probe(noisy, corpus.train, config.replace(epochs=2))
for i, w in enumerate(weights, 1):
    print(f"layer {i}: {w:.3f} {'#' * int(60 * w)}")
