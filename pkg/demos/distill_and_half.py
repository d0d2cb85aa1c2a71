"""
Smaller and cheaper: distillation and 16-bit inference
======================================================

The bottom layer of a trained model becomes a student that keeps training on
the labels plus a pull toward the teacher's normalized emission scores.
Separately, the attention and feed-forward matmuls can run on values rounded
to IEEE half precision.
"""

# %%
import numpy as np

from mccws.distill import distill_loss
from mccws.evaluation import macro_f1, speed_bench
from mccws.synthetic import make_criteria_corpus
from mccws.trainer import TrainConfig, evaluate_model, train_student, train_teacher

corpus = make_criteria_corpus(1000, seed=1)
teacher, _ = train_teacher(corpus.train, TrainConfig(epochs=8, num_layers=3))

# %%
# The distillation term only sees directions: rescaling a position changes nothing.
rng = np.random.default_rng(0)
s, t = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
print(distill_loss([s], [t]).item(), distill_loss([3 * s], [t]).item())
print("antipodal:", distill_loss([s], [-s]).item())

# %%
student, _ = train_student(teacher, 1, corpus.train, TrainConfig(epochs=5))
for name, model in (("teacher-3", teacher), ("student-1", student)):
    print(name, round(100 * macro_f1(evaluate_model(model, corpus.test)), 2))

# %%
# Emulated half precision on the teacher's test sets.
full = macro_f1(evaluate_model(teacher, corpus.test))
half = macro_f1(evaluate_model(teacher, corpus.test, precision="half"))
print(f"full {100 * full:.2f}  half {100 * half:.2f}")

# %%
# Throughput per batch size (one BLAS thread, median of five runs).
lines = [ts.chars for ts in corpus.test["fine"]]
for name, model in (("teacher-3", teacher), ("student-1", student)):
    print(name)
    print(speed_bench(model, lines, [1, 8, 32]).to_tsv())
