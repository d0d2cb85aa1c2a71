"""
Tags, paths and the CRF
=======================

Word segmentation as tagging: every character gets one of B, M, E, S.
A linear-chain CRF scores a whole tag path and normalizes over all 4^n
paths, which the forward algorithm does in O(n * 16).
"""

# %%
# Two annotation conventions for the same sentence give two tag sequences.
from mccws.corpus import LABELS, decode_tags, encode_tags

fine = encode_tags(["刘", "国梁", "赢得", "世界", "冠军"])
coarse = encode_tags(["刘国梁", "赢得", "世界冠军"])
print(fine.chars)
print(" ".join(LABELS[t] for t in fine.tags))
print(" ".join(LABELS[t] for t in coarse.tags))

# %%
# Decoding is forgiving: a path that is not well formed still yields words.
print(decode_tags("刘国梁", [1, 1, 2]))

# %%
# Random emission scores and transitions for a 5-character sentence.
import itertools

import numpy as np

from mccws import crf

rng = np.random.default_rng(0)
scores = rng.uniform(-2, 2, size=(5, 4))
trans = rng.uniform(-2, 2, size=(4, 4))

# %%
# Viterbi against exhaustive search over all 1024 paths.
best, best_score = crf.viterbi(scores, trans)
brute = max(itertools.product(range(4), repeat=5), key=lambda y: crf.path_score(scores, trans, y))
print("viterbi", [LABELS[t] for t in best], round(best_score, 4))
print("brute  ", [LABELS[t] for t in brute])

# %%
# Path probabilities sum to one, and so does each position's tag marginal.
# The pairwise marginals count expected transitions: n - 1 of them in total.
log_z = crf.log_partition(scores, trans)
total = sum(np.exp(crf.path_score(scores, trans, y) - log_z) for y in itertools.product(range(4), repeat=5))
print("sum over paths", total)
node, pair = crf.marginals(scores, trans)
print(node.sum(axis=1), pair.sum())
