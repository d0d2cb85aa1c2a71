"""Linear-chain CRF over the four BMES labels.

Path score of tags ``y`` for emission scores ``s`` ([n, 4]) and transitions
``A`` ([4, 4], ``A[prev, next]``)::

    score(y) = sum_i s[i, y_i] + sum_{i>=1} A[y_{i-1}, y_i]

The unary score of the first position is included; there are no start or stop
transitions. All arithmetic runs in log space at full precision.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .corpus import LABELS
from .numerics import ShapeError, Tensor, concat, make_op
from .numerics.init import xavier_uniform_init

NUM_LABELS = len(LABELS)
BRUTE_FORCE_MAX_LEN = 8


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def init_crf_params(d_h: int, seed: int, dtype=np.float64) -> dict[str, Tensor]:
    return {
        "crf.W_s": Tensor(xavier_uniform_init((2 * d_h, NUM_LABELS), seed, dtype, "crf.W_s"), requires_grad=True),
        "crf.b_s": Tensor(np.zeros(NUM_LABELS, dtype=dtype), requires_grad=True),
        "crf.trans": Tensor(np.zeros((NUM_LABELS, NUM_LABELS), dtype=dtype), requires_grad=True),
    }


def emission_scores(h_domain: Tensor, h_shared: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Per-character label scores from the concatenated projections."""
    if h_domain.shape != h_shared.shape:
        raise ShapeError(f"emission_scores: domain features {h_domain.shape} vs shared features {h_shared.shape}")
    W = params["crf.W_s"]
    if 2 * h_domain.shape[-1] != W.shape[0]:
        raise ShapeError(f"emission_scores: features {h_domain.shape} x2 do not match W_s {W.shape}")
    return concat([h_domain, h_shared], axis=-1) @ W + params["crf.b_s"]


# --- single-sequence routines (numpy) -------------------------------------


def _check_scores(scores: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    trans = np.asarray(trans, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != NUM_LABELS or trans.shape != (NUM_LABELS, NUM_LABELS):
        raise ShapeError(f"expected scores [n, {NUM_LABELS}] and trans [{NUM_LABELS}, {NUM_LABELS}], got {scores.shape} and {trans.shape}")
    if scores.shape[0] == 0:
        raise ValueError("CRF needs at least one position")
    return scores, trans


def path_score(scores, trans, tags) -> float:
    scores, trans = _check_scores(scores, trans)
    tags = np.asarray(tags, dtype=np.int64)
    if tags.shape != (scores.shape[0],):
        raise ValueError(f"{tags.shape[0] if tags.ndim else 0} tags for {scores.shape[0]} positions")
    if tags.min() < 0 or tags.max() >= NUM_LABELS:
        raise ValueError(f"tag ids must lie in [0, {NUM_LABELS}), got {tags.tolist()}")
    total = scores[np.arange(len(tags)), tags].sum()
    return float(total + trans[tags[:-1], tags[1:]].sum())


def forward_table(scores: np.ndarray, trans: np.ndarray) -> np.ndarray:
    alpha = np.empty_like(scores)
    alpha[0] = scores[0]
    for i in range(1, len(scores)):
        alpha[i] = scores[i] + _logsumexp(alpha[i - 1][:, None] + trans, axis=0)
    return alpha


def backward_table(scores: np.ndarray, trans: np.ndarray) -> np.ndarray:
    beta = np.zeros_like(scores)
    for i in range(len(scores) - 2, -1, -1):
        beta[i] = _logsumexp(trans + (scores[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def log_partition(scores, trans) -> float:
    scores, trans = _check_scores(scores, trans)
    return float(_logsumexp(forward_table(scores, trans)[-1], axis=0))


def log_likelihood(scores, trans, tags) -> float:
    return path_score(scores, trans, tags) - log_partition(scores, trans)


def marginals(scores, trans) -> tuple[np.ndarray, np.ndarray]:
    """Node marginals [n, 4] and summed pairwise marginals [4, 4]."""
    scores, trans = _check_scores(scores, trans)
    alpha = forward_table(scores, trans)
    beta = backward_table(scores, trans)
    logz = _logsumexp(alpha[-1], axis=0)
    node = np.exp(alpha + beta - logz)
    pair = np.zeros_like(trans)
    for i in range(1, len(scores)):
        pair += np.exp(alpha[i - 1][:, None] + trans + (scores[i] + beta[i])[None, :] - logz)
    return node, pair


def viterbi(scores, trans) -> tuple[list[int], float]:
    """Best tag path and its score; ties go to the lowest label index."""
    scores, trans = _check_scores(scores, trans)
    n = len(scores)
    delta = scores[0].copy()
    back = np.zeros((n, NUM_LABELS), dtype=np.int64)
    for i in range(1, n):
        cand = delta[:, None] + trans
        back[i] = cand.argmax(axis=0)
        delta = cand[back[i], np.arange(NUM_LABELS)] + scores[i]
    best = int(delta.argmax())
    tags = [best]
    for i in range(n - 1, 0, -1):
        best = int(back[i, best])
        tags.append(best)
    tags.reverse()
    return tags, float(delta.max())


def posterior_brute_force(scores, trans, tags) -> float:
    """p(tags | scores) by enumerating every label sequence; test oracle."""
    scores, trans = _check_scores(scores, trans)
    n = len(scores)
    if n > BRUTE_FORCE_MAX_LEN:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_LEN}, got {n}")
    all_scores = np.array([path_score(scores, trans, y) for y in itertools.product(range(NUM_LABELS), repeat=n)])
    m = all_scores.max()
    z = m + np.log(np.exp(all_scores - m).sum())
    return float(np.exp(path_score(scores, trans, tags) - z))


# --- batched routines -----------------------------------------------------


@dataclass
class _BatchTables:
    alpha: np.ndarray
    beta: np.ndarray
    logz: np.ndarray


def _batch_tables(scores: np.ndarray, trans: np.ndarray, lengths: np.ndarray) -> _BatchTables:
    bsz, width, _ = scores.shape
    alpha = np.empty_like(scores)
    alpha[:, 0] = scores[:, 0]
    for i in range(1, width):
        step = scores[:, i] + _logsumexp(alpha[:, i - 1, :, None] + trans[None], axis=1)
        live = (i < lengths)[:, None]
        alpha[:, i] = np.where(live, step, alpha[:, i - 1])
    logz = _logsumexp(alpha[:, -1], axis=1)
    beta = np.zeros_like(scores)
    for i in range(width - 2, -1, -1):
        step = _logsumexp(trans[None] + (scores[:, i + 1] + beta[:, i + 1])[:, None, :], axis=2)
        live = (i + 1 < lengths)[:, None]
        beta[:, i] = np.where(live, step, 0.0)
    return _BatchTables(alpha, beta, logz)


def batch_nll(scores: Tensor, trans: Tensor, tags: np.ndarray, lengths: np.ndarray) -> Tensor:
    """Sum over the batch of -log p(tags | scores); positions past each length are ignored.

    The gradient w.r.t. the scores is (marginals - gold one-hot), and w.r.t.
    the transitions (pairwise marginals - gold transition counts).
    """
    s, A = scores.data, trans.data
    bsz, width, _ = s.shape
    lengths = np.asarray(lengths)
    if np.any(lengths < 1):
        raise ValueError("every sequence in a CRF batch needs at least one position")
    mask = np.arange(width)[None, :] < lengths[:, None]
    tags = np.where(mask, tags, 0)
    tables = _batch_tables(s, A, lengths)
    rows = np.arange(bsz)[:, None]
    gold_unary = (s[rows, np.arange(width)[None, :], tags] * mask).sum()
    pair_mask = mask[:, 1:]
    gold_pair = (A[tags[:, :-1], tags[:, 1:]] * pair_mask).sum()
    nll = tables.logz.sum() - gold_unary - gold_pair

    def backward(g):
        g = float(g)
        logz = tables.logz[:, None, None]
        node = np.exp(tables.alpha + tables.beta - logz) * mask[:, :, None]
        gold = np.zeros_like(s)
        np.put_along_axis(gold, tags[:, :, None], 1.0, axis=2)
        gold *= mask[:, :, None]
        gs = g * (node - gold)
        gA = None
        if trans.requires_grad:
            pair = np.exp(
                tables.alpha[:, :-1, :, None] + A[None, None] + (s[:, 1:] + tables.beta[:, 1:])[:, :, None, :] - logz[:, :, :, None]
            )
            pair = (pair * pair_mask[:, :, None, None]).sum(axis=(0, 1))
            gold_counts = np.zeros_like(A)
            np.add.at(gold_counts, (tags[:, :-1][pair_mask], tags[:, 1:][pair_mask]), 1.0)
            gA = g * (pair - gold_counts)
        return gs, gA

    return make_op(np.asarray(nll, dtype=s.dtype), (scores, trans), backward)


def viterbi_batch(scores: np.ndarray, trans: np.ndarray, lengths: np.ndarray) -> list[list[int]]:
    scores = np.asarray(scores, dtype=np.float64)
    trans = np.asarray(trans, dtype=np.float64)
    bsz, width, _ = scores.shape
    lengths = np.asarray(lengths)
    delta = scores[:, 0].copy()
    back = np.zeros((bsz, width, NUM_LABELS), dtype=np.int64)
    labels = np.arange(NUM_LABELS)
    for i in range(1, width):
        cand = delta[:, :, None] + trans[None]
        arg = cand.argmax(axis=1)
        step = np.take_along_axis(cand, arg[:, None, :], axis=1)[:, 0] + scores[:, i]
        live = (i < lengths)[:, None]
        back[:, i] = np.where(live, arg, labels[None, :])
        delta = np.where(live, step, delta)
    best = delta.argmax(axis=1)
    out = []
    for b in range(bsz):
        n = int(lengths[b])
        y = int(best[b])
        path = [y]
        for i in range(n - 1, 0, -1):
            y = int(back[b, i, y])
            path.append(y)
        path.reverse()
        out.append(path)
    return out
