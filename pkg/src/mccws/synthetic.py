"""Synthetic corpora with two segmentation criteria over the same sentences.

The ``fine`` criterion keeps every lexicon word separate (PKU style: 刘 国梁
赢得 世界 冠军). The ``coarse`` criterion merges designated adjacent word pairs
into one compound (CTB style: 刘国梁 赢得 世界冠军). A compound head also occurs
before other words, where it is never merged, so the coarse criterion needs
context. The lexicon always contains those example words, with 刘+国梁 and
世界+冠军 among the designated pairs; the rest is random CJK characters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DomainId, TaggedSentence, encode_tags

CJK_BASE = 0x4E00

ANCHOR_PAIRS = (("刘", "国梁"), ("世界", "冠军"))
ANCHOR_WORDS = ("赢得",)


@dataclass
class Lexicon:
    words: list[str]
    heads: list[str]
    partners: dict[str, list[str]]


@dataclass
class CriteriaCorpus:
    """Parallel segmentations of one generated corpus, already split."""

    train: dict[str, list[TaggedSentence]]
    test: dict[str, list[TaggedSentence]]
    lexicon: Lexicon


def make_lexicon(
    n_single: int = 60,
    n_double: int = 120,
    n_triple: int = 20,
    n_heads: int = 30,
    partners_per_head: int = 2,
    seed: int = 0,
) -> Lexicon:
    rng = np.random.default_rng(seed)
    anchors = [w for pair in ANCHOR_PAIRS for w in pair] + list(ANCHOR_WORDS)
    reserved = {ord(c) - CJK_BASE for w in anchors for c in w}
    n_chars = n_single + 2 * n_double + 3 * n_triple
    chars = [chr(CJK_BASE + int(i)) for i in rng.permutation(4000) if int(i) not in reserved][:n_chars]
    words, pos = [], 0
    for size, count in ((1, n_single), (2, n_double), (3, n_triple)):
        for _ in range(count):
            words.append("".join(chars[pos : pos + size]))
            pos += size
    short = [w for w in words if len(w) <= 2]
    heads = [short[int(i)] for i in rng.choice(len(short), size=n_heads - len(ANCHOR_PAIRS), replace=False)]
    pool = [w for w in short if w not in heads]
    partners = {}
    for h in heads:
        partners[h] = [pool[int(i)] for i in rng.choice(len(pool), size=partners_per_head, replace=False)]
    for h, p in ANCHOR_PAIRS:
        extra = [pool[int(i)] for i in rng.choice(len(pool), size=partners_per_head - 1, replace=False)]
        partners[h] = [p, *extra]
        heads.append(h)
    words += anchors
    return Lexicon(words, heads, partners)


def generate_sentences(
    lexicon: Lexicon,
    n_sentences: int,
    seed: int = 0,
    min_words: int = 5,
    max_words: int = 14,
    pair_rate: float = 0.25,
) -> tuple[list[list[str]], list[list[str]]]:
    """Return (fine, coarse) word lists for each generated sentence."""
    rng = np.random.default_rng(seed)
    heads = set(lexicon.heads)
    fine_all, coarse_all = [], []
    for _ in range(n_sentences):
        target = int(rng.integers(min_words, max_words + 1))
        fine: list[str] = []
        coarse: list[str] = []
        while len(fine) < target:
            r = rng.random()
            if r < pair_rate:
                h = lexicon.heads[int(rng.integers(len(lexicon.heads)))]
                p = lexicon.partners[h][int(rng.integers(len(lexicon.partners[h])))]
                fine += [h, p]
                coarse.append(h + p)
            elif r < pair_rate * 1.6:
                # head followed by a word that is not one of its partners
                h = lexicon.heads[int(rng.integers(len(lexicon.heads)))]
                while True:
                    w = lexicon.words[int(rng.integers(len(lexicon.words)))]
                    if w not in lexicon.partners[h] and w not in heads:
                        break
                fine += [h, w]
                coarse += [h, w]
            else:
                while True:
                    w = lexicon.words[int(rng.integers(len(lexicon.words)))]
                    if w not in heads:
                        break
                fine.append(w)
                coarse.append(w)
        fine_all.append(fine)
        coarse_all.append(coarse)
    return fine_all, coarse_all


def make_criteria_corpus(
    n_sentences: int = 2000,
    test_ratio: float = 0.1,
    seed: int = 0,
    names: tuple[str, str] = ("fine", "coarse"),
    **lexicon_kwargs,
) -> CriteriaCorpus:
    """Two criteria over one shared set of generated sentences, with a common train/test cut."""
    lexicon = make_lexicon(seed=seed, **lexicon_kwargs)
    fine, coarse = generate_sentences(lexicon, n_sentences, seed=seed + 1)
    order = np.random.default_rng(seed + 2).permutation(n_sentences)
    n_test = int(round(test_ratio * n_sentences))
    test_idx, train_idx = sorted(order[:n_test].tolist()), sorted(order[n_test:].tolist())
    train, test = {}, {}
    for k, (name, segs) in enumerate(zip(names, (fine, coarse))):
        dom = DomainId(name, k)
        train[name] = [encode_tags(segs[i], dom) for i in train_idx]
        test[name] = [encode_tags(segs[i], dom) for i in test_idx]
    return CriteriaCorpus(train, test, lexicon)


def merged(corpora: dict[str, list[TaggedSentence]], name: str = "merged") -> dict[str, list[TaggedSentence]]:
    """Naive union of several corpora under one domain name."""
    dom = DomainId(name, 0)
    return {name: [TaggedSentence(ts.sentence.__class__(ts.chars, dom), ts.tags) for c in corpora.values() for ts in c]}
