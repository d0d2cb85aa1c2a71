"""Word-level P/R/F1, OOV recall, cross-corpus OOV overlap and decoding speed."""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import word_spans


class SegmentationMismatch(ValueError):
    pass


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    oov_recall: float | None = None
    gold_words: int = 0
    sys_words: int = 0
    correct_words: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_tsv(self) -> str:
        d = self.to_dict()
        keys = list(d)
        width = max(len(k) for k in keys)
        return "\n".join(f"{k:<{width}}\t{_fmt(d[k])}" for k in keys) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def f_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _aligned_spans(gold: Sequence[Sequence[str]], sys: Sequence[Sequence[str]]):
    if len(gold) != len(sys):
        raise SegmentationMismatch(f"{len(gold)} gold sentences but {len(sys)} system sentences")
    for k, (g, s) in enumerate(zip(gold, sys)):
        if "".join(g) != "".join(s):
            raise SegmentationMismatch(
                f"sentence {k}: gold and system segment different text ({''.join(g)!r} vs {''.join(s)!r})"
            )
        yield g, word_spans(g), word_spans(s)


def prf(gold: Sequence[Sequence[str]], sys: Sequence[Sequence[str]]) -> MetricsReport:
    """Micro-averaged precision/recall/F1 over character-offset word spans."""
    n_gold = n_sys = n_ok = 0
    for _, gs, ss in _aligned_spans(gold, sys):
        n_gold += len(gs)
        n_sys += len(ss)
        n_ok += len(set(gs) & set(ss))
    p = n_ok / n_sys if n_sys else 0.0
    r = n_ok / n_gold if n_gold else 0.0
    return MetricsReport(p, r, f_score(p, r), None, n_gold, n_sys, n_ok)


def oov_recall(gold: Sequence[Sequence[str]], sys: Sequence[Sequence[str]], train_vocab) -> float:
    """Recall over gold words absent from ``train_vocab``; 1.0 when there are none."""
    total = hit = 0
    for words, gs, ss in _aligned_spans(gold, sys):
        found = set(ss)
        for w, span in zip(words, gs):
            if w not in train_vocab:
                total += 1
                hit += span in found
    return hit / total if total else 1.0


def evaluate(gold, sys, train_vocab=None) -> MetricsReport:
    report = prf(gold, sys)
    if train_vocab is not None:
        report.oov_recall = oov_recall(gold, sys, train_vocab)
    return report


@dataclass
class OverlapMatrix:
    """``rates[a][b]``: share of domain a's OOV words found in b's training words.

    The last column ``all_others`` uses the union of every other domain. Rows
    with no OOV words hold None.
    """

    domains: list[str]
    rates: list[list[float | None]]
    all_others: list[float | None]
    oov_counts: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def to_tsv(self) -> str:
        header = ["domain", *self.domains, "all_others"]
        width = max(len(h) for h in header + self.domains)
        lines = ["\t".join(f"{h:<{width}}" for h in header)]
        for name, row, tot in zip(self.domains, self.rates, self.all_others):
            cells = [name] + [_fmt(v) for v in row] + [_fmt(tot)]
            lines.append("\t".join(f"{c:<{width}}" for c in cells))
        return "\n".join(lines) + "\n"


def oov_overlap(train_words: Sequence[set], test_words: Sequence[set], domains: Sequence[str] | None = None) -> OverlapMatrix:
    if len(train_words) != len(test_words):
        raise ValueError(f"{len(train_words)} training sets but {len(test_words)} test sets")
    if len(train_words) < 2:
        raise ValueError("oov_overlap needs at least two domains")
    names = list(domains) if domains is not None else [str(i) for i in range(len(train_words))]
    rates, union_col, counts = [], [], []
    for a, (tr, te) in enumerate(zip(train_words, test_words)):
        oov = set(te) - set(tr)
        counts.append(len(oov))
        if not oov:
            rates.append([None] * len(train_words))
            union_col.append(None)
            continue
        row = [0.0 if b == a else len(oov & set(other)) / len(oov) for b, other in enumerate(train_words)]
        others = set().union(*(set(t) for b, t in enumerate(train_words) if b != a))
        rates.append(row)
        union_col.append(len(oov & others) / len(oov))
    return OverlapMatrix(names, rates, union_col, counts)


def corpus_words(corpus) -> set[str]:
    return {w for ts in corpus for w in ts.words()}


# --- speed ---------------------------------------------------------------


@dataclass
class SpeedRow:
    batch_size: int
    chars_per_sec: float
    seconds: float
    repeats: list[float]


@dataclass
class SpeedTable:
    rows: list[SpeedRow]
    n_sentences: int
    n_chars: int
    threads: int
    monotone: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_tsv(self) -> str:
        lines = ["batch_size\tchars_per_sec\tmedian_seconds"]
        lines += [f"{r.batch_size}\t{r.chars_per_sec:.1f}\t{r.seconds:.6f}" for r in self.rows]
        return "\n".join(lines) + "\n"


def speed_bench(
    model,
    sentences: Sequence[str],
    batch_sizes: Sequence[int],
    domain=None,
    repeats: int = 5,
    warmup: int = 1,
    precision: str = "full",
    threads: int = 1,
) -> SpeedTable:
    """Time the full pipeline (encode, project, Viterbi, tag decoding) per batch size.

    Reports the median of ``repeats`` timed runs after ``warmup`` untimed ones,
    with BLAS pinned to ``threads`` threads.
    """
    from threadpoolctl import threadpool_limits

    if not sentences:
        raise ValueError("speed_bench needs at least one sentence")
    if repeats < 5:
        raise ValueError("speed_bench needs at least 5 timed repeats")
    domain = domain if domain is not None else model.domains[0]
    lines = list(sentences)
    n_chars = sum(len(s) for s in lines)
    rows = []
    with threadpool_limits(limits=threads):
        for bs in batch_sizes:
            for _ in range(warmup):
                model.segment_normalized(lines, domain, batch_size=bs, precision=precision)
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                model.segment_normalized(lines, domain, batch_size=bs, precision=precision)
                times.append(time.perf_counter() - t0)
            med = statistics.median(times)
            rows.append(SpeedRow(int(bs), n_chars / med, med, times))
    speeds = [r.chars_per_sec for r in rows]
    monotone = all(b >= a for a, b in zip(speeds, speeds[1:]))
    return SpeedTable(rows, len(lines), n_chars, threads, monotone)


def macro_f1(reports: Mapping[str, MetricsReport]) -> float:
    return float(np.mean([r.f1 for r in reports.values()])) if reports else 0.0
