"""Corpus ingestion: text normalization, BMES tagging, vocabularies and batching."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

# Label ids, fixed order B < M < E < S.
B, M, E, S = 0, 1, 2, 3
LABELS = ("B", "M", "E", "S")

ENG_TOKEN = "\ue000"  # stands for a run of Latin letters
NUM_TOKEN = "\ue001"  # stands for a run of digits

MAX_SEQ_LEN = 128


@dataclass(frozen=True)
class DomainId:
    name: str
    index: int


@dataclass(frozen=True)
class Sentence:
    chars: str
    domain: DomainId | None = None


@dataclass(frozen=True)
class TaggedSentence:
    sentence: Sentence
    tags: tuple[int, ...]

    def __post_init__(self):
        if len(self.tags) != len(self.sentence.chars):
            raise ValueError(f"{len(self.tags)} tags for {len(self.sentence.chars)} characters")

    @property
    def chars(self) -> str:
        return self.sentence.chars

    @property
    def domain(self) -> DomainId | None:
        return self.sentence.domain

    def __len__(self) -> int:
        return len(self.tags)

    def words(self) -> list[str]:
        return decode_tags(self.chars, self.tags)

    def truncated(self, max_len: int) -> TaggedSentence:
        if len(self) <= max_len:
            return self
        return TaggedSentence(Sentence(self.chars[:max_len], self.domain), self.tags[:max_len])


# --- normalization -------------------------------------------------------


def _to_half_width(ch: str) -> str:
    code = ord(ch)
    if 0xFF01 <= code <= 0xFF5E:
        return chr(code - 0xFEE0)
    if code == 0x3000:
        return " "
    return ch


def _is_latin(ch: str) -> bool:
    return ("a" <= ch <= "z") or ("A" <= ch <= "Z")


def _is_digit(ch: str) -> bool:
    return "0" <= ch <= "9"


def normalize_with_spans(line: str) -> tuple[str, list[tuple[int, int]]]:
    """Normalize ``line`` and return, per output character, its source span in ``line``."""
    out: list[str] = []
    spans: list[tuple[int, int]] = []
    i, n = 0, len(line)
    while i < n:
        ch = _to_half_width(line[i])
        if _is_latin(ch) or _is_digit(ch):
            pred = _is_latin if _is_latin(ch) else _is_digit
            j = i + 1
            while j < n and pred(_to_half_width(line[j])):
                j += 1
            out.append(ENG_TOKEN if pred is _is_latin else NUM_TOKEN)
            spans.append((i, j))
            i = j
        else:
            out.append(ch)
            spans.append((i, i + 1))
            i += 1
    return "".join(out), spans


def normalize_text(line: str) -> str:
    """Half-width conversion, then Latin-letter runs -> ENG_TOKEN and digit runs -> NUM_TOKEN."""
    return normalize_with_spans(line)[0]


# --- tagging -------------------------------------------------------------


def word_tags(length: int) -> list[int]:
    if length == 1:
        return [S]
    return [B] + [M] * (length - 2) + [E]


def encode_tags(words: Sequence[str], domain: DomainId | None = None) -> TaggedSentence:
    tags: list[int] = []
    for w in words:
        if not w:
            raise ValueError("empty word in segmentation")
        tags.extend(word_tags(len(w)))
    return TaggedSentence(Sentence("".join(words), domain), tuple(tags))


def decode_tags(chars: Sequence[str], tags: Sequence[int]) -> list[str]:
    """Turn BMES tags back into words.

    Ill-formed sequences are repaired: a tag that cannot continue the open word
    closes it and opens a new one.
    """
    if len(chars) != len(tags):
        raise ValueError(f"{len(chars)} characters but {len(tags)} tags")
    words: list[str] = []
    current: list[str] = []
    for ch, t in zip(chars, tags):
        t = int(t)
        if t in (B, S) and current:
            words.append("".join(current))
            current = []
        current.append(ch)
        if t in (E, S):
            words.append("".join(current))
            current = []
    if current:
        words.append("".join(current))
    return words


def is_well_formed(tags: Sequence[int]) -> bool:
    inside = False
    for t in tags:
        if t in (M, E) and not inside:
            return False
        if t in (B, S) and inside:
            return False
        inside = t in (B, M)
    return not inside


def word_spans(words: Iterable[str]) -> list[tuple[int, int]]:
    spans, pos = [], 0
    for w in words:
        spans.append((pos, pos + len(w)))
        pos += len(w)
    return spans


# --- vocabulary ----------------------------------------------------------


PAD, UNK = "<pad>", "<unk>"


class Vocabulary:
    """Character to id map. PAD=0, UNK=1, then the two run placeholders."""

    RESERVED = (PAD, UNK, ENG_TOKEN, NUM_TOKEN)
    PAD_ID, UNK_ID = 0, 1

    def __init__(self, chars: Iterable[str] = ()):
        self.itos: list[str] = list(self.RESERVED)
        self.stoi: dict[str, int] = {c: i for i, c in enumerate(self.itos)}
        for c in chars:
            self.add(c)

    def add(self, ch: str) -> int:
        if ch not in self.stoi:
            self.stoi[ch] = len(self.itos)
            self.itos.append(ch)
        return self.stoi[ch]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, ch: str) -> bool:
        return ch in self.stoi

    def lookup(self, ch: str) -> int:
        return self.stoi.get(ch, self.UNK_ID)

    def encode(self, chars: Iterable[str]) -> np.ndarray:
        return np.fromiter((self.stoi.get(c, self.UNK_ID) for c in chars), dtype=np.int64)

    @classmethod
    def build(cls, corpora: Iterable[Iterable[TaggedSentence]], min_count: int = 1) -> Vocabulary:
        counts: dict[str, int] = {}
        for corpus in corpora:
            for ts in corpus:
                for c in ts.chars:
                    counts[c] = counts.get(c, 0) + 1
        return cls(sorted(c for c, n in counts.items() if n >= min_count and c not in cls.RESERVED))

    def save(self, path: str | os.PathLike) -> None:
        # reserved entries are written too so line number == id
        Path(path).write_text("".join(c + "\n" for c in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> Vocabulary:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[: len(cls.RESERVED)]) != cls.RESERVED:
            raise ValueError(f"{path}: vocabulary does not start with the reserved entries")
        return cls(lines[len(cls.RESERVED):])


# --- corpus files --------------------------------------------------------


def parse_line(line: str, domain: DomainId | None = None) -> TaggedSentence | None:
    """Parse one whitespace-segmented line; returns None for blank lines."""
    words = [normalize_text(w) for w in line.split()]
    words = [w.replace(" ", "") for w in words]
    words = [w for w in words if w]
    if not words:
        return None
    return encode_tags(words, domain)


def read_corpus(path: str | os.PathLike, domain: DomainId | None = None) -> list[TaggedSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            ts = parse_line(line, domain)
            if ts is not None:
                out.append(ts)
    return out


def write_corpus(path: str | os.PathLike, corpus: Iterable[TaggedSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ts in corpus:
            fh.write(" ".join(ts.words()) + "\n")


def discover_domains(data_dir: str | os.PathLike) -> list[str]:
    """Domain names for which ``<domain>.train.txt`` exists, sorted."""
    return sorted(p.name[: -len(".train.txt")] for p in Path(data_dir).glob("*.train.txt"))


def with_domain(corpus: Iterable[TaggedSentence], domain: DomainId) -> list[TaggedSentence]:
    return [TaggedSentence(Sentence(ts.chars, domain), ts.tags) for ts in corpus]


# --- splitting and batching ----------------------------------------------


def split_dev(corpus: Sequence, ratio: float = 0.1, seed: int = 0) -> tuple[list, list]:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"dev ratio must be in (0, 1), got {ratio}")
    if len(corpus) < 2:
        raise ValueError(f"cannot split a corpus of {len(corpus)} sentence(s)")
    order = np.random.default_rng(seed).permutation(len(corpus))
    n_dev = int(round(ratio * len(corpus)))
    n_dev = min(max(n_dev, 1), len(corpus) - 1)
    dev_idx = set(order[:n_dev].tolist())
    train = [s for i, s in enumerate(corpus) if i not in dev_idx]
    dev = [corpus[i] for i in sorted(dev_idx)]
    return train, dev


@dataclass(frozen=True)
class Batch:
    ids: np.ndarray  # [batch, len], PAD_ID beyond each length
    tags: np.ndarray  # [batch, len], 0 beyond each length
    lengths: np.ndarray  # [batch]
    domain: DomainId | None
    sentences: tuple[TaggedSentence, ...] = ()

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.ids.shape[1])[None, :] < self.lengths[:, None]

    def __len__(self) -> int:
        return len(self.lengths)


def pad_batch(
    sentences: Sequence[TaggedSentence],
    vocab: Vocabulary,
    domain: DomainId | None,
    max_len: int = MAX_SEQ_LEN,
) -> Batch:
    sentences = tuple(s.truncated(max_len) for s in sentences)
    lengths = np.array([len(s) for s in sentences], dtype=np.int64)
    width = int(lengths.max()) if len(lengths) else 0
    ids = np.full((len(sentences), width), Vocabulary.PAD_ID, dtype=np.int64)
    tags = np.zeros((len(sentences), width), dtype=np.int64)
    for r, s in enumerate(sentences):
        ids[r, : len(s)] = vocab.encode(s.chars)
        tags[r, : len(s)] = s.tags
    return Batch(ids, tags, lengths, domain, sentences)


def make_batches(
    corpora: Sequence[Sequence[TaggedSentence]],
    vocab: Vocabulary,
    batch_size: int,
    seed: int,
    domains: Sequence[DomainId] | None = None,
    max_len: int = MAX_SEQ_LEN,
    pool_factor: int = 8,
) -> Iterator[Batch]:
    """One epoch of single-domain batches.

    Each corpus is shuffled, cut into pools of ``pool_factor`` batches that are
    sorted by length, and chunked; the resulting batches are then put in a
    uniformly random order, so at every step the chance of drawing a domain
    is proportional to what remains of it.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if not corpora:
        raise ValueError("make_batches needs at least one corpus")
    rng = np.random.default_rng(seed)
    plan: list[tuple[int, np.ndarray]] = []
    pool = batch_size * pool_factor
    for k, corpus in enumerate(corpora):
        order = rng.permutation(len(corpus))
        for p0 in range(0, len(order), pool):
            # sort a shuffled pool by length so batches carry little padding
            chunk = order[p0 : p0 + pool]
            chunk = chunk[np.argsort([len(corpus[i]) for i in chunk], kind="stable")]
            for start in range(0, len(chunk), batch_size):
                plan.append((k, chunk[start : start + batch_size]))
    for j in rng.permutation(len(plan)):
        k, idx = plan[j]
        corpus = corpora[k]
        dom = domains[k] if domains is not None else corpus[idx[0]].domain
        yield pad_batch([corpus[i] for i in idx], vocab, dom, max_len)
