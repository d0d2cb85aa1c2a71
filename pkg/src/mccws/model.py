"""Full segmenter: encoder -> domain/shared projections -> CRF."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import crf
from .corpus import (
    Batch,
    DomainId,
    TaggedSentence,
    Vocabulary,
    decode_tags,
    encode_tags,
    normalize_with_spans,
    pad_batch,
)
from .encoder import (
    AttentionRecord,
    EncoderConfig,
    attention_records,
    embed,
    encode_layers,
    init_encoder_params,
    truncate,
)
from .numerics import FULL, Tensor, load_checkpoint, no_grad, save_checkpoint
from .projection import SHARED, UnknownDomainError, init_projection_params, project, project_shared_only

VOCAB_FILE = "vocab.txt"


@dataclass
class SegmentationResult:
    words: list[str]
    tags: list[int]
    scores: np.ndarray | None = None
    attention: AttentionRecord | None = None


@dataclass
class Segmenter:
    """Model parameters plus the bookkeeping needed to run them."""

    config: EncoderConfig
    vocab: Vocabulary
    domains: list[str]
    params: dict[str, Tensor]
    shared: bool = True
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        vocab: Vocabulary,
        domains: Sequence[str],
        seed: int = 0,
        shared: bool = True,
        dtype=np.float64,
        **config,
    ) -> Segmenter:
        cfg = EncoderConfig(vocab_size=len(vocab), **config)
        params = init_encoder_params(cfg, seed, dtype)
        params.update(init_projection_params(domains, cfg.d_h, seed, shared=shared, dtype=dtype))
        params.update(crf.init_crf_params(cfg.d_h, seed, dtype))
        return cls(cfg, vocab, list(domains), params, shared)

    # --- bookkeeping ---------------------------------------------------

    def domain_id(self, name: str) -> DomainId:
        if name not in self.domains:
            raise UnknownDomainError(name, self.domains)
        return DomainId(name, self.domains.index(name))

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def copy(self) -> Segmenter:
        params = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, precision=v.precision) for k, v in self.params.items()}
        return Segmenter(self.config, self.vocab, list(self.domains), params, self.shared, dict(self.meta))

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name].data).tobytes())
        return h.hexdigest()

    def truncated(self, k: int) -> Segmenter:
        """Student with the bottom ``k`` encoder layers and copies of every head."""
        enc, cfg = truncate(self.params, self.config, k)
        heads = {
            n: Tensor(t.data.copy(), requires_grad=True) for n, t in self.params.items() if not n.startswith("enc.")
        }
        return Segmenter(cfg, self.vocab, list(self.domains), {**enc, **heads}, self.shared, dict(self.meta))

    # --- forward ---------------------------------------------------------

    def hidden_layers(
        self,
        ids: np.ndarray,
        lengths: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        precision: str = FULL,
    ) -> tuple[list[Tensor], list[np.ndarray]]:
        x = embed(ids, self.config, self.params, training, rng)
        return encode_layers(x, self.config, self.params, lengths, training, rng, precision)

    def head(self, h: Tensor, domain) -> Tensor:
        """Emission scores from encoder features; ``domain`` may be SHARED."""
        name = domain.name if isinstance(domain, DomainId) else domain
        if name == SHARED:
            h_dom, h_sh = project_shared_only(h, self.params)
        else:
            h_dom, h_sh = project(h, name, self.params)
        return crf.emission_scores(h_dom, h_sh, self.params)

    def logits(
        self,
        batch: Batch,
        domain=None,
        training: bool = False,
        rng: np.random.Generator | None = None,
        precision: str = FULL,
    ) -> Tensor:
        outputs, _ = self.hidden_layers(batch.ids, batch.lengths, training, rng, precision)
        return self.head(outputs[-1], batch.domain if domain is None else domain)

    def seg_loss(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Negative log-likelihood summed over the batch."""
        scores = self.logits(batch, training=training, rng=rng)
        return crf.batch_nll(scores, self.params["crf.trans"], batch.tags, batch.lengths)

    def decode(self, batch: Batch, domain=None, precision: str = FULL) -> list[list[int]]:
        with no_grad():
            scores = self.logits(batch, domain, precision=precision)
        return crf.viterbi_batch(scores.data, self.params["crf.trans"].data, batch.lengths)

    # --- inference -------------------------------------------------------

    def predict(
        self,
        sentences: Sequence[TaggedSentence],
        domain,
        batch_size: int = 32,
        precision: str = FULL,
    ) -> list[list[str]]:
        """Predicted words for already-normalized sentences."""
        return [r.words for r in self.segment_normalized([ts.chars for ts in sentences], domain, batch_size, precision)]

    def segment_normalized(
        self,
        lines: Sequence[str],
        domain,
        batch_size: int = 32,
        precision: str = FULL,
        capture_attention: bool = False,
        with_scores: bool = False,
    ) -> list[SegmentationResult]:
        """Segment normalized character strings.

        Lines longer than ``max_seq_len`` are cut into consecutive windows that
        are decoded independently.
        """
        max_len = self.config.max_seq_len
        pieces = [(i, start) for i, line in enumerate(lines) for start in range(0, len(line), max_len)]
        per_line: list[list[tuple]] = [[] for _ in lines]
        for b0 in range(0, len(pieces), batch_size):
            chunk = pieces[b0 : b0 + batch_size]
            sents = [encode_tags(list(lines[i][s : s + max_len])) for i, s in chunk]
            batch = pad_batch(sents, self.vocab, None, max_len)
            with no_grad():
                outputs, probs = self.hidden_layers(batch.ids, batch.lengths, precision=precision)
                scores = self.head(outputs[-1], domain).data
            paths = crf.viterbi_batch(scores, self.params["crf.trans"].data, batch.lengths)
            records = attention_records(probs, batch.lengths) if capture_attention else [None] * len(chunk)
            for j, (i, s) in enumerate(chunk):
                n = int(batch.lengths[j])
                per_line[i].append((paths[j], scores[j, :n] if with_scores else None, records[j]))
        results = []
        for line, parts in zip(lines, per_line):
            tags = [t for p in parts for t in p[0]]
            sc = np.concatenate([p[1] for p in parts]) if with_scores and parts else None
            rec = parts[0][2] if capture_attention and parts else None
            results.append(SegmentationResult(decode_tags(line, tags), tags, sc, rec))
        return results

    def segment(
        self,
        texts: Iterable[str],
        domain,
        batch_size: int = 32,
        precision: str = FULL,
        capture_attention: bool = False,
        with_scores: bool = False,
    ) -> list[SegmentationResult]:
        """Segment raw lines; output words are slices of the original text."""
        texts = list(texts)
        norm = [_normalize_raw(t) for t in texts]
        results = self.segment_normalized([c for c, _ in norm], domain, batch_size, precision, capture_attention, with_scores)
        for text, (chars, spans), res in zip(texts, norm, results):
            words = []
            for a, b in _tag_spans(res.tags):
                words.append("".join(text[spans[a][0] : spans[b - 1][1]].split()))
            res.words = words
        return results

    # --- persistence -----------------------------------------------------

    def save(self, path: str | os.PathLike) -> Path:
        meta = {
            "encoder": self.config.to_dict(),
            "domains": self.domains,
            "shared": self.shared,
            **{k: v for k, v in self.meta.items() if k not in ("encoder", "domains", "shared")},
        }
        root = save_checkpoint(path, self.params, meta)
        self.vocab.save(root / VOCAB_FILE)
        return root

    @classmethod
    def load(cls, path: str | os.PathLike, dtype=np.float64) -> Segmenter:
        params, meta = load_checkpoint(path, dtype)
        for t in params.values():
            t.requires_grad = True
        vocab = Vocabulary.load(Path(path) / VOCAB_FILE)
        cfg = EncoderConfig(**meta["encoder"])
        extra = {k: v for k, v in meta.items() if k not in ("encoder", "domains", "shared")}
        return cls(cfg, vocab, list(meta["domains"]), params, bool(meta["shared"]), extra)


def _tag_spans(tags: Sequence[int]) -> list[tuple[int, int]]:
    spans, pos = [], 0
    for w in decode_tags(["x"] * len(tags), tags):
        spans.append((pos, pos + len(w)))
        pos += len(w)
    return spans


def _normalize_raw(text: str) -> tuple[str, list[tuple[int, int]]]:
    chars, spans = normalize_with_spans(text)
    keep = [i for i, c in enumerate(chars) if not c.isspace()]
    return "".join(chars[i] for i in keep), [spans[i] for i in keep]
