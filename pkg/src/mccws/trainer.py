"""Training loops: multi-criteria teacher, distilled student, single-criteria ablation, layer probe."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import crf
from .corpus import Batch, DomainId, TaggedSentence, Vocabulary, make_batches, split_dev, with_domain
from .distill import combined_loss, distill_loss
from .encoder import init_encoder_params, layer_prefix
from .evaluation import MetricsReport, evaluate, macro_f1
from .model import Segmenter
from .numerics import AdamState, Tensor, adam_step, gradients, no_grad, softmax, stack
from .numerics.tensor import reshape, tensor_sum

log = logging.getLogger(__name__)

# Learning rate for fine-tuning a pre-trained checkpoint; from-scratch toy runs use TrainConfig.lr.
FINETUNE_LR = 2e-5


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    dropout: float = 0.1
    alpha: float = 0.15
    seed: int = 0
    patience: int = 5
    dev_ratio: float = 0.1
    num_layers: int = 3
    num_heads: int = 4
    d_h: int = 64
    d_ff: int = 256
    max_seq_len: int = 128

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError(f"epochs and batch_size must be positive, got {self.epochs} and {self.batch_size}")

    def model_kwargs(self) -> dict:
        return dict(
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            d_h=self.d_h,
            d_ff=self.d_ff,
            max_seq_len=self.max_seq_len,
            dropout_p=self.dropout,
        )

    def replace(self, **changes) -> TrainConfig:
        return TrainConfig(**{**asdict(self), **changes})

    @classmethod
    def from_file(cls, path: str | os.PathLike, **overrides) -> TrainConfig:
        """Read ``key = value`` lines (``#`` comments allowed); ``overrides`` win."""
        types = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = int(val) if types[key] in (int, "int") else float(val)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    dev_f1: dict[str, list[float]] = field(default_factory=dict)
    macro_dev_f1: list[float] = field(default_factory=list)
    initial_loss: float | None = None
    best_epoch: int = 0
    best_dev_f1: float = -1.0
    epochs_completed: int = 0
    stopped_early: bool = False
    diverged: bool = False
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, report: TrainReport):
        super().__init__(message)
        self.report = report


Corpora = Mapping[str, Sequence[TaggedSentence]]


def _tag_domains(corpora: Corpora, names: Sequence[str]) -> dict[str, list[TaggedSentence]]:
    return {n: with_domain(corpora[n], DomainId(n, names.index(n))) for n in names}


def prepare_splits(
    corpora: Corpora, config: TrainConfig, dev: Corpora | None = None
) -> tuple[dict[str, list[TaggedSentence]], dict[str, list[TaggedSentence]]]:
    """Train/dev corpora per domain; holds out ``dev_ratio`` of each training set when no dev data is given."""
    names = list(corpora)
    if dev is None:
        train, dev_out = {}, {}
        for k, n in enumerate(names):
            train[n], dev_out[n] = split_dev(list(corpora[n]), config.dev_ratio, config.seed + k)
        return _tag_domains(train, names), _tag_domains(dev_out, names)
    return _tag_domains(corpora, names), _tag_domains(dev, names)


def evaluate_model(
    model: Segmenter,
    corpora: Corpora,
    domain_map: Mapping[str, str] | None = None,
    precision: str = "full",
    train_vocab: Mapping[str, set] | None = None,
) -> dict[str, MetricsReport]:
    """Per-domain metrics; ``domain_map`` picks which projection decodes each corpus."""
    out = {}
    for name, sents in corpora.items():
        dom = domain_map.get(name, name) if domain_map else name
        pred = model.predict(sents, dom, precision=precision)
        gold = [ts.words() for ts in sents]
        out[name] = evaluate(gold, pred, None if train_vocab is None else train_vocab.get(name))
    return out


def _mean_loss(model: Segmenter, corpora: Corpora, names: Sequence[str], config: TrainConfig) -> float:
    total, count = 0.0, 0
    with no_grad():
        for b in make_batches([corpora[n] for n in names], model.vocab, config.batch_size, 0, max_len=model.config.max_seq_len):
            total += float(model.seg_loss(b).data)
            count += len(b)
    return total / max(count, 1)


def _fit(
    model: Segmenter,
    train: Corpora,
    dev: Corpora,
    config: TrainConfig,
    trainable: Sequence[str],
    loss_fn: Callable[[Segmenter, Batch, np.random.Generator], Tensor],
    dev_domain_map: Mapping[str, str] | None = None,
    output_dir: str | os.PathLike | None = None,
) -> TrainReport:
    names = list(train)
    report = TrainReport(dev_f1={n: [] for n in dev})
    params = [model.params[k] for k in trainable]
    state = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    seeds = np.random.SeedSequence(config.seed)
    dropout_rng = np.random.default_rng(seeds.spawn(1)[0])
    report.initial_loss = _mean_loss(model, train, names, config)
    best_params: dict[str, np.ndarray] | None = None
    stale = 0
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        epoch_seed = int(np.random.SeedSequence([config.seed, epoch]).generate_state(1)[0])
        for batch in make_batches([train[n] for n in names], model.vocab, config.batch_size, epoch_seed,
                                  max_len=model.config.max_seq_len):
            loss = loss_fn(model, batch, dropout_rng)
            value = float(loss.data)
            if not math.isfinite(value):
                report.diverged = True
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}", report)
            adam_step(state, params, gradients(loss, params, fill_absent=False))
            total += value
            count += len(batch)
        report.epoch_losses.append(total / max(count, 1))
        metrics = evaluate_model(model, dev, dev_domain_map)
        for n, m in metrics.items():
            report.dev_f1[n].append(m.f1)
        score = macro_f1(metrics)
        report.macro_dev_f1.append(score)
        report.epochs_completed = epoch + 1
        log.info("epoch %d loss %.4f dev macro-F1 %.4f", epoch + 1, report.epoch_losses[-1], score)
        if score > report.best_dev_f1:
            report.best_dev_f1, report.best_epoch, stale = score, epoch + 1, 0
            best_params = {k: model.params[k].data.copy() for k in trainable}
        else:
            stale += 1
            if stale >= config.patience:
                report.stopped_early = True
                break
    if best_params is not None:
        for k, v in best_params.items():
            model.params[k].data = v
    if output_dir is not None:
        report.checkpoint = str(model.save(output_dir))
    return report


def _nll(model: Segmenter, batch: Batch, rng: np.random.Generator) -> Tensor:
    return model.seg_loss(batch, training=True, rng=rng)


def train_teacher(
    corpora: Corpora,
    config: TrainConfig,
    dev: Corpora | None = None,
    vocab: Vocabulary | None = None,
    output_dir=None,
) -> tuple[Segmenter, TrainReport]:
    """Joint multi-criteria training with private and shared projections."""
    if not corpora:
        raise ValueError("train_teacher needs at least one corpus")
    train, dev_c = prepare_splits(corpora, config, dev)
    vocab = vocab or Vocabulary.build(train.values())
    model = Segmenter.create(vocab, list(train), seed=config.seed, shared=True, **config.model_kwargs())
    report = _fit(model, train, dev_c, config, list(model.params), _nll, output_dir=output_dir)
    return model, report


def train_single_criteria(
    corpus: Corpora,
    config: TrainConfig,
    dev: Corpora | None = None,
    vocab: Vocabulary | None = None,
    output_dir=None,
) -> tuple[Segmenter, TrainReport]:
    """One corpus, private projection only; its output fills both halves of the emission input."""
    if len(corpus) != 1:
        raise ValueError(f"single-criteria training takes exactly one corpus, got {len(corpus)}")
    train, dev_c = prepare_splits(corpus, config, dev)
    vocab = vocab or Vocabulary.build(train.values())
    model = Segmenter.create(vocab, list(train), seed=config.seed, shared=False, **config.model_kwargs())
    report = _fit(model, train, dev_c, config, list(model.params), _nll, output_dir=output_dir)
    return model, report


def train_student(
    teacher: Segmenter,
    k_layers: int,
    corpora: Corpora,
    config: TrainConfig,
    dev: Corpora | None = None,
    output_dir=None,
) -> tuple[Segmenter, TrainReport]:
    """Distill ``teacher`` into its bottom ``k_layers``: minimize NLL + alpha * logit distance.

    The teacher is only read, never updated.
    """
    train, dev_c = prepare_splits(corpora, config, dev)
    missing = [n for n in train if n not in teacher.domains]
    if missing:
        raise ValueError(f"teacher has no projection for domains {missing}")
    student = teacher.truncated(k_layers)
    student.config = student.config.replace(dropout_p=config.dropout)
    alpha = config.alpha

    def loss_fn(model: Segmenter, batch: Batch, rng: np.random.Generator) -> Tensor:
        scores = model.logits(batch, training=True, rng=rng)
        seg = crf.batch_nll(scores, model.params["crf.trans"], batch.tags, batch.lengths)
        if alpha == 0:
            return seg
        with no_grad():
            target = teacher.logits(batch).data
        return combined_loss(seg, distill_loss(scores, target, batch.lengths), alpha)

    report = _fit(student, train, dev_c, config, list(student.params), loss_fn, output_dir=output_dir)
    return student, report


PROBE_KEY = "probe.layer_logits"


def layer_attention_probe(
    model: Segmenter,
    corpora: Corpora,
    config: TrainConfig,
    dev: Corpora | None = None,
    probe_lr: float = 0.05,
) -> tuple[np.ndarray, TrainReport]:
    """Learn a softmax mixture over the frozen encoder's layer outputs.

    Only the mixture logits, projections and CRF are trained, on a copy of the
    model. The mixture logits get their own learning rate ``probe_lr``, since
    at the encoder's rate they would barely leave uniform. Returns the learned
    weights (index 0 = first transformer layer).
    """
    n_layers = model.config.num_layers
    if n_layers < 2:
        raise ValueError(f"layer probe needs a multi-layer encoder, got {n_layers} layer(s)")
    probe = model.copy()
    probe.params[PROBE_KEY] = Tensor(np.zeros(n_layers, dtype=probe.params["crf.W_s"].dtype), requires_grad=True)
    heads = [k for k in probe.params if k.startswith(("proj.", "crf."))]
    train, _ = prepare_splits(corpora, config, dev)

    def mixed_scores(m: Segmenter, batch: Batch) -> Tensor:
        with no_grad():
            outputs, _ = m.hidden_layers(batch.ids, batch.lengths)
        layers = stack([Tensor(o.data) for o in outputs[1:]], axis=0)
        w = reshape(softmax(m.params[PROBE_KEY]), (n_layers, 1, 1, 1))
        return m.head(tensor_sum(w * layers, axis=0), batch.domain)

    def loss_fn(m: Segmenter, batch: Batch, rng: np.random.Generator) -> Tensor:
        return crf.batch_nll(mixed_scores(m, batch), m.params["crf.trans"], batch.tags, batch.lengths)

    report = _fit_probe(probe, train, config, heads, probe_lr, loss_fn)
    return probe_weights(probe.params[PROBE_KEY].data), report


def with_noise_layers(model: Segmenter, extra: int, seed: int = 0) -> Segmenter:
    """Copy of ``model`` with ``extra`` freshly initialized, untrained layers stacked on top.

    The original top layer (1-based index ``model.config.num_layers``) stays
    the one the heads were trained on; the layers above only scramble it.
    """
    if extra < 1:
        raise ValueError(f"extra must be positive, got {extra}")
    out = model.copy()
    n = model.config.num_layers
    cfg = model.config.replace(num_layers=n + extra)
    dtype = model.params["crf.W_s"].dtype
    fresh = init_encoder_params(cfg, seed, dtype)
    for name, t in fresh.items():
        if any(name.startswith(layer_prefix(i)) for i in range(n, n + extra)):
            out.params[name] = t
    out.config = cfg
    return out


def probe_weights(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def _fit_probe(probe, train, config, heads, probe_lr, loss_fn) -> TrainReport:
    # judged by training loss only; dev F1 would need the mixture inside Segmenter.predict
    report = TrainReport()
    groups = [
        ([probe.params[k] for k in heads], AdamState(lr=config.lr, weight_decay=0.0)),
        ([probe.params[PROBE_KEY]], AdamState(lr=probe_lr, weight_decay=0.0)),
    ]
    params = [p for group, _ in groups for p in group]
    rng = np.random.default_rng(config.seed)
    names = list(train)
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        for batch in make_batches([train[n] for n in names], probe.vocab, config.batch_size, config.seed + epoch,
                                  max_len=probe.config.max_seq_len):
            loss = loss_fn(probe, batch, rng)
            grads = gradients(loss, params, fill_absent=False)
            start = 0
            for group, state in groups:
                adam_step(state, group, grads[start : start + len(group)])
                start += len(group)
            total += float(loss.data)
            count += len(batch)
        report.epoch_losses.append(total / max(count, 1))
        report.epochs_completed = epoch + 1
    return report
