"""Character embeddings plus a post-norm transformer encoder stack."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import (
    FULL,
    HALF,
    ShapeError,
    Tensor,
    dropout,
    embedding,
    gelu,
    layer_norm,
    quantize_half,
    reshape,
    softmax,
    transpose,
)
from .numerics.init import xavier_uniform_init


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 3
    num_heads: int = 4
    d_h: int = 64
    d_ff: int = 256
    max_seq_len: int = 128
    dropout_p: float = 0.1

    def __post_init__(self):
        if self.d_h % self.num_heads:
            raise ValueError(f"d_h={self.d_h} is not divisible by num_heads={self.num_heads}")
        if self.num_layers < 0:
            raise ValueError(f"num_layers must be >= 0, got {self.num_layers}")

    @property
    def head_dim(self) -> int:
        return self.d_h // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> EncoderConfig:
        return EncoderConfig(**{**asdict(self), **changes})


@dataclass
class AttentionRecord:
    """Softmaxed attention for one sentence: one [heads, n, n] array per layer."""

    layers: list[np.ndarray] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.layers[0].shape[-1] if self.layers else 0

    def to_json(self) -> list:
        return [[head.tolist() for head in layer] for layer in self.layers]


_LAYER_PARAMS = (
    ("attn.Wq", "dd"), ("attn.bq", "d"), ("attn.Wk", "dd"), ("attn.bk", "d"),
    ("attn.Wv", "dd"), ("attn.bv", "d"), ("attn.Wo", "dd"), ("attn.bo", "d"),
    ("ln1.g", "g"), ("ln1.b", "d"),
    ("ffn.W1", "df"), ("ffn.b1", "f"), ("ffn.W2", "fd"), ("ffn.b2", "d"),
    ("ln2.g", "g"), ("ln2.b", "d"),
)  # fmt: skip


def layer_prefix(i: int) -> str:
    return f"enc.layer{i}."


def init_encoder_params(cfg: EncoderConfig, seed: int, dtype=np.float64) -> dict[str, Tensor]:
    def xavier(name, shape):
        return Tensor(xavier_uniform_init(shape, seed, dtype, name), requires_grad=True)

    def const(value, n):
        return Tensor(np.full(n, value, dtype=dtype), requires_grad=True)

    d, f = cfg.d_h, cfg.d_ff
    params = {
        "enc.tok_emb": xavier("enc.tok_emb", (cfg.vocab_size, d)),
        "enc.pos_emb": xavier("enc.pos_emb", (cfg.max_seq_len, d)),
        "enc.emb_ln.g": const(1.0, d),
        "enc.emb_ln.b": const(0.0, d),
    }
    shapes = {"dd": (d, d), "df": (d, f), "fd": (f, d)}
    for i in range(cfg.num_layers):
        pre = layer_prefix(i)
        for name, kind in _LAYER_PARAMS:
            key = pre + name
            if kind in shapes:
                params[key] = xavier(key, shapes[kind])
            elif kind == "g":
                params[key] = const(1.0, d)
            else:
                params[key] = const(0.0, f if kind == "f" else d)
    return params


def embed(
    char_ids,
    cfg: EncoderConfig,
    params: dict[str, Tensor],
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Token plus position embeddings, layer-normed; [len, d_h] or [batch, len, d_h]."""
    ids = np.asarray(char_ids, dtype=np.int64)
    n = ids.shape[-1]
    if n > cfg.max_seq_len:
        raise ValueError(f"sequence of length {n} exceeds max_seq_len={cfg.max_seq_len}; truncate first")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ValueError(f"character id out of range [0, {cfg.vocab_size})")
    x = embedding(params["enc.tok_emb"], ids) + embedding(params["enc.pos_emb"], np.arange(n))
    x = layer_norm(x, params["enc.emb_ln.g"], params["enc.emb_ln.b"])
    return dropout(x, cfg.dropout_p, rng, training)


def _dense(x: Tensor, W: Tensor, b: Tensor, precision: str) -> Tensor:
    if precision == HALF:
        return quantize_half(quantize_half(x) @ quantize_half(W)) + b
    return x @ W + b


def _attention(
    x: Tensor,
    params: dict[str, Tensor],
    pre: str,
    cfg: EncoderConfig,
    key_mask: np.ndarray | None,
    precision: str,
) -> tuple[Tensor, Tensor]:
    bsz, n, d = x.shape
    h, dk = cfg.num_heads, cfg.head_dim

    def heads(t: Tensor) -> Tensor:
        return transpose(reshape(t, (bsz, n, h, dk)), (0, 2, 1, 3))

    q = heads(_dense(x, params[pre + "attn.Wq"], params[pre + "attn.bq"], precision))
    k = heads(_dense(x, params[pre + "attn.Wk"], params[pre + "attn.bk"], precision))
    v = heads(_dense(x, params[pre + "attn.Wv"], params[pre + "attn.bv"], precision))
    scores = (q @ transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dk))
    probs = softmax(scores, axis=-1, additive_mask=key_mask)
    ctx = reshape(transpose(probs @ v, (0, 2, 1, 3)), (bsz, n, d))
    return _dense(ctx, params[pre + "attn.Wo"], params[pre + "attn.bo"], precision), probs


def _block(x, params, i, cfg, key_mask, training, rng, precision):
    pre = layer_prefix(i)
    attn, probs = _attention(x, params, pre, cfg, key_mask, precision)
    x = layer_norm(x + dropout(attn, cfg.dropout_p, rng, training), params[pre + "ln1.g"], params[pre + "ln1.b"])
    ff = gelu(_dense(x, params[pre + "ffn.W1"], params[pre + "ffn.b1"], precision))
    ff = _dense(ff, params[pre + "ffn.W2"], params[pre + "ffn.b2"], precision)
    x = layer_norm(x + dropout(ff, cfg.dropout_p, rng, training), params[pre + "ln2.g"], params[pre + "ln2.b"])
    return x, probs


def _key_mask(lengths, bsz: int, n: int, dtype) -> np.ndarray | None:
    if lengths is None:
        return None
    lengths = np.asarray(lengths)
    if lengths.shape != (bsz,):
        raise ShapeError(f"lengths {lengths.shape} do not match batch size {bsz}")
    valid = np.arange(n)[None, :] < lengths[:, None]
    return np.where(valid, 0.0, -np.inf).astype(dtype)[:, None, None, :]


def encode_layers(
    embeddings: Tensor,
    cfg: EncoderConfig,
    params: dict[str, Tensor],
    lengths=None,
    training: bool = False,
    rng: np.random.Generator | None = None,
    precision: str = FULL,
    num_layers: int | None = None,
) -> tuple[list[Tensor], list[np.ndarray]]:
    """Run the stack; returns every layer's output (index 0 = embeddings) and attention probs."""
    single = embeddings.ndim == 2
    x = reshape(embeddings, (1,) + embeddings.shape) if single else embeddings
    if x.ndim != 3 or x.shape[-1] != cfg.d_h:
        raise ShapeError(f"encode expects [batch, len, {cfg.d_h}] embeddings, got {embeddings.shape}")
    bsz, n, _ = x.shape
    key_mask = _key_mask(lengths, bsz, n, x.dtype)
    outputs, probs = [x], []
    for i in range(cfg.num_layers if num_layers is None else num_layers):
        x, p = _block(x, params, i, cfg, key_mask, training, rng, precision)
        outputs.append(x)
        probs.append(p.data)
    if single:
        outputs = [reshape(o, o.shape[1:]) for o in outputs]
    return outputs, probs


def attention_records(probs: list[np.ndarray], lengths) -> list[AttentionRecord]:
    """Split batched [batch, heads, n, n] attention into per-sentence records."""
    if not probs:
        return [AttentionRecord([]) for _ in np.atleast_1d(lengths)]
    lengths = np.atleast_1d(lengths) if lengths is not None else np.full(probs[0].shape[0], probs[0].shape[-1])
    return [AttentionRecord([p[b, :, :n, :n].copy() for p in probs]) for b, n in enumerate(lengths)]


def encode(
    embeddings: Tensor,
    cfg: EncoderConfig,
    params: dict[str, Tensor],
    capture_attention: bool = False,
    lengths=None,
    training: bool = False,
    rng: np.random.Generator | None = None,
    precision: str = FULL,
):
    """Contextual features for each character.

    Returns ``(hidden, records)``; ``records`` is None unless
    ``capture_attention``, else one AttentionRecord per sentence (a single
    record for 2-D input).
    """
    outputs, probs = encode_layers(embeddings, cfg, params, lengths, training, rng, precision)
    if not capture_attention:
        return outputs[-1], None
    if embeddings.ndim == 2:
        n = embeddings.shape[0]
        return outputs[-1], attention_records(probs, [n])[0]
    if lengths is None:
        lengths = np.full(embeddings.shape[0], embeddings.shape[1])
    return outputs[-1], attention_records(probs, lengths)


def truncate(teacher_params: dict[str, Tensor], cfg: EncoderConfig, k: int) -> tuple[dict[str, Tensor], EncoderConfig]:
    """Student encoder made of the teacher's embeddings and its bottom ``k`` layers (copied)."""
    if k < 0 or k > cfg.num_layers:
        raise ValueError(f"cannot keep {k} layers of a {cfg.num_layers}-layer encoder")
    keep = {"enc.tok_emb", "enc.pos_emb", "enc.emb_ln.g", "enc.emb_ln.b"}
    keep.update(layer_prefix(i) + name for i in range(k) for name, _ in _LAYER_PARAMS)
    student = {
        name: Tensor(t.data.copy(), requires_grad=True, precision=t.precision)
        for name, t in teacher_params.items()
        if name in keep
    }
    return student, cfg.replace(num_layers=k)


def mean_attention_by_offset(records: list[AttentionRecord], query_index: int) -> np.ndarray:
    """Attention row of ``query_index`` averaged over sentences, layers and heads.

    Rows of different sentence lengths are zero-padded to the longest, so the
    result still sums to one.
    """
    if not records:
        raise ValueError("mean_attention_by_offset needs at least one attention record")
    width = max(r.length for r in records)
    total = np.zeros(width)
    count = 0
    for r in records:
        if query_index >= r.length:
            raise ValueError(f"query index {query_index} outside a sentence of length {r.length}")
        for layer in r.layers:
            rows = layer[:, query_index, :]
            total[: rows.shape[-1]] += rows.sum(axis=0)
            count += rows.shape[0]
    if count == 0:
        raise ValueError("attention records contain no layers")
    return total / count


def local_mass(distribution: np.ndarray, query_index: int, radius: int = 3) -> float:
    lo, hi = max(0, query_index - radius), query_index + radius + 1
    return float(np.asarray(distribution)[lo:hi].sum())
