import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mccws.encoder import (
    AttentionRecord,
    EncoderConfig,
    embed,
    encode,
    init_encoder_params,
    local_mass,
    mean_attention_by_offset,
    truncate,
)
from mccws.numerics import Tensor


def small(num_layers=2, **kw):
    cfg = EncoderConfig(vocab_size=12, num_layers=num_layers, num_heads=2, d_h=8, d_ff=16, max_seq_len=16, **kw)
    return cfg, init_encoder_params(cfg, seed=5)


def scalar_layer_norm(v, g, b, eps=1e-6):
    mu = sum(v) / len(v)
    var = sum((x - mu) ** 2 for x in v) / len(v)
    return [g[i] * (v[i] - mu) / math.sqrt(var + eps) + b[i] for i in range(len(v))]


def scalar_affine(v, W, b):
    return [sum(v[k] * W[k][j] for k in range(len(v))) + b[j] for j in range(len(b))]


def scalar_gelu(x):
    return 0.5 * x * (1 + math.erf(x / math.sqrt(2)))


def scalar_forward(ids, cfg, P):
    """Post-norm transformer layer traced with Python floats and lists."""
    d, H = cfg.d_h, cfg.num_heads
    dk = d // H
    p = {k: v.data.tolist() for k, v in P.items()}
    x = [
        scalar_layer_norm([p["enc.tok_emb"][t][j] + p["enc.pos_emb"][i][j] for j in range(d)], p["enc.emb_ln.g"], p["enc.emb_ln.b"])
        for i, t in enumerate(ids)
    ]
    n = len(ids)
    for layer in range(cfg.num_layers):
        pre = f"enc.layer{layer}."
        q = [scalar_affine(r, p[pre + "attn.Wq"], p[pre + "attn.bq"]) for r in x]
        k = [scalar_affine(r, p[pre + "attn.Wk"], p[pre + "attn.bk"]) for r in x]
        v = [scalar_affine(r, p[pre + "attn.Wv"], p[pre + "attn.bv"]) for r in x]
        ctx = [[0.0] * d for _ in range(n)]
        for h in range(H):
            sl = range(h * dk, (h + 1) * dk)
            for i in range(n):
                logits = [sum(q[i][c] * k[j][c] for c in sl) / math.sqrt(dk) for j in range(n)]
                m = max(logits)
                e = [math.exp(z - m) for z in logits]
                w = [z / sum(e) for z in e]
                for c in sl:
                    ctx[i][c] = sum(w[j] * v[j][c] for j in range(n))
        attn = [scalar_affine(r, p[pre + "attn.Wo"], p[pre + "attn.bo"]) for r in ctx]
        x = [scalar_layer_norm([x[i][j] + attn[i][j] for j in range(d)], p[pre + "ln1.g"], p[pre + "ln1.b"]) for i in range(n)]
        ff = [[scalar_gelu(z) for z in scalar_affine(r, p[pre + "ffn.W1"], p[pre + "ffn.b1"])] for r in x]
        ff = [scalar_affine(r, p[pre + "ffn.W2"], p[pre + "ffn.b2"]) for r in ff]
        x = [scalar_layer_norm([x[i][j] + ff[i][j] for j in range(d)], p[pre + "ln2.g"], p[pre + "ln2.b"]) for i in range(n)]
    return np.array(x)


class TestEmbed:
    def test_zero_tables(self):
        cfg, P = small()
        P["enc.tok_emb"].data[:] = 0
        P["enc.pos_emb"].data[:] = 0
        np.testing.assert_allclose(embed([1, 2, 3], cfg, P).data, 0.0, atol=1e-12)

    def test_deterministic(self):
        cfg, P = small()
        np.testing.assert_array_equal(embed([4, 5], cfg, P).data, embed([4, 5], cfg, P).data)

    def test_positions_distinguish_repeats(self):
        cfg, P = small()
        out = embed([7, 7, 7], cfg, P).data
        assert not np.allclose(out[0], out[1]) and not np.allclose(out[1], out[2])

    def test_over_length(self):
        cfg, P = small()
        with pytest.raises(ValueError, match="max_seq_len"):
            embed([1] * 17, cfg, P)


class TestEncode:
    def test_empty_stack_is_identity(self):
        cfg, P = small(num_layers=0)
        e = embed([1, 2, 3], cfg, P)
        h, _ = encode(e, cfg, P)
        np.testing.assert_array_equal(h.data, e.data)

    def test_attention_rows_sum_to_one(self):
        cfg, P = small()
        h, rec = encode(embed([1, 2, 3, 4], cfg, P), cfg, P, capture_attention=True)
        assert h.shape == (4, 8)
        assert len(rec.layers) == 2
        for layer in rec.layers:
            assert layer.shape == (2, 4, 4)
            np.testing.assert_allclose(layer.sum(axis=-1), 1.0, atol=1e-5)
            assert np.all((layer >= 0) & (layer <= 1))

    def test_one_layer_matches_scalar_trace(self):
        cfg, P = small(num_layers=1)
        rng = np.random.default_rng(0)
        for t in P.values():  # non-trivial biases and norms
            if t.ndim == 1:
                t.data = t.data + rng.normal(scale=0.1, size=t.shape)
        h, _ = encode(embed([3, 9], cfg, P), cfg, P)
        np.testing.assert_allclose(h.data, scalar_forward([3, 9], cfg, P), rtol=1e-10, atol=1e-10)

    def test_padding_gets_zero_attention(self):
        cfg, P = small()
        ids = np.array([[1, 2, 3, 0, 0], [4, 5, 6, 7, 8]])
        h, recs = encode(embed(ids, cfg, P), cfg, P, capture_attention=True, lengths=np.array([3, 5]))
        solo, _ = encode(embed(ids[0, :3], cfg, P), cfg, P)
        np.testing.assert_allclose(h.data[0, :3], solo.data, atol=1e-10)
        assert recs[0].layers[0].shape == (2, 3, 3)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 1000), st.integers(2, 6))
    def test_permutation_equivariant_without_positions(self, seed, n):
        cfg, P = small()
        P["enc.pos_emb"].data[:] = 0
        r = np.random.default_rng(seed)
        ids = r.integers(0, 12, size=n)
        perm = r.permutation(n)
        a, _ = encode(embed(ids, cfg, P), cfg, P)
        b, _ = encode(embed(ids[perm], cfg, P), cfg, P)
        np.testing.assert_allclose(a.data[perm], b.data, atol=1e-10)


class TestTruncate:
    def test_full_depth_identical(self):
        cfg, P = small(num_layers=3)
        S, scfg = truncate(P, cfg, 3)
        e = [1, 5, 2]
        np.testing.assert_array_equal(encode(embed(e, cfg, P), cfg, P)[0].data, encode(embed(e, scfg, S), scfg, S)[0].data)

    def test_zero_layers_is_embeddings(self):
        cfg, P = small(num_layers=3)
        S, scfg = truncate(P, cfg, 0)
        e = embed([1, 5, 2], scfg, S)
        np.testing.assert_array_equal(encode(e, scfg, S)[0].data, e.data)

    def test_bottom_layers_copied(self):
        cfg = EncoderConfig(vocab_size=10, num_layers=12, num_heads=2, d_h=8, d_ff=8)
        P = init_encoder_params(cfg, seed=1)
        S, scfg = truncate(P, cfg, 3)
        assert scfg.num_layers == 3
        for name, t in S.items():
            assert np.array_equal(t.data, P[name].data)
            assert t.data is not P[name].data
        assert not any(name.startswith(("enc.layer3.", "enc.layer11.")) for name in S)
        assert sum(name.startswith("enc.layer2.") for name in S) == 16

    def test_too_deep(self):
        cfg, P = small(num_layers=2)
        with pytest.raises(ValueError):
            truncate(P, cfg, 3)


class TestMeanAttention:
    def test_single_record(self):
        row = np.array([0.1, 0.2, 0.7])
        layer = np.array([[[1, 0, 0], row, [0, 0, 1]]], dtype=float)
        np.testing.assert_allclose(mean_attention_by_offset([AttentionRecord([layer])], 1), row)

    def test_sums_to_one(self):
        cfg, P = small()
        recs = []
        for ids in ([1, 2, 3, 4], [5, 6, 7], [8, 9, 10, 11, 1]):
            _, rec = encode(embed(ids, cfg, P), cfg, P, capture_attention=True)
            recs.append(rec)
        out = mean_attention_by_offset(recs, 2)
        assert out.sum() == pytest.approx(1.0, abs=1e-5)

    def test_uniform_records(self):
        layer = np.full((2, 5, 5), 0.2)
        out = mean_attention_by_offset([AttentionRecord([layer, layer])] * 3, 4)
        np.testing.assert_allclose(out, 0.2)
        assert local_mass(out, 4, radius=1) == pytest.approx(0.4)

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_attention_by_offset([], 0)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=5, d_h=10, num_heads=3)
