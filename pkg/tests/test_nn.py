import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssbcodec import nn
from ssbcodec.errors import DimensionError

from support import random_attention_weights


class TestMatmul:
    def test_identity(self):
        a = np.eye(2, dtype=np.float32)
        b = np.array([[1, 2], [3, 4]], dtype=np.float32)
        assert np.array_equal(nn.matmul(a, b), b)

    def test_hand_case(self):
        a = np.array([[1, 0], [0, 0]], dtype=np.float32)
        b = np.array([[0, 1], [1, 0]], dtype=np.float32)
        expected = np.array([[0, 1], [0, 0]], dtype=np.float32)
        assert np.array_equal(nn.matmul(a, b), expected)

    def test_matches_naive_oracle(self, rng):
        a = rng.standard_normal((5, 7)).astype(np.float32)
        b = rng.standard_normal((7, 3)).astype(np.float32)
        oracle = np.zeros((5, 3), dtype=np.float64)
        for i in range(5):
            for j in range(3):
                for k in range(7):
                    oracle[i, j] += float(a[i, k]) * float(b[k, j])
        assert np.allclose(nn.matmul(a, b), oracle, atol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            nn.matmul(np.zeros((2, 3), np.float32), np.zeros((2, 3), np.float32))


class TestSoftmax:
    def test_symmetry(self):
        out = nn.softmax(np.array([[0.0, 0.0]], dtype=np.float32))
        assert np.allclose(out, [[0.5, 0.5]])

    def test_large_input_no_overflow(self):
        out = nn.softmax(np.array([[1000.0, 0.0]], dtype=np.float32))
        assert np.isfinite(out).all()
        assert out[0, 0] > 0.999

    def test_masked_entry_vanishes(self):
        out = nn.softmax(np.array([[0.0, nn.MASK_FILL]], dtype=np.float32))
        assert out[0, 0] == 1.0
        assert out[0, 1] == 0.0

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 1e4))
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one(self, seed, scale):
        r = np.random.default_rng(seed)
        v = (r.standard_normal((4, 9)) * scale).astype(np.float32)
        out = nn.softmax(v)
        assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-6)


class TestLayerNorm:
    def test_matches_float64_oracle(self, rng):
        x = rng.standard_normal((6, 16)).astype(np.float32)
        gamma = rng.standard_normal(16).astype(np.float32)
        beta = rng.standard_normal(16).astype(np.float32)
        x64 = x.astype(np.float64)
        mean = x64.mean(axis=-1, keepdims=True)
        var = ((x64 - mean) ** 2).mean(axis=-1, keepdims=True)
        oracle = (x64 - mean) / np.sqrt(var + 1e-5) * gamma + beta
        assert np.allclose(nn.layer_norm(x, gamma, beta), oracle, atol=1e-5)


class TestGelu:
    def test_zero(self):
        assert nn.gelu(np.zeros(3, np.float32)).tolist() == [0.0, 0.0, 0.0]

    def test_matches_float64_oracle(self, rng):
        x = rng.standard_normal(64).astype(np.float32) * 3
        x64 = x.astype(np.float64)
        c = math.sqrt(2.0 / math.pi)
        oracle = 0.5 * x64 * (1.0 + np.tanh(c * (x64 + 0.044715 * x64 ** 3)))
        assert np.allclose(nn.gelu(x), oracle, atol=1e-6)


class TestPixelOps:
    def test_unshuffle_shape(self):
        t = np.zeros((1, 4, 4), np.float32)
        assert nn.pixel_unshuffle(t, 2).shape == (4, 2, 2)

    def test_single_block_layout(self):
        t = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
        out = nn.pixel_unshuffle(t, 2)
        assert out.shape == (4, 1, 1)
        assert out[:, 0, 0].tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_matches_index_map_oracle(self, rng):
        for r in (2, 4):
            c, h, w = 3, 2 * r, 3 * r
            t = rng.standard_normal((c, h, w)).astype(np.float32)
            out = nn.pixel_unshuffle(t, r)
            oracle = np.zeros_like(out)
            for ch in range(c):
                for i in range(r):
                    for j in range(r):
                        for y in range(h // r):
                            for x in range(w // r):
                                oracle[ch * r * r + i * r + j, y, x] = t[ch, y * r + i, x * r + j]
            assert np.array_equal(out, oracle)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4]))
    @settings(max_examples=40, deadline=None)
    def test_shuffle_inverts_unshuffle(self, seed, r):
        rr = np.random.default_rng(seed)
        t = rr.standard_normal((2, 2 * r, r)).astype(np.float32)
        assert np.array_equal(nn.pixel_shuffle(nn.pixel_unshuffle(t, r), r), t)

    def test_divisibility_errors(self):
        with pytest.raises(DimensionError):
            nn.pixel_unshuffle(np.zeros((1, 3, 4), np.float32), 2)
        with pytest.raises(DimensionError):
            nn.pixel_shuffle(np.zeros((3, 2, 2), np.float32), 2)


def naive_conv2d(x, w, b, stride, padding):
    cin, H, W = x.shape
    cout, _, kh, kw = w.shape
    hout = (H + 2 * padding - kh) // stride + 1
    wout = (W + 2 * padding - kw) // stride + 1
    xp = np.zeros((cin, H + 2 * padding, W + 2 * padding), np.float64)
    xp[:, padding:padding + H, padding:padding + W] = x
    out = np.zeros((cout, hout, wout), np.float64)
    for o in range(cout):
        for i in range(hout):
            for j in range(wout):
                acc = 0.0
                for c in range(cin):
                    for ki in range(kh):
                        for kj in range(kw):
                            acc += xp[c, i * stride + ki, j * stride + kj] * w[o, c, ki, kj]
                out[o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def naive_conv_transpose2d(x, w, b, stride, padding):
    cin, H, W = x.shape
    _, cout, kh, kw = w.shape
    hout = (H - 1) * stride - 2 * padding + kh
    wout = (W - 1) * stride - 2 * padding + kw
    out = np.zeros((cout, hout, wout), np.float64)
    for c in range(cin):
        for o in range(cout):
            for i in range(H):
                for j in range(W):
                    for ki in range(kh):
                        for kj in range(kw):
                            oi = i * stride - padding + ki
                            oj = j * stride - padding + kj
                            if 0 <= oi < hout and 0 <= oj < wout:
                                out[o, oi, oj] += x[c, i, j] * w[c, o, ki, kj]
    if b is not None:
        out += b.reshape(cout, 1, 1)
    return out


class TestConv:
    def test_conv2d_matches_naive_oracle(self, rng):
        for stride, padding, k in ((1, 0, 3), (2, 1, 3), (2, 2, 5), (1, 0, 1)):
            x = rng.standard_normal((3, 8, 9)).astype(np.float32)
            w = rng.standard_normal((4, 3, k, k)).astype(np.float32)
            b = rng.standard_normal(4).astype(np.float32)
            got = nn.conv2d(x, w, b, stride=stride, padding=padding)
            oracle = naive_conv2d(x, w, b, stride, padding)
            assert got.shape == oracle.shape
            assert np.allclose(got, oracle, atol=1e-5)

    def test_conv1x1_is_per_pixel_linear(self, rng):
        x = rng.standard_normal((3, 4, 4)).astype(np.float32)
        w = rng.standard_normal((2, 3, 1, 1)).astype(np.float32)
        got = nn.conv2d(x, w)
        oracle = np.einsum('oc,chw->ohw', w[:, :, 0, 0], x)
        assert np.allclose(got, oracle, atol=1e-6)

    def test_conv_transpose2d_matches_naive_oracle(self, rng):
        for stride, padding, k in ((1, 0, 3), (2, 1, 4), (2, 0, 2)):
            x = rng.standard_normal((3, 5, 4)).astype(np.float32)
            w = rng.standard_normal((3, 2, k, k)).astype(np.float32)
            b = rng.standard_normal(2).astype(np.float32)
            got = nn.conv_transpose2d(x, w, b, stride=stride, padding=padding)
            oracle = naive_conv_transpose2d(x, w, b, stride, padding)
            assert got.shape == oracle.shape
            assert np.allclose(got, oracle, atol=1e-5)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            nn.conv2d(np.zeros((3, 4, 4), np.float32), np.zeros((2, 4, 1, 1), np.float32))


def dense_attention_oracle(x, weights, heads, bias=None):
    """Unmasked attention on the full token set, float64, naive per head."""
    x = x.astype(np.float64)
    n, d = x.shape
    dh = d // heads
    q = x @ weights.wq.astype(np.float64) + weights.bq
    k = x @ weights.wk.astype(np.float64) + weights.bk
    v = x @ weights.wv.astype(np.float64) + weights.bv
    ctx = np.zeros((n, d), np.float64)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
        if bias is not None:
            scores = scores + bias[h].astype(np.float64)
        e = np.exp(scores - scores.max(axis=-1, keepdims=True))
        attn = e / e.sum(axis=-1, keepdims=True)
        ctx[:, sl] = attn @ v[:, sl]
    return ctx @ weights.wo.astype(np.float64) + weights.bo


class TestMaskedMhsa:
    def test_single_token(self, rng):
        w = random_attention_weights(rng, 8)
        x = rng.standard_normal((1, 8)).astype(np.float32)
        out = nn.masked_mhsa(x, np.ones((1, 1), bool), w, heads=2)
        expected = nn.linear(nn.linear(x, w.wv, w.bv), w.wo, w.bo)
        assert np.array_equal(out, expected)

    def test_matches_per_block_dense_oracle(self, rng):
        w = random_attention_weights(rng, 8)
        x = rng.standard_normal((4, 8)).astype(np.float32)
        bias = (rng.standard_normal((2, 4, 4)) * 0.2).astype(np.float32)
        blocks = [[0, 2], [1, 3]]
        allow = np.zeros((4, 4), bool)
        for blk in blocks:
            for p in blk:
                for q in blk:
                    allow[p, q] = True
        got = nn.masked_mhsa(x, allow, w, heads=2, bias=bias)
        for blk in blocks:
            idx = np.array(blk)
            sub_bias = bias[:, idx][:, :, idx]
            oracle = dense_attention_oracle(x[idx], w, heads=2, bias=sub_bias)
            assert np.allclose(got[idx], oracle, atol=1e-5)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 7))
    @settings(max_examples=30, deadline=None)
    def test_block_diagonal_independence(self, seed, cut):
        """Tokens outside a block never influence outputs inside it."""
        r = np.random.default_rng(seed)
        n, d, heads = 8, 8, 2
        w = random_attention_weights(np.random.default_rng(7), d)
        bias = (np.random.default_rng(8).standard_normal((heads, n, n)) * 0.3).astype(np.float32)
        groups = np.zeros(n, int)
        groups[cut:] = 1
        allow = groups[:, None] == groups[None, :]
        x1 = r.standard_normal((n, d)).astype(np.float32)
        x2 = x1.copy()
        x2[groups == 1] = r.standard_normal((int((groups == 1).sum()), d)).astype(np.float32)
        out1 = nn.masked_mhsa(x1, allow, w, heads, bias=bias)
        out2 = nn.masked_mhsa(x2, allow, w, heads, bias=bias)
        assert np.array_equal(out1[groups == 0], out2[groups == 0])

    def test_head_divisibility_error(self, rng):
        w = random_attention_weights(rng, 8)
        with pytest.raises(DimensionError):
            nn.masked_mhsa(np.zeros((2, 8), np.float32), np.ones((2, 2), bool), w, heads=3)
