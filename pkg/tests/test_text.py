import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motion2d.text import (
    ExternalFeatureStore,
    TextError,
    TextFeatures,
    TextPipeline,
    chunk_and_encode,
    concat_dual_encoders,
    sinusoidal_codes,
    standin_encoder,
)


class ZeroEncoder:
    """Contract-conforming encoder that emits all-zero features."""

    def __init__(self, local_dim=4, token_limit=77):
        self.local_dim = local_dim
        self.token_limit = token_limit
        self._inner = standin_encoder(local_dim=local_dim, token_limit=token_limit)

    def tokenize(self, text):
        return self._inner.tokenize(text)

    def encode(self, ids):
        return np.zeros((len(ids), self.local_dim)), np.zeros(self.local_dim)


def test_standin_deterministic():
    enc = standin_encoder(seed=3)
    a = chunk_and_encode("two people waving", enc)
    b = chunk_and_encode("two people waving", enc)
    assert np.array_equal(a.f_local, b.f_local)
    assert np.array_equal(a.f_pooling, b.f_pooling)
    enc2 = standin_encoder(seed=3)
    c = chunk_and_encode("two people waving", enc2)
    assert np.array_equal(a.f_local, c.f_local)


def test_standin_order_sensitive():
    # Position codes make the local features order-dependent; the pooled
    # mean of (embedding + position) is order-invariant by algebra.
    enc = standin_encoder(seed=0)
    ab = chunk_and_encode("a b", enc)
    ba = chunk_and_encode("b a", enc)
    assert not np.array_equal(ab.f_local, ba.f_local)
    assert np.allclose(ab.f_pooling, ba.f_pooling)


def test_chunked_equals_direct_within_limit():
    enc = standin_encoder(seed=1, token_limit=77)
    text = "someone walks across the room and sits down"
    ids = enc.tokenize(text)
    assert len(ids) <= enc.token_limit
    direct_local, direct_pooled = enc.encode(ids)
    out = chunk_and_encode(text, enc)
    assert np.array_equal(out.f_local, direct_local)
    assert np.array_equal(out.f_pooling, direct_pooled)


def test_chunking_doubles_rows():
    enc = standin_encoder(seed=1, token_limit=5)
    text = " ".join(f"w{i}" for i in range(10))
    out = chunk_and_encode(text, enc)
    assert out.n_tokens == 10
    assert out.f_local.shape == (10, enc.local_dim)


def test_chunk_pooling_is_mean_of_chunk_pools():
    enc = standin_encoder(seed=2, token_limit=4)
    words = [f"tok{i}" for i in range(8)]
    text = " ".join(words)
    ids = enc.tokenize(text)
    _, u = enc.encode(ids[:4])
    _, v = enc.encode(ids[4:])
    out = chunk_and_encode(text, enc)
    assert np.allclose(out.f_pooling, (u + v) / 2)


@given(
    n_words=st.integers(min_value=1, max_value=40),
    limit=st.integers(min_value=1, max_value=15),
    seed=st.integers(min_value=0, max_value=100),
)
@settings(max_examples=40, deadline=None)
def test_token_conservation(n_words, limit, seed):
    enc = standin_encoder(seed=seed, token_limit=limit)
    text = " ".join(f"word{i}" for i in range(n_words))
    out = chunk_and_encode(text, enc)
    assert out.n_tokens == n_words
    assert out.f_local.shape[0] == n_words


def test_empty_text_rejected():
    enc = standin_encoder()
    with pytest.raises(TextError):
        chunk_and_encode("", enc)
    with pytest.raises(TextError):
        chunk_and_encode("   ", enc)


def test_dual_width_additive():
    enc_a = standin_encoder(seed=0, local_dim=8)
    enc_b = standin_encoder(seed=1, local_dim=4)
    out = concat_dual_encoders("two people spar", enc_a, enc_b)
    assert out.f_local.shape[1] == 12
    assert out.f_pooling.shape == (12,)


def test_dual_zero_encoder_halves():
    enc_a = standin_encoder(seed=0, local_dim=8)
    enc_b = ZeroEncoder(local_dim=4)
    out = concat_dual_encoders("someone runs", enc_a, enc_b)
    alone = chunk_and_encode("someone runs", enc_a)
    assert np.array_equal(out.f_local[:, :8], alone.f_local)
    assert np.all(out.f_local[:, 8:] == 0.0)
    assert np.array_equal(out.f_pooling[:8], alone.f_pooling)
    assert np.all(out.f_pooling[8:] == 0.0)


def test_dual_absent_second_encoder():
    enc_a = standin_encoder(seed=0)
    out = concat_dual_encoders("a person kneels", enc_a, None)
    direct = chunk_and_encode("a person kneels", enc_a)
    assert np.array_equal(out.f_local, direct.f_local)
    assert np.array_equal(out.f_pooling, direct.f_pooling)


def test_dual_same_encoder_halves_equal():
    enc = standin_encoder(seed=5, local_dim=6)
    out = concat_dual_encoders("two people hug", enc, enc)
    assert out.f_local.shape[1] == 12
    assert np.array_equal(out.f_local[:, :6], out.f_local[:, 6:])
    assert np.array_equal(out.f_pooling[:6], out.f_pooling[6:])


class MisbehavingEncoder(ZeroEncoder):
    def encode(self, ids):
        return np.zeros((len(ids) + 1, self.local_dim)), np.zeros(self.local_dim)


def test_contract_violation_diagnosed():
    enc_a = standin_encoder(seed=0, local_dim=8)
    with pytest.raises(TextError, match="local vectors"):
        concat_dual_encoders("a person stands", enc_a, MisbehavingEncoder())


def test_sinusoidal_shape_and_range():
    codes = sinusoidal_codes(10, 16)
    assert codes.shape == (10, 16)
    assert np.all(np.abs(codes) <= 1.0)
    assert not np.array_equal(codes[0], codes[1])


def test_features_validation():
    with pytest.raises(TextError):
        TextFeatures(f_local=np.zeros((0, 4)), f_pooling=np.zeros(4))
    with pytest.raises(TextError):
        TextFeatures(f_local=np.full((2, 4), np.nan), f_pooling=np.zeros(4))


def test_external_store_roundtrip(tmp_path):
    enc = standin_encoder(seed=0)
    features = chunk_and_encode("a dancer spins", enc)
    store = ExternalFeatureStore(tmp_path)
    store.save_caption("a dancer spins", features)
    back = store.encode_caption("a dancer spins")
    assert np.array_equal(back.f_local, features.f_local)
    assert np.array_equal(back.f_pooling, features.f_pooling)
    with pytest.raises(TextError):
        store.encode_caption("unknown caption")


def test_pipeline_config_selection(tmp_path):
    standin = TextPipeline.from_config({"kind": "standin", "local_dim": 8, "dual": True})
    out = standin.encode("a person waves")
    assert out.dim == 16
    features = chunk_and_encode("a person waves", standin_encoder())
    store = ExternalFeatureStore(tmp_path)
    store.save_caption("a person waves", features)
    external = TextPipeline.from_config({"kind": "external", "directory": str(tmp_path)})
    back = external.encode("a person waves")
    assert np.array_equal(back.f_local, features.f_local)
    with pytest.raises(TextError):
        TextPipeline.from_config({"kind": "bogus"})
