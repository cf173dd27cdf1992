"""Caption encoding behind a pluggable contract.

Any encoder with ``token_limit``, ``local_dim``, ``tokenize(text)`` and
``encode(ids) -> (local, pooled)`` plugs in. Long prompts are split into
consecutive chunks of at most ``token_limit`` tokens, each chunk encoded
separately, and the per-token features re-concatenated so nothing is
dropped; chunk pooled vectors combine by arithmetic mean. Two encoders can
be run side by side with their features concatenated along the width.

The built-in stand-in encoder is deterministic: a whitespace+lowercase
tokenizer over a hashed vocabulary, a seeded embedding table, sinusoidal
position codes, and mean pooling. Real encoder features produced offline
can be dropped in through :class:`ExternalFeatureStore`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np


class TextError(ValueError):
    """Invalid text input or encoder contract violation."""


@dataclass
class TextFeatures:
    f_local: np.ndarray    # [n_tokens, d]
    f_pooling: np.ndarray  # [d]

    @property
    def n_tokens(self) -> int:
        return int(self.f_local.shape[0])

    @property
    def dim(self) -> int:
        return int(self.f_local.shape[1])

    def __post_init__(self):
        self.f_local = np.asarray(self.f_local, dtype=np.float64)
        self.f_pooling = np.asarray(self.f_pooling, dtype=np.float64)
        if self.f_local.ndim != 2 or self.f_pooling.ndim != 1:
            raise TextError("f_local must be [n, d] and f_pooling [d]")
        if self.f_local.shape[0] < 1:
            raise TextError("need at least one token")
        if self.f_local.shape[1] != self.f_pooling.shape[0]:
            raise TextError("f_local and f_pooling widths differ")
        if not (np.all(np.isfinite(self.f_local)) and np.all(np.isfinite(self.f_pooling))):
            raise TextError("non-finite text features")


class TextEncoder(Protocol):
    token_limit: int
    local_dim: int

    def tokenize(self, text: str) -> list[int]: ...

    def encode(self, ids: list[int]) -> tuple[np.ndarray, np.ndarray]: ...


def sinusoidal_codes(n: int, dim: int) -> np.ndarray:
    """Standard sin/cos position table of shape [n, dim]."""
    positions = np.arange(n, dtype=np.float64)[:, None]
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / max(half, 1))
    angles = positions * freqs[None, :]
    codes = np.zeros((n, dim))
    codes[:, 0:2 * half:2] = np.sin(angles)
    codes[:, 1:2 * half:2] = np.cos(angles)
    return codes


def _hash_token(token: str, vocab_size: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % vocab_size


class StandInTextEncoder:
    """Deterministic desk-scale encoder; identical text yields identical features."""

    def __init__(self, seed: int = 0, local_dim: int = 48, token_limit: int = 77,
                 vocab_size: int = 4096):
        self.local_dim = local_dim
        self.token_limit = token_limit
        self.vocab_size = vocab_size
        rng = np.random.default_rng(seed)
        self.embeddings = rng.standard_normal((vocab_size, local_dim)) / np.sqrt(local_dim)

    def tokenize(self, text: str) -> list[int]:
        return [_hash_token(tok, self.vocab_size) for tok in text.lower().split()]

    def encode(self, ids: list[int]) -> tuple[np.ndarray, np.ndarray]:
        if not 1 <= len(ids) <= self.token_limit:
            raise TextError(f"encode got {len(ids)} tokens, limit {self.token_limit}")
        local = self.embeddings[np.asarray(ids)] + sinusoidal_codes(len(ids), self.local_dim)
        return local, local.mean(axis=0)


def standin_encoder(seed: int = 0, local_dim: int = 48,
                    token_limit: int = 77) -> StandInTextEncoder:
    return StandInTextEncoder(seed=seed, local_dim=local_dim, token_limit=token_limit)


def _encode_chunks(ids: list[int], encoder, chunk_size: int) -> tuple[np.ndarray, np.ndarray]:
    locals_, pooled = [], []
    for start in range(0, len(ids), chunk_size):
        chunk = ids[start:start + chunk_size]
        local, pool = encoder.encode(chunk)
        local = np.asarray(local, dtype=np.float64)
        if local.shape[0] != len(chunk):
            raise TextError(
                f"encoder returned {local.shape[0]} local vectors for {len(chunk)} tokens"
            )
        locals_.append(local)
        pooled.append(np.asarray(pool, dtype=np.float64))
    return np.concatenate(locals_, axis=0), np.mean(pooled, axis=0)


def chunk_and_encode(text: str, encoder) -> TextFeatures:
    """Encode arbitrarily long text by chunking at the encoder's token limit."""
    if not text.strip():
        raise TextError("empty text")
    ids = encoder.tokenize(text)
    if not ids:
        raise TextError(f"text tokenized to zero tokens: {text!r}")
    local, pooled = _encode_chunks(ids, encoder, encoder.token_limit)
    return TextFeatures(f_local=local, f_pooling=pooled)


def concat_dual_encoders(text: str, enc_a, enc_b=None) -> TextFeatures:
    """Run the same token ids through both encoders; concatenate feature widths.

    enc_a's tokenizer is authoritative. With enc_b absent this reduces to
    :func:`chunk_and_encode`.
    """
    if enc_b is None:
        return chunk_and_encode(text, enc_a)
    if not text.strip():
        raise TextError("empty text")
    ids = enc_a.tokenize(text)
    if not ids:
        raise TextError(f"text tokenized to zero tokens: {text!r}")
    chunk_size = min(enc_a.token_limit, enc_b.token_limit)
    local_a, pooled_a = _encode_chunks(ids, enc_a, chunk_size)
    local_b, pooled_b = _encode_chunks(ids, enc_b, chunk_size)
    if local_a.shape[0] != local_b.shape[0]:
        raise TextError(
            f"token-count mismatch between encoders: {local_a.shape[0]} vs {local_b.shape[0]}"
        )
    return TextFeatures(
        f_local=np.concatenate([local_a, local_b], axis=1),
        f_pooling=np.concatenate([pooled_a, pooled_b]),
    )


def caption_key(text: str) -> str:
    """Stable filename key for precomputed caption features."""
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()


class ExternalFeatureStore:
    """Directory of precomputed per-caption feature files.

    Each file is ``<caption_key>.json`` holding
    ``{"f_local": [[...]], "f_pooling": [...]}``, letting features from real
    encoders produced offline replace the stand-in.
    """

    def __init__(self, directory):
        self.directory = Path(directory)

    def encode_caption(self, text: str) -> TextFeatures:
        path = self.directory / f"{caption_key(text)}.json"
        if not path.exists():
            raise TextError(f"no precomputed features for caption {text!r} at {path}")
        data = json.loads(path.read_text())
        return TextFeatures(
            f_local=np.asarray(data["f_local"], dtype=np.float64),
            f_pooling=np.asarray(data["f_pooling"], dtype=np.float64),
        )

    def save_caption(self, text: str, features: TextFeatures) -> Path:
        path = self.directory / f"{caption_key(text)}.json"
        path.write_text(json.dumps({
            "f_local": features.f_local.tolist(),
            "f_pooling": features.f_pooling.tolist(),
        }))
        return path


class TextPipeline:
    """Caption -> TextFeatures front end chosen by config key.

    kind "standin" uses the built-in deterministic encoder (optionally two
    of them concatenated); kind "external" reads precomputed features.
    """

    def __init__(self, kind: str = "standin", seed: int = 0, local_dim: int = 48,
                 token_limit: int = 77, dual: bool = False, directory=None):
        self.kind = kind
        if kind == "standin":
            self.enc_a = standin_encoder(seed=seed, local_dim=local_dim, token_limit=token_limit)
            self.enc_b = (
                standin_encoder(seed=seed + 1, local_dim=local_dim, token_limit=token_limit)
                if dual else None
            )
            self.dim = local_dim * (2 if dual else 1)
            self.store = None
        elif kind == "external":
            if directory is None:
                raise TextError("external text pipeline needs a feature directory")
            self.store = ExternalFeatureStore(directory)
            self.enc_a = self.enc_b = None
            self.dim = None  # discovered from the first encoded caption
        else:
            raise TextError(f"unknown text pipeline kind {kind!r}")

    @classmethod
    def from_config(cls, config: dict) -> "TextPipeline":
        return cls(
            kind=config.get("kind", "standin"),
            seed=int(config.get("seed", 0)),
            local_dim=int(config.get("local_dim", 48)),
            token_limit=int(config.get("token_limit", 77)),
            dual=bool(config.get("dual", False)),
            directory=config.get("directory"),
        )

    def encode(self, text: str) -> TextFeatures:
        if self.store is not None:
            features = self.store.encode_caption(text)
            if self.dim is None:
                self.dim = features.dim
            return features
        return concat_dual_encoders(text, self.enc_a, self.enc_b)
