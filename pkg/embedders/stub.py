"""
Embedder determinístico de teste: hash SHA-256 da sequência de tokens
expandido para d_ctx por uma projeção pseudoaleatória fixa.
"""

import hashlib
from typing import Any, Dict, Sequence

import numpy as np

from embedders.base import SentencePairEmbedder

DIGEST_SIZE = 32


class StubEmbedder(SentencePairEmbedder):
    nome = "stub"

    def __init__(self, d_ctx: int = 768, seed: int = 0):
        self.d_ctx = d_ctx
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((DIGEST_SIZE, d_ctx)) / np.sqrt(DIGEST_SIZE)

    def _codigo(self, pair) -> np.ndarray:
        texto = " ".join(pair.tokens())
        digest = hashlib.sha256(texto.encode("utf-8")).digest()
        return np.frombuffer(digest, dtype=np.uint8).astype(np.float64) / 127.5 - 1.0

    def embed(self, pairs: Sequence) -> np.ndarray:
        codigos = np.stack([self._codigo(p) for p in pairs])
        return np.tanh(codigos @ self.projection).astype(np.float32)


def build(config: Dict[str, Any]) -> SentencePairEmbedder:
    return StubEmbedder(int(config["context"]["d_ctx"]))
