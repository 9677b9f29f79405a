"""
Estruturas comuns dos embedders de pares de sentenças
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Sequence

import numpy as np

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"


class SentencePairEmbedder(ABC):
    """
    Um vetor de dimensão d_ctx por par (esquerda, direita).

    Os pares são objetos com atributos `left` e `right` (texto, possivelmente
    vazio). Implementações são somente leitura: nenhum gradiente as atravessa.
    """

    nome: str = ""
    d_ctx: int

    @abstractmethod
    def embed(self, pairs: Sequence) -> np.ndarray:
        """Matriz float32 [len(pairs) x d_ctx] na ordem dos pares."""

    def describe(self) -> Dict[str, Any]:
        """Procedência gravada junto do cache de contexto."""
        return {"embedder": self.nome, "d_ctx": int(self.d_ctx)}
