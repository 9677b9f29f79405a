"""
Registry de embedders de pares de sentenças
"""
import importlib
from typing import Any, Dict

from embedders.base import SentencePairEmbedder

TIPOS = {
    "stub": "embedders.stub",
    "bert": "embedders.bert",
}


def get_embedder(nome: str, config: Dict[str, Any]) -> SentencePairEmbedder:
    if nome not in TIPOS:
        raise ValueError(f"Embedder não registrado: '{nome}'. Opções: {sorted(TIPOS)}")
    modulo = importlib.import_module(TIPOS[nome])
    return modulo.build(config)
