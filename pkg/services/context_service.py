"""
Serviço de Contexto entre Elocuções
====================================
Monta os 2L pares de sentenças adjacentes da janela de uma elocução e
produz um embedding de tamanho fixo por par, com cache em disco.

Par de índice -1 = (u_{i-1}, u_i); par de índice 0 = (u_i, u_{i+1}).
Cache: <cache_dir>/<id>.ctx.npy, float32 [2L x d_ctx], e context_meta.json
com o embedder que o gerou.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from embedders.base import CLS_TOKEN, SEP_TOKEN, SentencePairEmbedder
from services.config_service import deep_merge
from services.corpus_service import UtteranceRecord, context_texts, records_by_id

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

CACHE_SUFFIX = ".ctx.npy"
METADATA_NAME = "context_meta.json"


@dataclass(frozen=True)
class CrossUtterancePair:
    left: str
    right: str
    index: int

    def tokens(self) -> List[str]:
        """[CLS] esquerda [SEP] direita; sentença vazia não gera tokens."""
        return [CLS_TOKEN, *self.left.split(), SEP_TOKEN, *self.right.split()]


@dataclass
class ContextEmbeddingSet:
    vectors: np.ndarray
    L: int

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.L < 1:
            raise ValueError(f"L deve ser >= 1, recebido {self.L}")
        if self.vectors.ndim != 2 or self.vectors.shape[0] != 2 * self.L:
            raise ValueError(f"Esperadas {2 * self.L} linhas de contexto, recebido shape {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise ValueError("Embeddings de contexto com valores não finitos")

    @property
    def d_ctx(self) -> int:
        return int(self.vectors.shape[1])


def make_pairs(window: Sequence[str]) -> List[CrossUtterancePair]:
    """
    Pares consecutivos de uma janela de 2L+1 textos.

    Raises:
        ValueError: janela de tamanho par ou menor que 3
    """
    n = len(window)
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Janela deve ter tamanho ímpar >= 3, recebido {n}")
    L = n // 2
    return [CrossUtterancePair(window[k], window[k + 1], k - L) for k in range(n - 1)]


def embed_pairs(pairs: Sequence[CrossUtterancePair], embedder: SentencePairEmbedder) -> ContextEmbeddingSet:
    """Embeddings dos pares na ordem dada; falhas indicam o índice do par."""
    if not pairs:
        raise ValueError("Lista de pares vazia")
    if len(pairs) % 2:
        raise ValueError(f"Número de pares deve ser 2L, recebido {len(pairs)}")
    try:
        vetores = embedder.embed(list(pairs))
    except Exception as lote_erro:
        for par in pairs:
            try:
                embedder.embed([par])
            except Exception as e:
                raise RuntimeError(f"Falha do embedder no par de índice {par.index}: {e}") from e
        raise RuntimeError(f"Falha do embedder: {lote_erro}") from lote_erro

    vetores = np.asarray(vetores, dtype=np.float32)
    if vetores.shape[0] != len(pairs):
        raise RuntimeError(f"Embedder devolveu {vetores.shape[0]} linhas para {len(pairs)} pares")
    invalidas = [pairs[i].index for i in np.flatnonzero(~np.isfinite(vetores).all(axis=1))]
    if invalidas:
        raise RuntimeError(f"Embeddings não finitos nos pares de índice {invalidas}")
    return ContextEmbeddingSet(vetores, len(pairs) // 2)


# ========================================
# CACHE
# ========================================

def cache_path(cache_dir: str, uid: str) -> Path:
    return Path(cache_dir) / f"{uid}{CACHE_SUFFIX}"


def precompute_and_cache(
    records: Sequence[UtteranceRecord],
    embedder: SentencePairEmbedder,
    cache_dir: str
) -> Dict[str, Any]:
    """
    Calcula e grava o ContextEmbeddingSet de cada elocução do manifesto.

    Returns:
        Relatório com gravados e falhas (id, erro)
    """
    destino = Path(cache_dir)
    destino.mkdir(parents=True, exist_ok=True)
    por_id = records_by_id(records)

    gravados, falhas = 0, []
    for registro in records:
        try:
            conjunto = embed_pairs(make_pairs(context_texts(registro, por_id)), embedder)
            np.save(cache_path(cache_dir, registro.id), conjunto.vectors)
            gravados += 1
        except Exception as e:
            logger.error(f"✗ Contexto de {registro.id}: {e}", exc_info=True)
            falhas.append({"id": registro.id, "erro": str(e)})

    with open(destino / METADATA_NAME, "w", encoding="utf-8") as f:
        json.dump(embedder.describe(), f, indent=2, ensure_ascii=False)

    logger.info(f"✓ Cache de contexto: {gravados}/{len(records)} elocuções em {destino}")
    return {"cache_dir": str(destino), "gravados": gravados, "falhas": falhas}


def load_context_cache(ids: Iterable[str], cache_dir: str) -> Dict[str, np.ndarray]:
    """
    Lê o cache das elocuções pedidas.

    Raises:
        ValueError: ids sem arquivo no cache (listados na mensagem)
    """
    ids = list(ids)
    faltando = [uid for uid in ids if not cache_path(cache_dir, uid).exists()]
    if faltando:
        raise ValueError(
            f"Cache de contexto incompleto em {cache_dir}: {len(faltando)} ids ausentes: {faltando}"
        )
    return {uid: np.load(cache_path(cache_dir, uid)) for uid in ids}


def read_cache_metadata(cache_dir: str) -> Optional[Dict[str, Any]]:
    """Procedência do cache (embedder, d_ctx, model_name); None em caches sem metadados."""
    caminho = Path(cache_dir) / METADATA_NAME
    if not caminho.exists():
        return None
    with open(caminho, "r", encoding="utf-8") as f:
        return json.load(f)


def adopt_cache_metadata(config: Dict[str, Any], cache_dir: str) -> Dict[str, Any]:
    """
    Configuração com context.embedder/model_name do embedder que gerou o cache.

    Raises:
        ValueError: d_ctx do cache difere de context.d_ctx
    """
    meta = read_cache_metadata(cache_dir)
    if meta is None:
        logger.warning(f"Cache de contexto sem {METADATA_NAME} em {cache_dir}; procedência não verificada")
        return config

    contexto = config["context"]
    if int(meta["d_ctx"]) != int(contexto["d_ctx"]):
        raise ValueError(f"Cache de contexto com d_ctx {meta['d_ctx']}, configurado {contexto['d_ctx']}")
    adotado = {k: meta[k] for k in ("embedder", "model_name") if meta.get(k) is not None}
    divergentes = {k: (contexto.get(k), v) for k, v in adotado.items() if contexto.get(k) != v}
    if divergentes:
        logger.warning(f"Configuração de contexto ajustada ao cache: {divergentes}")
    return deep_merge(config, {"context": adotado})
