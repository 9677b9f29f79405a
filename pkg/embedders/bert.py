"""
Embedder de produção: modelo de linguagem mascarado pré-treinado
(12 blocos, 12 cabeças, 768 dimensões) congelado. O vetor de cada par é a
saída na posição do token [CLS].
"""

import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np
import torch

from embedders.base import SentencePairEmbedder

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


class BertPairEmbedder(SentencePairEmbedder):
    nome = "bert"

    def __init__(
        self,
        model_name: str = "bert-base-uncased",
        model: Optional[torch.nn.Module] = None,
        tokenizer=None,
        device: str = "cpu",
        batch_size: int = 16,
        max_length: int = 512
    ):
        if model is None or tokenizer is None:
            from transformers import AutoModel, AutoTokenizer

            tokenizer = tokenizer or AutoTokenizer.from_pretrained(model_name)
            model = model or AutoModel.from_pretrained(model_name)
            logger.info(f"Modelo de linguagem carregado: {model_name}")

        self.model_name = model_name
        self.tokenizer = tokenizer
        self.device = torch.device(device)
        self.model = model.to(self.device).eval()
        for parametro in self.model.parameters():
            parametro.requires_grad_(False)
        self.d_ctx = int(self.model.config.hidden_size)
        self.batch_size = batch_size
        self.max_length = max_length

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "model_name": self.model_name}

    @torch.no_grad()
    def embed(self, pairs: Sequence) -> np.ndarray:
        blocos = []
        for i in range(0, len(pairs), self.batch_size):
            lote = pairs[i:i + self.batch_size]
            entrada = self.tokenizer(
                [p.left for p in lote],
                [p.right for p in lote],
                padding=True,
                truncation=True,
                max_length=self.max_length,
                return_tensors="pt",
            ).to(self.device)
            saida = self.model(**entrada)
            blocos.append(saida.last_hidden_state[:, 0].float().cpu().numpy())
        return np.concatenate(blocos).astype(np.float32)


def build(config: Dict[str, Any]) -> SentencePairEmbedder:
    contexto = config["context"]
    embedder = BertPairEmbedder(
        model_name=contexto["model_name"],
        device=config["training"].get("device", "cpu"),
        batch_size=int(contexto["batch_size"]),
    )
    if embedder.d_ctx != int(contexto["d_ctx"]):
        raise ValueError(f"d_ctx configurado ({contexto['d_ctx']}) difere do modelo ({embedder.d_ctx})")
    return embedder
