"""
CU-embedding: codificação de fonemas + falante (F), fusão com os embeddings
de contexto por atenção multi-cabeça (G), projeção final (H) e preditor
de durações (D, domínio log).
"""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from models.layers import FFTStack, ScalarPredictor
from services.g2p_service import PHONEME_INVENTORY, SILENCE_SYMBOLS, PHONEME_TO_ID

SILENCE_IDS = sorted(PHONEME_TO_ID[s] for s in SILENCE_SYMBOLS)


class SpeakerTable(nn.Module):
    """Tabela speaker_id -> linha da matriz de embeddings."""

    def __init__(self, speakers: Sequence[str], d_model: int):
        super().__init__()
        self.speakers: List[str] = [str(s) for s in speakers] or ["0"]
        self.index = {s: i for i, s in enumerate(self.speakers)}
        if len(self.index) != len(self.speakers):
            raise ValueError("Lista de falantes com ids repetidos")
        self.embedding = nn.Embedding(len(self.speakers), d_model)
        nn.init.normal_(self.embedding.weight, std=d_model ** -0.5)

    def lookup(self, speaker_ids: Sequence[str]) -> torch.Tensor:
        desconhecidos = [s for s in speaker_ids if str(s) not in self.index]
        if desconhecidos:
            raise ValueError(f"Falantes desconhecidos: {sorted(set(map(str, desconhecidos)))}")
        return torch.tensor([self.index[str(s)] for s in speaker_ids], dtype=torch.long,
                            device=self.embedding.weight.device)

    def forward(self, speaker_idx: torch.Tensor) -> torch.Tensor:
        return self.embedding(speaker_idx)


class PhonemeEncoder(nn.Module):
    def __init__(self, d_model: int, config: Dict):
        super().__init__()
        self.embedding = nn.Embedding(len(PHONEME_INVENTORY), d_model, padding_idx=0)
        self.stack = FFTStack(d_model, config)

    def forward(self, phoneme_ids: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        return self.stack(self.embedding(phoneme_ids), mask)


def encode_phonemes(
    encoder: PhonemeEncoder,
    speakers: SpeakerTable,
    phoneme_ids: torch.Tensor,
    speaker_idx: torch.Tensor,
    mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """F = saída do encoder + embedding do falante (broadcast em T)."""
    F = encoder(phoneme_ids, mask) + speakers(speaker_idx)[:, None, :]
    if mask is not None:
        F = F.masked_fill(mask[..., None], 0.0)
    return F


class ContextFusion(nn.Module):
    """
    Atenção multi-cabeça com consulta F e chaves/valores nos 2L embeddings
    de contexto. Devolve G [B, T, d_attn] e os pesos [B, heads, T, 2L].
    """

    def __init__(self, d_model: int, d_ctx: int, d_attn: int, heads: int, num_pairs: int,
                 mask_sentinel: bool = False):
        super().__init__()
        if d_attn % heads:
            raise ValueError(f"d_attn={d_attn} não divisível por heads={heads}")
        self.heads = heads
        self.d_head = d_attn // heads
        self.num_pairs = num_pairs
        self.mask_sentinel = mask_sentinel
        self.w_q = nn.Linear(d_model, d_attn)
        self.w_k = nn.Linear(d_ctx, d_attn)
        self.w_v = nn.Linear(d_ctx, d_attn)
        self.w_o = nn.Linear(d_attn, d_attn)

    def _heads(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.heads, self.d_head).transpose(1, 2)

    def forward(
        self,
        F: torch.Tensor,
        context: torch.Tensor,
        sentinel_mask: Optional[torch.Tensor] = None
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        if context.shape[1] != self.num_pairs:
            raise ValueError(
                f"Contexto com {context.shape[1]} linhas; configurado 2L={self.num_pairs}"
            )
        q = self._heads(self.w_q(F))
        k = self._heads(self.w_k(context))
        v = self._heads(self.w_v(context))

        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        if self.mask_sentinel and sentinel_mask is not None:
            mascara = sentinel_mask.clone()
            mascara[mascara.all(dim=1)] = False
            scores = scores.masked_fill(mascara[:, None, None, :], float("-inf"))
        pesos = torch.softmax(scores, dim=-1)

        b, _, t, _ = q.shape
        G = (pesos @ v).transpose(1, 2).reshape(b, t, self.heads * self.d_head)
        return self.w_o(G), pesos


class CUProjection(nn.Module):
    """h_t = W [g_t ; f_t]."""

    def __init__(self, d_attn: int, d_model: int):
        super().__init__()
        self.linear = nn.Linear(d_attn + d_model, d_model)

    def forward(self, G: torch.Tensor, F: torch.Tensor) -> torch.Tensor:
        if G.shape[:-1] != F.shape[:-1]:
            raise ValueError(f"Shapes incompatíveis: G {tuple(G.shape)}, F {tuple(F.shape)}")
        return self.linear(torch.cat([G, F], dim=-1))


class DurationPredictor(ScalarPredictor):
    """Prevê log(d + 1) por fonema."""


def log_duration_target(durations: torch.Tensor) -> torch.Tensor:
    return torch.log(durations.float() + 1.0)


def round_durations(
    log_durations: torch.Tensor,
    phoneme_ids: torch.Tensor,
    mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """
    Durações inteiras de inferência: round(exp(D) - 1) >= 0, com mínimo de
    1 quadro para fonemas que não são silêncio; padding fica em 0.
    """
    duracoes = torch.clamp(torch.round(torch.exp(log_durations) - 1.0), min=0).long()
    silencio = torch.isin(phoneme_ids, torch.tensor(SILENCE_IDS, device=phoneme_ids.device))
    duracoes = torch.where(~silencio, duracoes.clamp(min=1), duracoes)
    if mask is not None:
        duracoes = duracoes.masked_fill(mask, 0)
    return duracoes
