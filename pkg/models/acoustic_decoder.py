"""
Decoder acústico: injeção do latente, regulador de comprimento e decoder
feed-forward Transformer para o mel. Inclui os preditores de pitch/energia
da variante baseline.
"""

from typing import Dict, Optional, Tuple

import torch
import torch.nn as nn
from torch.nn.utils.rnn import pad_sequence

from models.cuc_vae import LatentProjection
from models.layers import FFTStack, ScalarPredictor


def inject_latent(projection: LatentProjection, H: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """H + Linear(z)."""
    if H.shape[:-1] != z.shape[:-1]:
        raise ValueError(f"H {tuple(H.shape)} e z {tuple(z.shape)} incompatíveis")
    return projection(H, z)


def length_regulate(rows: torch.Tensor, durations: torch.Tensor) -> torch.Tensor:
    """
    Repete a linha t durations[t] vezes, em ordem.

    Args:
        rows: [T, d]
        durations: [T] inteiros >= 0, ao menos um positivo

    Returns:
        [sum(durations), d]
    """
    durations = durations.long()
    if durations.shape[0] != rows.shape[0]:
        raise ValueError(f"{rows.shape[0]} linhas e {durations.shape[0]} durações")
    if (durations < 0).any():
        raise ValueError("Durações negativas no regulador de comprimento")
    if int(durations.sum()) == 0:
        raise ValueError("Todas as durações são zero")
    return torch.repeat_interleave(rows, durations, dim=0)


def regulate_batch(rows: torch.Tensor, durations: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Versão em lote: devolve quadros com padding [B, N_max, d] e comprimentos [B]."""
    sequencias = [length_regulate(r, d) for r, d in zip(rows, durations)]
    comprimentos = torch.tensor([s.shape[0] for s in sequencias], device=rows.device)
    return pad_sequence(sequencias, batch_first=True), comprimentos


class MelDecoder(nn.Module):
    """Blocos FFT seguidos de projeção linear para n_mels, sem pós-rede."""

    def __init__(self, d_model: int, n_mels: int, config: Dict):
        super().__init__()
        self.stack = FFTStack(d_model, config)
        self.linear = nn.Linear(d_model, n_mels)

    def forward(self, frames: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        mel = self.linear(self.stack(frames, mask))
        if mask is not None:
            mel = mel.masked_fill(mask[..., None], 0.0)
        return mel


class VarianceAdaptor(nn.Module):
    """
    Preditores de pitch e energia por fonema (alvos em log(1 + x)).

    Em treino, os embeddings usam os alvos reais; na inferência, as previsões.
    """

    def __init__(self, d_model: int, config: Dict):
        super().__init__()
        args = (d_model, config["filter_size"], config["kernel_size"], config["dropout"])
        self.pitch_predictor = ScalarPredictor(*args)
        self.energy_predictor = ScalarPredictor(*args)
        self.pitch_embedding = nn.Conv1d(1, d_model, 1)
        self.energy_embedding = nn.Conv1d(1, d_model, 1)

    @staticmethod
    def _embed(conv: nn.Conv1d, valores: torch.Tensor) -> torch.Tensor:
        return conv(valores[:, None, :]).transpose(1, 2)

    def forward(
        self,
        H: torch.Tensor,
        mask: Optional[torch.Tensor] = None,
        pitch_target: Optional[torch.Tensor] = None,
        energy_target: Optional[torch.Tensor] = None
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        pitch_pred = self.pitch_predictor(H, mask)
        energy_pred = self.energy_predictor(H, mask)
        pitch = pitch_target if pitch_target is not None else pitch_pred
        energia = energy_target if energy_target is not None else energy_pred
        saida = H + self._embed(self.pitch_embedding, pitch) + self._embed(self.energy_embedding, energia)
        if mask is not None:
            saida = saida.masked_fill(mask[..., None], 0.0)
        return saida, pitch_pred, energy_pred
