"""
Blocos compartilhados: codificação posicional senoidal, bloco FFT
(autoatenção + feed-forward convolucional), blocos convolucionais dos
preditores e pilhas de convoluções de largura 1.

Convenção de shapes: [B, T, C]; máscaras booleanas com True = padding.
"""

import math
from typing import Dict, Optional, Sequence

import torch
import torch.nn as nn


def make_pad_mask(lengths: torch.Tensor, max_len: Optional[int] = None) -> torch.Tensor:
    """[B, max_len] com True nas posições de padding."""
    max_len = int(max_len if max_len is not None else lengths.max().item())
    posicoes = torch.arange(max_len, device=lengths.device)
    return posicoes[None, :] >= lengths[:, None]


def sinusoid_table(n_pos: int, d_model: int) -> torch.Tensor:
    posicao = torch.arange(n_pos, dtype=torch.float64)[:, None]
    divisor = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
    tabela = torch.zeros(n_pos, d_model, dtype=torch.float64)
    tabela[:, 0::2] = torch.sin(posicao * divisor)
    tabela[:, 1::2] = torch.cos(posicao * divisor)[:, : d_model // 2]
    return tabela


class PositionalEncoding(nn.Module):
    """Soma a tabela senoidal; desligável para testes de equivariância."""

    def __init__(self, d_model: int, enabled: bool = True, max_len: int = 4096):
        super().__init__()
        self.enabled = enabled
        self.register_buffer("table", sinusoid_table(max_len, d_model).float(), persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            return x
        n = x.shape[1]
        if n > self.table.shape[0]:
            self.table = sinusoid_table(n, x.shape[-1]).to(self.table)
        return x + self.table[:n].to(x.dtype)[None]


class ConvFeedForward(nn.Module):
    def __init__(self, d_model: int, ff_dim: int, kernel_sizes: Sequence[int], dropout: float):
        super().__init__()
        k1, k2 = kernel_sizes
        self.conv1 = nn.Conv1d(d_model, ff_dim, k1, padding=k1 // 2)
        self.conv2 = nn.Conv1d(ff_dim, d_model, k2, padding=k2 // 2)
        self.dropout = nn.Dropout(dropout)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv2(torch.relu(self.conv1(x.transpose(1, 2)))).transpose(1, 2)
        return self.norm(x + self.dropout(y))


class FFTBlock(nn.Module):
    """Bloco feed-forward Transformer."""

    def __init__(self, d_model: int, heads: int, ff_dim: int, kernel_sizes: Sequence[int], dropout: float):
        super().__init__()
        self.attn = nn.MultiheadAttention(d_model, heads, dropout=dropout, batch_first=True)
        self.dropout = nn.Dropout(dropout)
        self.norm = nn.LayerNorm(d_model)
        self.ff = ConvFeedForward(d_model, ff_dim, kernel_sizes, dropout)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        y, _ = self.attn(x, x, x, key_padding_mask=mask, need_weights=False)
        x = self.norm(x + self.dropout(y))
        if mask is not None:
            x = x.masked_fill(mask[..., None], 0.0)
        x = self.ff(x)
        if mask is not None:
            x = x.masked_fill(mask[..., None], 0.0)
        return x


class FFTStack(nn.Module):
    """Codificação posicional seguida de N blocos FFT (encoder ou decoder)."""

    def __init__(self, d_model: int, config: Dict):
        super().__init__()
        self.positional = PositionalEncoding(d_model, bool(config.get("positional", True)))
        self.blocks = nn.ModuleList([
            FFTBlock(d_model, config["heads"], config["ff_dim"], config["kernel_sizes"], config["dropout"])
            for _ in range(config["layers"])
        ])

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = self.positional(x)
        for bloco in self.blocks:
            x = bloco(x, mask)
        return x


class ConvBlock(nn.Module):
    """Conv1d, ReLU, LayerNorm, Dropout."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, dropout: float):
        super().__init__()
        self.conv = nn.Conv1d(in_channels, out_channels, kernel_size, padding=kernel_size // 2)
        self.norm = nn.LayerNorm(out_channels)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        y = torch.relu(self.conv(x.transpose(1, 2))).transpose(1, 2)
        y = self.dropout(self.norm(y))
        if mask is not None:
            y = y.masked_fill(mask[..., None], 0.0)
        return y


class ScalarPredictor(nn.Module):
    """Dois blocos convolucionais e uma camada linear: um escalar por fonema."""

    def __init__(self, d_model: int, filter_size: int, kernel_size: int, dropout: float, zero_init: bool = False):
        super().__init__()
        self.blocks = nn.ModuleList([
            ConvBlock(d_model, filter_size, kernel_size, dropout),
            ConvBlock(filter_size, filter_size, kernel_size, dropout),
        ])
        self.linear = nn.Linear(filter_size, 1)
        if zero_init:
            nn.init.zeros_(self.linear.weight)
            nn.init.zeros_(self.linear.bias)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        for bloco in self.blocks:
            x = bloco(x, mask)
        y = self.linear(x).squeeze(-1)
        if mask is not None:
            y = y.masked_fill(mask, 0.0)
        return y


class PositionwiseConvStack(nn.Module):
    """
    Pilha de convoluções de largura 1 (ReLU entre camadas).

    Largura 1 torna a pilha uma função posição a posição: permutar as
    posições da entrada permuta a saída da mesma forma.
    """

    def __init__(self, in_channels: int, hidden: int, out_channels: int, layers: int, zero_init_output: bool = False):
        super().__init__()
        canais = [in_channels] + [hidden] * (layers - 1) + [out_channels]
        self.convs = nn.ModuleList([nn.Conv1d(a, b, 1) for a, b in zip(canais[:-1], canais[1:])])
        if zero_init_output:
            nn.init.zeros_(self.convs[-1].weight)
            nn.init.zeros_(self.convs[-1].bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x.transpose(1, 2)
        for i, conv in enumerate(self.convs):
            y = conv(y)
            if i < len(self.convs) - 1:
                y = torch.relu(y)
        return y.transpose(1, 2)
