"""
CVAE com prior específico da elocução
======================================
Prior q(z_p | D, H) e posterior q(z | z_p, x) por fonema, amostragem
reparametrizada hierárquica e termos KL em forma fechada.

AMOSTRAGEM:
- prior:      z_p = μ_p + σ_p ⊙ ε
- posterior:  z   = μ + σ ⊙ z_p  (= μ + σ⊙μ_p + σ⊙σ_p⊙ε)

As redes emitem log-variância, limitada a [logvar_min, logvar_max].
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from models.layers import PositionwiseConvStack


@dataclass
class LatentParams:
    """Parâmetros gaussianos diagonais por fonema: mu e logvar [..., T, d_z]."""
    mu: torch.Tensor
    logvar: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.logvar.shape:
            raise ValueError(f"mu {tuple(self.mu.shape)} e logvar {tuple(self.logvar.shape)} diferem")

    @property
    def sigma(self) -> torch.Tensor:
        return torch.exp(0.5 * self.logvar)

    @classmethod
    def from_sigma(cls, mu: torch.Tensor, sigma: torch.Tensor) -> "LatentParams":
        sigma = torch.as_tensor(sigma, dtype=mu.dtype)
        if (sigma <= 0).any():
            raise ValueError("Desvio padrão deve ser estritamente positivo")
        return cls(mu, torch.log(sigma ** 2).expand_as(mu).clone())

    @classmethod
    def standard(cls, like: torch.Tensor) -> "LatentParams":
        return cls(torch.zeros_like(like), torch.zeros_like(like))

    def expand(self, T: int) -> "LatentParams":
        """Replica parâmetros de nível de elocução [B, 1, d_z] para T fonemas."""
        return LatentParams(self.mu.expand(-1, T, -1), self.logvar.expand(-1, T, -1))


@dataclass
class LatentSample:
    z: torch.Tensor
    epsilon: torch.Tensor


# ========================================
# REDES
# ========================================

def _split(saida: torch.Tensor, logvar_min: float, logvar_max: float) -> LatentParams:
    mu, logvar = saida.chunk(2, dim=-1)
    return LatentParams(mu, torch.clamp(logvar, logvar_min, logvar_max))


class PriorNetwork(nn.Module):
    """Quatro convoluções de largura 1 sobre [H ; D]."""

    def __init__(self, d_model: int, config: dict):
        super().__init__()
        self.config = config
        self.stack = PositionwiseConvStack(
            d_model + 1, config["hidden"], 2 * config["d_z"], config["layers"], config["zero_init_output"]
        )

    def forward(self, H: torch.Tensor, log_durations: torch.Tensor) -> LatentParams:
        if H.shape[:-1] != log_durations.shape:
            raise ValueError(f"H {tuple(H.shape)} e D {tuple(log_durations.shape)} incompatíveis")
        entrada = torch.cat([H, log_durations.to(H.dtype)[..., None]], dim=-1)
        return _split(self.stack(entrada), self.config["logvar_min"], self.config["logvar_max"])


def segment_mean(mel: torch.Tensor, durations: torch.Tensor) -> torch.Tensor:
    """
    Média dos quadros de mel de cada fonema.

    Args:
        mel: [B, N, n_mels]
        durations: [B, T] inteiros; soma por linha <= N (o resto é padding)

    Returns:
        [B, T, n_mels]; fonemas de duração zero recebem vetor nulo
    """
    durations = durations.long()
    fim = torch.cumsum(durations, dim=1)
    inicio = fim - durations
    quadros = torch.arange(mel.shape[1], device=mel.device)
    pertence = (quadros[None, None, :] >= inicio[..., None]) & (quadros[None, None, :] < fim[..., None])
    soma = pertence.to(mel.dtype) @ mel
    return soma / durations.clamp(min=1)[..., None].to(mel.dtype)


class PosteriorNetwork(nn.Module):
    """Média do mel por fonema seguida de quatro convoluções de largura 1."""

    def __init__(self, n_mels: int, config: dict):
        super().__init__()
        self.config = config
        self.stack = PositionwiseConvStack(
            n_mels, config["hidden"], 2 * config["d_z"], config["layers"], config["zero_init_output"]
        )

    def forward(
        self,
        mel: torch.Tensor,
        durations: torch.Tensor,
        mel_lengths: Optional[torch.Tensor] = None
    ) -> LatentParams:
        totais = durations.long().sum(dim=1)
        esperados = mel_lengths if mel_lengths is not None else torch.full_like(totais, mel.shape[1])
        if not torch.equal(totais, esperados.long()):
            raise ValueError(
                f"Soma das durações {totais.tolist()} difere dos quadros de mel {esperados.tolist()}"
            )
        return _split(self.stack(segment_mean(mel, durations)), self.config["logvar_min"], self.config["logvar_max"])


class ReferenceEncoder(nn.Module):
    """Latente de nível de elocução: convoluções sobre o mel e média temporal."""

    def __init__(self, n_mels: int, vae_config: dict, ref_config: dict):
        super().__init__()
        self.vae_config = vae_config
        canais, k = ref_config["channels"], ref_config["kernel_size"]
        camadas = []
        entrada = n_mels
        for _ in range(ref_config["layers"]):
            camadas.append(nn.Conv1d(entrada, canais, k, padding=k // 2))
            entrada = canais
        self.convs = nn.ModuleList(camadas)
        self.linear = nn.Linear(canais, 2 * vae_config["d_z"])
        if vae_config["zero_init_output"]:
            nn.init.zeros_(self.linear.weight)
            nn.init.zeros_(self.linear.bias)

    def forward(self, mel: torch.Tensor, mel_mask: Optional[torch.Tensor] = None) -> LatentParams:
        y = mel.transpose(1, 2)
        validos = None if mel_mask is None else (~mel_mask)[:, None, :].to(mel.dtype)
        for conv in self.convs:
            y = torch.relu(conv(y))
            if validos is not None:
                y = y * validos
        if validos is None:
            pooled = y.mean(dim=-1)
        else:
            pooled = y.sum(dim=-1) / validos.sum(dim=-1).clamp(min=1)
        return _split(self.linear(pooled)[:, None, :], self.vae_config["logvar_min"], self.vae_config["logvar_max"])


class LatentProjection(nn.Module):
    """Projeta z [.., d_z] para d_model e soma a H."""

    def __init__(self, d_z: int, d_model: int):
        super().__init__()
        self.linear = nn.Linear(d_z, d_model)

    def forward(self, H: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        return H + self.linear(z)


# ========================================
# AMOSTRAGEM
# ========================================

def draw_epsilon(like: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    return torch.randn(like.shape, generator=generator, dtype=like.dtype, device=like.device)


def sample_prior(
    params_p: LatentParams,
    epsilon: Optional[torch.Tensor] = None,
    generator: Optional[torch.Generator] = None
) -> LatentSample:
    """z_p = μ_p + σ_p ⊙ ε (ε novo quando não fornecido)."""
    if epsilon is None:
        epsilon = draw_epsilon(params_p.mu, generator)
    return LatentSample(params_p.mu + params_p.sigma * epsilon, epsilon)


def sample_posterior(params: LatentParams, z_p: LatentSample) -> LatentSample:
    """z = μ + σ ⊙ z_p."""
    return LatentSample(params.mu + params.sigma * z_p.z, z_p.epsilon)


def inference_sample(
    params_p: LatentParams,
    mode: str = "sample",
    temperature: float = 1.0,
    standard_gaussian: bool = False,
    generator: Optional[torch.Generator] = None,
    epsilon: Optional[torch.Tensor] = None
) -> LatentSample:
    """
    Latente de inferência.

    - sample: z = μ_p + τ·σ_p ⊙ ε
    - mean:   z = μ_p
    - standard_gaussian: ignora o prior aprendido, z ~ N(0, τ²)
    """
    if temperature < 0:
        raise ValueError(f"Temperatura deve ser >= 0, recebido {temperature}")
    if mode not in ("sample", "mean"):
        raise ValueError(f"Modo de inferência inválido: {mode}")

    if epsilon is None:
        epsilon = draw_epsilon(params_p.mu, generator) if mode == "sample" else torch.zeros_like(params_p.mu)
    if standard_gaussian:
        z = temperature * epsilon if mode == "sample" else torch.zeros_like(params_p.mu)
    elif mode == "mean":
        z = params_p.mu.clone()
    else:
        z = params_p.mu + temperature * params_p.sigma * epsilon
    return LatentSample(z, epsilon)


# ========================================
# KL
# ========================================

def _masked_sum(valores: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    """Soma sobre d_z e fonemas; mask [B, T] com True = padding."""
    valores = valores.sum(dim=-1)
    if mask is not None:
        valores = valores.masked_fill(mask, 0.0)
    return valores.sum(dim=-1)


def gaussian_kl(
    mu_q: torch.Tensor, logvar_q: torch.Tensor,
    mu_p: torch.Tensor, logvar_p: torch.Tensor
) -> torch.Tensor:
    """KL(N(mu_q, e^logvar_q) || N(mu_p, e^logvar_p)) elemento a elemento."""
    return 0.5 * (logvar_p - logvar_q + (torch.exp(logvar_q) + (mu_q - mu_p) ** 2) / torch.exp(logvar_p) - 1.0)


def kl_posterior_prior(
    params: LatentParams,
    params_p: LatentParams,
    mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """
    KL entre a marginal efetiva N(μ + σ⊙μ_p, (σ⊙σ_p)²) e o prior
    N(μ_p, σ_p²), somado sobre dimensões e fonemas.
    """
    mu_q = params.mu + params.sigma * params_p.mu
    logvar_q = params.logvar + params_p.logvar
    return _masked_sum(gaussian_kl(mu_q, logvar_q, params_p.mu, params_p.logvar), mask)


def kl_prior_standard(params_p: LatentParams, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """KL(N(μ_p, σ_p²) || N(0, I)) = Σ 0.5·(μ_p² + σ_p² − 1 − ln σ_p²)."""
    termos = 0.5 * (params_p.mu ** 2 + torch.exp(params_p.logvar) - 1.0 - params_p.logvar)
    return _masked_sum(termos, mask)
