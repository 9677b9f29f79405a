"""
Modelo acústico completo
=========================
Monta as cinco variantes a partir da configuração:

- baseline:          preditores de pitch/energia, sem VAE
- global_vae:        um latente por elocução (encoder de referência), prior N(0, I)
- fine_grained_vae:  um latente por fonema, prior N(0, I)
- cvae:              prior específico da elocução a partir de (H, D), sem contexto (H = F)
- cuc_vae:           sistema completo com fusão do contexto entre elocuções
"""

from typing import Any, Dict, Optional, Sequence

import torch
import torch.nn as nn

from models.acoustic_decoder import MelDecoder, VarianceAdaptor, inject_latent, regulate_batch
from models.cu_embedding import (
    ContextFusion,
    CUProjection,
    DurationPredictor,
    PhonemeEncoder,
    SpeakerTable,
    encode_phonemes,
    log_duration_target,
    round_durations,
)
from models.cuc_vae import (
    LatentParams,
    LatentProjection,
    PosteriorNetwork,
    PriorNetwork,
    ReferenceEncoder,
    draw_epsilon,
    inference_sample,
    sample_posterior,
    sample_prior,
)
from models.layers import make_pad_mask
from services.config_service import VARIANTES, VARIANTES_COM_CONTEXTO, VARIANTES_PRIOR_CONDICIONAL


def count_trainable_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


class CUCVAETTS(nn.Module):
    def __init__(self, config: Dict[str, Any], speakers: Sequence[str]):
        super().__init__()
        m = config["model"]
        self.variant = m["variant"]
        if self.variant not in VARIANTES:
            raise ValueError(f"Variante desconhecida: '{self.variant}'")
        d_model = m["d_model"]
        self.n_mels = config["audio"]["n_mels"]
        self.context_size = int(config["corpus"]["context_size"])

        self.speakers = SpeakerTable(speakers, d_model)
        self.encoder = PhonemeEncoder(d_model, m["encoder"])

        if self.uses_context:
            fusao = m["fusion"]
            self.fusion = ContextFusion(
                d_model, int(config["context"]["d_ctx"]), fusao["d_attn"], fusao["heads"],
                2 * self.context_size, bool(fusao.get("mask_sentinel", False)),
            )
            self.cu_projection = CUProjection(fusao["d_attn"], d_model)

        dp = m["duration_predictor"]
        self.duration_predictor = DurationPredictor(d_model, dp["filter_size"], dp["kernel_size"], dp["dropout"])

        vae = m["vae"]
        if self.variant == "baseline":
            self.variance_adaptor = VarianceAdaptor(d_model, m["variance_predictor"])
        else:
            self.latent_projection = LatentProjection(vae["d_z"], d_model)
        if self.variant == "global_vae":
            self.reference_encoder = ReferenceEncoder(self.n_mels, vae, m["reference_encoder"])
        if self.variant in ("fine_grained_vae", "cvae", "cuc_vae"):
            self.posterior = PosteriorNetwork(self.n_mels, vae)
        if self.has_conditional_prior:
            self.prior = PriorNetwork(d_model, vae)

        self.decoder = MelDecoder(d_model, self.n_mels, m["decoder"])

    @property
    def uses_context(self) -> bool:
        return self.variant in VARIANTES_COM_CONTEXTO

    @property
    def has_conditional_prior(self) -> bool:
        return self.variant in VARIANTES_PRIOR_CONDICIONAL

    # ========================================
    # CU-EMBEDDING
    # ========================================

    def cu_embedding(
        self,
        phoneme_ids: torch.Tensor,
        speaker_idx: torch.Tensor,
        mask: Optional[torch.Tensor] = None,
        context: Optional[torch.Tensor] = None,
        context_mask: Optional[torch.Tensor] = None
    ) -> Dict[str, Any]:
        """F, H, log-durações previstas D e pesos de atenção."""
        F = encode_phonemes(self.encoder, self.speakers, phoneme_ids, speaker_idx, mask)
        pesos = None
        if self.uses_context:
            if context is None:
                raise ValueError("Variante cuc_vae requer os embeddings de contexto")
            G, pesos = self.fusion(F, context.to(F.dtype), context_mask)
            H = self.cu_projection(G, F)
            if mask is not None:
                H = H.masked_fill(mask[..., None], 0.0)
        else:
            H = F
        D = self.duration_predictor(H, mask)
        return {"F": F, "H": H, "log_duration": D, "attention": pesos}

    # ========================================
    # TREINO (durações reais no regulador)
    # ========================================

    def forward(
        self,
        batch: Dict[str, torch.Tensor],
        epsilon: Optional[torch.Tensor] = None,
        generator: Optional[torch.Generator] = None
    ) -> Dict[str, Any]:
        mask = batch["phoneme_mask"]
        durations = batch["durations"]
        saida = self.cu_embedding(
            batch["phoneme_ids"], batch["speaker_idx"], mask, batch.get("context"), batch.get("context_mask")
        )
        H = saida["H"]
        T = H.shape[1]

        if self.variant == "baseline":
            H_dec, pitch_pred, energy_pred = self.variance_adaptor(H, mask, batch["pitch"], batch["energy"])
            saida.update(pitch_pred=pitch_pred, energy_pred=energy_pred)
        elif self.variant == "global_vae":
            posterior = self.reference_encoder(batch["mel"], batch.get("mel_mask"))
            eps = epsilon if epsilon is not None else draw_epsilon(posterior.mu, generator)
            z = sample_prior(posterior, eps)  # z = μ + σ ⊙ ε
            H_dec = inject_latent(self.latent_projection, H, z.z.expand(-1, T, -1))
            saida.update(posterior=posterior, z=z)
        elif self.variant == "fine_grained_vae":
            posterior = self.posterior(batch["mel"], durations, batch.get("mel_lengths"))
            eps = epsilon if epsilon is not None else draw_epsilon(posterior.mu, generator)
            z = sample_prior(posterior, eps)
            H_dec = inject_latent(self.latent_projection, H, z.z)
            saida.update(posterior=posterior, z=z)
        else:
            prior = self.prior(H, log_duration_target(durations))
            posterior = self.posterior(batch["mel"], durations, batch.get("mel_lengths"))
            eps = epsilon if epsilon is not None else draw_epsilon(prior.mu, generator)
            z = sample_posterior(posterior, sample_prior(prior, eps))
            H_dec = inject_latent(self.latent_projection, H, z.z)
            saida.update(prior=prior, posterior=posterior, z=z)

        if mask is not None:
            H_dec = H_dec.masked_fill(mask[..., None], 0.0)
        frames, lengths = regulate_batch(H_dec, durations)
        frame_mask = make_pad_mask(lengths, frames.shape[1])
        saida.update(mel=self.decoder(frames, frame_mask), mel_lengths=lengths, frame_mask=frame_mask)
        return saida

    # ========================================
    # INFERÊNCIA (durações previstas)
    # ========================================

    @torch.no_grad()
    def infer(
        self,
        phoneme_ids: torch.Tensor,
        speaker_idx: torch.Tensor,
        mask: Optional[torch.Tensor] = None,
        context: Optional[torch.Tensor] = None,
        context_mask: Optional[torch.Tensor] = None,
        mode: str = "sample",
        temperature: float = 1.0,
        standard_gaussian: bool = False,
        generator: Optional[torch.Generator] = None,
        durations: Optional[torch.Tensor] = None,
        epsilon: Optional[torch.Tensor] = None
    ) -> Dict[str, Any]:
        saida = self.cu_embedding(phoneme_ids, speaker_idx, mask, context, context_mask)
        H, D = saida["H"], saida["log_duration"]
        B, T = phoneme_ids.shape
        if durations is None:
            durations = round_durations(D, phoneme_ids, mask)

        if self.variant == "baseline":
            H_dec, pitch_pred, energy_pred = self.variance_adaptor(H, mask)
            saida.update(pitch_pred=pitch_pred, energy_pred=energy_pred)
        else:
            d_z = self.latent_projection.linear.in_features
            if self.has_conditional_prior:
                prior = self.prior(H, D)
                amostra = inference_sample(prior, mode, temperature, standard_gaussian, generator, epsilon)
            else:
                niveis = 1 if self.variant == "global_vae" else T
                prior = LatentParams.standard(H.new_zeros(B, niveis, d_z))
                amostra = inference_sample(prior, mode, temperature, True, generator, epsilon)
            H_dec = inject_latent(self.latent_projection, H, amostra.z.expand(-1, T, -1))
            saida.update(prior=prior, z=amostra)

        if mask is not None:
            H_dec = H_dec.masked_fill(mask[..., None], 0.0)
        frames, lengths = regulate_batch(H_dec, durations)
        frame_mask = make_pad_mask(lengths, frames.shape[1])
        saida.update(
            mel=self.decoder(frames, frame_mask), durations=durations, mel_lengths=lengths, frame_mask=frame_mask
        )
        return saida


def build_model(config: Dict[str, Any], speakers: Sequence[str]) -> CUCVAETTS:
    return CUCVAETTS(config, speakers)
