"""
Serviço de Síntese
===================
Caminho de inferência: G2P, pares de contexto, forward do modelo com
amostragem do prior, arredondamento das durações e vocoder.

CONTEXTO: 2L textos em ordem de documento (u_{i-L}..u_{i-1}, u_{i+1}..u_{i+L});
string vazia marca vizinho ausente.

SAÍDAS POR AMOSTRA: <nome>.wav, <nome>.mel.npy (+ .mel.json) e <nome>.json
com semente, temperatura, modo e variante.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import torch

from embedders.base import SentencePairEmbedder
from models.tts_model import CUCVAETTS
from services.context_service import cache_path, embed_pairs, make_pairs
from services.corpus_service import SENTINEL, UtteranceRecord, context_texts
from services.feature_service import load_features
from services.g2p_service import g2p
from services.vocoder_service import load_vocoder, vocode, write_mel_interchange, write_wav

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def build_window(text: str, neighbors: Sequence[str], L: int) -> List[str]:
    """Janela de 2L+1 textos a partir dos 2L vizinhos."""
    if len(neighbors) != 2 * L:
        raise ValueError(
            f"São necessários exatamente 2L={2 * L} textos de contexto (--context), recebidos {len(neighbors)}"
        )
    return list(neighbors[:L]) + [text] + list(neighbors[L:])


def context_tensor(
    window: Sequence[str],
    embedder: SentencePairEmbedder
) -> Dict[str, torch.Tensor]:
    """Embeddings [1, 2L, d_ctx] e máscara de pares só com sentinela [1, 2L]."""
    pares = make_pairs(window)
    conjunto = embed_pairs(pares, embedder)
    mascara = [p.left == SENTINEL and p.right == SENTINEL for p in pares]
    return {
        "context": torch.as_tensor(conjunto.vectors)[None],
        "context_mask": torch.tensor(mascara, dtype=torch.bool)[None],
    }


def synthesize(
    model: CUCVAETTS,
    text: str,
    config: Dict[str, Any],
    speaker: Optional[str] = None,
    neighbors: Optional[Sequence[str]] = None,
    embedder: Optional[SentencePairEmbedder] = None,
    context: Optional[Dict[str, torch.Tensor]] = None,
    mode: Optional[str] = None,
    temperature: Optional[float] = None,
    standard_gaussian: Optional[bool] = None,
    generator: Optional[torch.Generator] = None,
    durations: Optional[np.ndarray] = None,
    vocoder=None
) -> Dict[str, Any]:
    """
    Sintetiza uma elocução.

    Args:
        model: Modelo treinado (modo eval)
        text: Texto a sintetizar
        config: Configuração (seções inference, audio, vocoder)
        speaker: speaker_id (padrão: primeiro falante do modelo)
        neighbors: 2L textos de contexto (variante cuc_vae)
        embedder: Embedder de pares para os vizinhos
        context: Embeddings já calculados (dispensa neighbors/embedder)
        durations: Durações forçadas por fonema (ex.: as da referência)

    Returns:
        Dict com phonemes, mel [N x n_mels], durations, waveform e z

    Raises:
        ValueError: contexto ausente para a variante cuc_vae
    """
    inferencia = config["inference"]
    mode = mode or inferencia["mode"]
    temperature = float(inferencia["temperature"] if temperature is None else temperature)
    standard_gaussian = bool(inferencia["standard_gaussian"] if standard_gaussian is None else standard_gaussian)

    fonemas = g2p(text, config["g2p"])
    dispositivo = next(model.parameters()).device
    ids = torch.tensor([fonemas.ids()], dtype=torch.long, device=dispositivo)
    falante = model.speakers.lookup([speaker if speaker is not None else model.speakers.speakers[0]])

    if model.uses_context and context is None:
        if neighbors is None or embedder is None:
            raise ValueError(
                "A variante cuc_vae requer contexto: passe --context exatamente 2L vezes "
                "(string vazia para vizinho ausente)"
            )
        context = context_tensor(build_window(text, neighbors, model.context_size), embedder)
    ctx = {k: v.to(dispositivo) for k, v in (context or {}).items()} if model.uses_context else {}

    forcadas = None
    if durations is not None:
        forcadas = torch.as_tensor(np.asarray(durations), dtype=torch.long, device=dispositivo)[None]
        if forcadas.shape[1] != fonemas.T:
            raise ValueError(f"{forcadas.shape[1]} durações para {fonemas.T} fonemas")

    model.eval()
    saida = model.infer(
        ids, falante,
        context=ctx.get("context"), context_mask=ctx.get("context_mask"),
        mode=mode, temperature=temperature, standard_gaussian=standard_gaussian,
        generator=generator, durations=forcadas,
    )
    mel = saida["mel"][0].float().cpu().numpy()
    return {
        "phonemes": fonemas.phonemes,
        "mel": mel,
        "durations": saida["durations"][0].cpu().numpy().astype(np.int64),
        "waveform": vocode(mel, config, vocoder),
        "z": saida["z"].z[0].cpu().numpy() if "z" in saida else None,
    }


def synthesize_samples(
    model: CUCVAETTS,
    text: str,
    config: Dict[str, Any],
    num_samples: int,
    seed: int,
    vocoder=None,
    **kwargs
) -> List[Dict[str, Any]]:
    """N amostras consumindo um único gerador semeado, em sequência."""
    vocoder = vocoder or load_vocoder(config)
    generator = torch.Generator(device=next(model.parameters()).device).manual_seed(int(seed))
    return [
        synthesize(model, text, config, generator=generator, vocoder=vocoder, **kwargs)
        for _ in range(int(num_samples))
    ]


def save_synthesis(
    result: Dict[str, Any],
    out_dir: str,
    name: str,
    config: Dict[str, Any],
    metadata: Optional[Dict[str, Any]] = None
) -> Dict[str, str]:
    """Grava wav PCM-16, mel de troca e sidecar JSON."""
    destino = Path(out_dir)
    destino.mkdir(parents=True, exist_ok=True)
    wav_path = write_wav(str(destino / f"{name}.wav"), result["waveform"], config["audio"]["sample_rate"])
    mel_path = write_mel_interchange(result["mel"], str(destino / f"{name}.mel.npy"), config["audio"])
    sidecar = {
        "phonemes": result["phonemes"],
        "durations": [int(d) for d in result["durations"]],
        "num_frames": int(result["mel"].shape[0]),
        **(metadata or {}),
    }
    sidecar_path = destino / f"{name}.json"
    with open(sidecar_path, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, ensure_ascii=False)
    return {"wav": str(wav_path), "mel": str(mel_path), "sidecar": str(sidecar_path)}


def record_context(
    record: UtteranceRecord,
    by_id: Mapping[str, UtteranceRecord],
    cache_dir: Optional[str],
    embedder: Optional[SentencePairEmbedder]
) -> Dict[str, torch.Tensor]:
    """Contexto de uma elocução do manifesto: cache quando existe, senão embedder."""
    janela = context_texts(record, by_id)
    mascara = [a == SENTINEL and b == SENTINEL for a, b in zip(janela[:-1], janela[1:])]
    if cache_dir and cache_path(cache_dir, record.id).exists():
        vetores = np.load(cache_path(cache_dir, record.id))
        return {
            "context": torch.as_tensor(vetores)[None],
            "context_mask": torch.tensor(mascara, dtype=torch.bool)[None],
        }
    if embedder is None:
        raise ValueError(f"{record.id}: contexto fora do cache e nenhum embedder configurado")
    return context_tensor(janela, embedder)


def synthesize_records(
    model: CUCVAETTS,
    records: Sequence[UtteranceRecord],
    by_id: Mapping[str, UtteranceRecord],
    config: Dict[str, Any],
    out_dir: str,
    cache_dir: Optional[str] = None,
    embedder: Optional[SentencePairEmbedder] = None,
    reference_durations: bool = False,
    vocoder=None
) -> Dict[str, str]:
    """
    Sintetiza elocuções do manifesto, uma amostra por id.

    Com reference_durations, usa as durações das features (mesmo número de
    quadros da referência, como exigem FFE e MCD).
    """
    vocoder = vocoder or load_vocoder(config)
    inferencia = config["inference"]
    generator = torch.Generator(device=next(model.parameters()).device).manual_seed(int(inferencia["seed"]))
    gerados = {}
    for registro in records:
        try:
            contexto = record_context(registro, by_id, cache_dir, embedder) if model.uses_context else None
            duracoes = load_features(registro.feature_path).durations if reference_durations else None
            resultado = synthesize(
                model, registro.text, config, speaker=registro.speaker_id, context=contexto,
                generator=generator, durations=duracoes, vocoder=vocoder,
            )
            caminhos = save_synthesis(resultado, out_dir, registro.id, config, {
                "id": registro.id,
                "seed": int(inferencia["seed"]),
                "temperature": float(inferencia["temperature"]),
                "mode": inferencia["mode"],
                "standard_gaussian": bool(inferencia["standard_gaussian"]),
                "variant": model.variant,
                "reference_durations": reference_durations,
            })
            gerados[registro.id] = caminhos["wav"]
            logger.info(f"✓ {registro.id} sintetizado")
        except Exception as e:
            logger.error(f"✗ {registro.id}: {e}", exc_info=True)
    return gerados
