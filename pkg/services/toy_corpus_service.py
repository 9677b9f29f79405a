"""
Corpus sintético de brinquedo
==============================
Gera um corpus no layout LJ-Speech com tons harmônicos (uma altura por
fonema) e alinhamentos TSV exatos, para rodar o pipeline inteiro offline.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from services.config_service import DEFAULT_CONFIG
from services.g2p_service import PHONEME_TO_ID, g2p, is_silence
from services.vocoder_service import write_wav

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

TOY_SENTENCES = [
    "Mary asked the time",
    "He told her it was five",
    "She looked at the door",
    "They went into the house",
    "The old man said nothing",
    "It was a long night",
    "We saw the water again",
    "Her father came home late",
]

HARMONICOS = (1.0, 0.5, 0.25)
AMPLITUDE = 0.3


def phoneme_pitch(fonema: str) -> float:
    """Altura fixa por fonema (Hz)."""
    return 110.0 + 6.0 * (PHONEME_TO_ID[fonema] % 20)


def synthesize_tone(
    fonemas: Sequence[str],
    duracoes: Sequence[int],
    config: Optional[Dict[str, Any]] = None
) -> np.ndarray:
    """
    Concatena tons harmônicos com fase contínua; pausas viram silêncio.

    O sinal tem sum(duracoes)*hop - 1 amostras, de modo que o STFT centrado
    produz exatamente sum(duracoes) quadros.
    """
    audio_cfg = (config or DEFAULT_CONFIG)["audio"]
    sr, hop = audio_cfg["sample_rate"], audio_cfg["hop_length"]
    f0 = np.concatenate([
        np.full(d * hop, 0.0 if is_silence(p) else phoneme_pitch(p)) for p, d in zip(fonemas, duracoes)
    ])[: int(sum(duracoes)) * hop - 1]
    fase = 2 * np.pi * np.cumsum(f0) / sr
    sinal = sum(peso * np.sin(k * fase) for k, peso in enumerate(HARMONICOS, 1))
    return (AMPLITUDE * sinal * (f0 > 0) / sum(HARMONICOS)).astype(np.float32)


def make_toy_corpus(
    out_dir: str,
    sentences: Optional[Sequence[str]] = None,
    num_documents: int = 2,
    frames_per_phoneme: Optional[int] = None,
    seed: int = 0,
    config: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """
    Cria metadata.csv, wavs/ e alignments/ em out_dir.

    Args:
        out_dir: Diretório do corpus
        sentences: Frases (padrão: TOY_SENTENCES)
        num_documents: Número de documentos (frases repartidas em ordem)
        frames_per_phoneme: Duração fixa; None sorteia 3..8 quadros por fonema
        seed: Semente do sorteio de durações
        config: Configuração (seções audio e g2p)

    Returns:
        Dict com corpus_dir, aligner_dir e ids gerados
    """
    config = config or DEFAULT_CONFIG
    sentences = list(sentences or TOY_SENTENCES)
    if num_documents < 1 or num_documents > len(sentences):
        raise ValueError(f"num_documents inválido: {num_documents} para {len(sentences)} frases")

    raiz = Path(out_dir)
    wavs = raiz / "wavs"
    alinhamentos = raiz / "alignments"
    wavs.mkdir(parents=True, exist_ok=True)
    alinhamentos.mkdir(parents=True, exist_ok=True)

    sr, hop = config["audio"]["sample_rate"], config["audio"]["hop_length"]
    rng = np.random.default_rng(seed)
    grupos = np.array_split(np.arange(len(sentences)), num_documents)

    linhas: List[str] = []
    ids: List[str] = []
    for d, grupo in enumerate(grupos):
        for i, idx in enumerate(grupo, 1):
            uid = f"TOY{d:02d}-{i:04d}"
            texto = sentences[int(idx)]
            fonemas = g2p(texto, config["g2p"]).phonemes
            if frames_per_phoneme:
                duracoes = [int(frames_per_phoneme)] * len(fonemas)
            else:
                duracoes = [int(x) for x in rng.integers(3, 9, size=len(fonemas))]

            write_wav(str(wavs / f"{uid}.wav"), synthesize_tone(fonemas, duracoes, config), sr)

            inicio = 0
            with open(alinhamentos / f"{uid}.tsv", "w", encoding="utf-8") as f:
                for fonema, dur in zip(fonemas, duracoes):
                    f.write(f"{fonema}\t{inicio * hop / sr:.6f}\t{(inicio + dur) * hop / sr:.6f}\n")
                    inicio += dur

            linhas.append(f"{uid}|{texto}|{texto}")
            ids.append(uid)

    (raiz / "metadata.csv").write_text("\n".join(linhas) + "\n", encoding="utf-8")
    logger.info(f"✓ Corpus sintético: {len(ids)} elocuções em {num_documents} documentos ({raiz})")
    return {"corpus_dir": str(raiz), "aligner_dir": str(alinhamentos), "ids": ids}
