"""
Serviço de Vocoder
===================
Realiza a forma de onda a partir do mel previsto e cuida dos arquivos de
troca (mel .npy + metadados .json, áudio PCM-16).

BINDINGS (vocoder.backend):
- griffin_lim: reconstrução de fase determinística (fallback)
- torchscript: vocoder neural exportado
- command: processo externo
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import soundfile as sf

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

FALLBACK_BACKEND = "griffin_lim"


def write_wav(path: str, audio: np.ndarray, sample_rate: int) -> Path:
    """Grava áudio mono PCM 16 bits (amostras limitadas a [-1, 1])."""
    destino = Path(path)
    destino.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(destino), np.clip(np.asarray(audio, dtype=np.float32), -1.0, 1.0), sample_rate, subtype="PCM_16")
    return destino


def read_wav(path: str) -> Tuple[np.ndarray, int]:
    audio, sr = sf.read(str(path), dtype="float32", always_2d=False)
    if audio.ndim > 1:
        audio = audio.mean(axis=1)
    return audio, sr


def write_mel_interchange(mel: np.ndarray, path: str, audio_config: Dict[str, Any]) -> Path:
    """Mel float32 [frames x n_mels] em .npy e metadados de análise em .json."""
    destino = Path(path)
    destino.parent.mkdir(parents=True, exist_ok=True)
    np.save(destino, np.asarray(mel, dtype=np.float32))
    metadados = {
        "sample_rate": audio_config["sample_rate"],
        "hop_length": audio_config["hop_length"],
        "n_fft": audio_config["n_fft"],
        "n_mels": audio_config["n_mels"],
        "num_frames": int(np.asarray(mel).shape[0]),
        "scale": "log",
    }
    with open(destino.with_suffix(".json"), "w", encoding="utf-8") as f:
        json.dump(metadados, f, indent=2, ensure_ascii=False)
    return destino


def read_mel_interchange(path: str) -> Tuple[np.ndarray, Dict[str, Any]]:
    caminho = Path(path)
    with open(caminho.with_suffix(".json"), "r", encoding="utf-8") as f:
        metadados = json.load(f)
    return np.load(caminho), metadados


def load_vocoder(config: Dict[str, Any]):
    """
    Instancia o vocoder configurado.

    Se o binding estiver indisponível e vocoder.allow_fallback for verdadeiro,
    usa Griffin-Lim; caso contrário levanta RuntimeError.
    """
    from vocoders.base import VocoderUnavailable
    from vocoders.registry import get_vocoder

    backend = config["vocoder"]["backend"]
    try:
        return get_vocoder(backend, config)
    except VocoderUnavailable as e:
        if backend == FALLBACK_BACKEND or not config["vocoder"].get("allow_fallback", True):
            raise RuntimeError(f"Vocoder '{backend}' indisponível e fallback desabilitado: {e}") from e
        logger.warning(f"Vocoder '{backend}' indisponível ({e}); usando {FALLBACK_BACKEND}")
        return get_vocoder(FALLBACK_BACKEND, config)


def vocode(mel: np.ndarray, config: Dict[str, Any], vocoder=None) -> np.ndarray:
    """Converte mel log [frames x n_mels] em forma de onda."""
    vocoder = vocoder or load_vocoder(config)
    return vocoder(np.asarray(mel, dtype=np.float32))
