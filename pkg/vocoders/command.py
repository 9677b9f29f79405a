"""
Vocoder externo via troca de arquivos.

O comando recebe os placeholders {mel} (arquivo .npy com metadados .json
ao lado) e {wav} (saída PCM-16 esperada).
"""

import logging
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Any, Dict

import numpy as np

from services.vocoder_service import read_wav, write_mel_interchange
from vocoders.base import Vocoder, VocoderUnavailable

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


class CommandVocoder(Vocoder):
    nome = "command"

    def __init__(self, comando: str, audio_config: Dict[str, Any]):
        self.comando = comando
        self.audio = audio_config

    def __call__(self, mel: np.ndarray) -> np.ndarray:
        with tempfile.TemporaryDirectory() as tmp:
            mel_path = Path(tmp) / "mel.npy"
            wav_path = Path(tmp) / "out.wav"
            write_mel_interchange(mel, str(mel_path), self.audio)
            args = shlex.split(self.comando.format(mel=mel_path, wav=wav_path))
            processo = subprocess.run(args, capture_output=True, text=True)
            if processo.returncode != 0:
                raise RuntimeError(
                    f"Vocoder externo falhou (código {processo.returncode}): {processo.stderr.strip()}"
                )
            if not wav_path.exists():
                raise RuntimeError(f"Vocoder externo não gerou {wav_path.name}")
            audio, sr = read_wav(str(wav_path))
            if sr != self.audio["sample_rate"]:
                logger.warning(f"Vocoder externo devolveu {sr} Hz; esperado {self.audio['sample_rate']}")
            return audio


def build(config: Dict[str, Any]) -> Vocoder:
    comando = config["vocoder"].get("command")
    if not comando:
        raise VocoderUnavailable("Comando do vocoder externo não configurado")
    return CommandVocoder(comando, config["audio"])
