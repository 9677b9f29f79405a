"""
Vocoder de reconstrução de fase (Griffin-Lim) a partir do mel.

Inverte o banco de filtros mel pela pseudo-inversa e estima a fase por
iterações de Griffin-Lim com fase inicial nula, de modo que o mesmo mel
produz sempre a mesma forma de onda.
"""

from typing import Any, Dict

import librosa
import numpy as np

from services.feature_service import mel_basis
from vocoders.base import Vocoder


class GriffinLimVocoder(Vocoder):
    nome = "griffin_lim"

    def __init__(self, audio_config: Dict[str, Any], n_iter: int = 32):
        self.audio = audio_config
        self.n_iter = n_iter
        self.basis_pinv = np.linalg.pinv(mel_basis(audio_config))

    def magnitude(self, mel: np.ndarray) -> np.ndarray:
        """Magnitude linear [1 + n_fft/2, num_frames] a partir do mel log."""
        return np.maximum(self.basis_pinv @ np.exp(np.asarray(mel, dtype=np.float64).T), 0.0)

    def __call__(self, mel: np.ndarray) -> np.ndarray:
        mel = np.asarray(mel)
        if mel.ndim != 2 or mel.shape[1] != self.audio["n_mels"]:
            raise ValueError(f"Mel com shape {mel.shape}; esperado [frames x {self.audio['n_mels']}]")
        hop = self.audio["hop_length"]
        audio = librosa.griffinlim(
            self.magnitude(mel),
            n_iter=self.n_iter,
            hop_length=hop,
            win_length=self.audio["win_length"],
            n_fft=self.audio["n_fft"],
            window="hann",
            center=True,
            pad_mode="constant",
            init=None,
            length=mel.shape[0] * hop,
        )
        return audio.astype(np.float32)


def build(config: Dict[str, Any]) -> Vocoder:
    return GriffinLimVocoder(config["audio"], int(config["vocoder"]["griffin_lim_iters"]))
