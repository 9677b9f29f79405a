"""
Estruturas comuns dos vocoders
"""

from abc import ABC, abstractmethod

import numpy as np


class VocoderUnavailable(RuntimeError):
    """Binding configurado sem artefato (arquivo, comando) utilizável."""


class Vocoder(ABC):
    """Recebe mel log [num_frames x n_mels] e devolve forma de onda float32."""

    nome: str = ""

    @abstractmethod
    def __call__(self, mel: np.ndarray) -> np.ndarray:
        ...
