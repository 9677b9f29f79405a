"""
Vocoder neural exportado em TorchScript (ex.: HiFi-GAN pré-treinado).

Entrada do módulo: mel [1, n_mels, frames]; saída: [1, amostras] ou
[1, 1, amostras].
"""

from pathlib import Path
from typing import Any, Dict

import numpy as np
import torch

from vocoders.base import Vocoder, VocoderUnavailable


class TorchScriptVocoder(Vocoder):
    nome = "torchscript"

    def __init__(self, path: str, device: str = "cpu"):
        self.device = torch.device(device)
        self.module = torch.jit.load(path, map_location=self.device).eval()

    @torch.no_grad()
    def __call__(self, mel: np.ndarray) -> np.ndarray:
        entrada = torch.as_tensor(np.asarray(mel, dtype=np.float32).T).unsqueeze(0).to(self.device)
        return self.module(entrada).reshape(-1).cpu().numpy().astype(np.float32)


def build(config: Dict[str, Any]) -> Vocoder:
    caminho = config["vocoder"].get("torchscript_path")
    if not caminho or not Path(caminho).exists():
        raise VocoderUnavailable(f"Arquivo TorchScript do vocoder indisponível: {caminho}")
    return TorchScriptVocoder(caminho, config["training"].get("device", "cpu"))
