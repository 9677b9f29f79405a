"""
Registry de vocoders
"""
import importlib
from typing import Any, Dict

from vocoders.base import Vocoder

TIPOS = {
    "griffin_lim": "vocoders.griffin_lim",
    "torchscript": "vocoders.torchscript",
    "command": "vocoders.command",
}


def get_vocoder(nome: str, config: Dict[str, Any]) -> Vocoder:
    if nome not in TIPOS:
        raise ValueError(f"Vocoder não registrado: '{nome}'. Opções: {sorted(TIPOS)}")
    modulo = importlib.import_module(TIPOS[nome])
    return modulo.build(config)
