"""
Fixtures compartilhadas dos testes
===================================
Configuração reduzida, lotes sintéticos e sinais de teste.
"""

import sys
from pathlib import Path
from typing import Any, Dict, Sequence

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from services.config_service import DEFAULT_CONFIG, deep_merge

FIXTURES_DIR = Path(__file__).parent / "fixtures"

_BLOCO = {"layers": 1, "heads": 2, "ff_dim": 32, "kernel_sizes": [3, 1], "dropout": 0.0, "positional": True}
_PREDITOR = {"filter_size": 16, "kernel_size": 3, "dropout": 0.0}


def tiny_config(variant: str = "cuc_vae", **secoes) -> Dict[str, Any]:
    """Configuração mínima (8 kHz, 20 mels, d_model 16) para rodar em CPU em segundos."""
    base = deep_merge(DEFAULT_CONFIG, {
        "audio": {
            "sample_rate": 8000, "n_fft": 256, "hop_length": 64, "win_length": 256,
            "n_mels": 20, "fmin": 0.0, "fmax": 4000.0,
        },
        "corpus": {"context_size": 2},
        "g2p": {"backend": "lexicon"},
        "context": {"d_ctx": 16},
        "model": {
            "variant": variant,
            "d_model": 16,
            "encoder": _BLOCO,
            "decoder": _BLOCO,
            "fusion": {"heads": 2, "d_attn": 8, "mask_sentinel": False},
            "duration_predictor": _PREDITOR,
            "variance_predictor": _PREDITOR,
            "vae": {"d_z": 2, "hidden": 16, "layers": 4, "zero_init_output": False},
            "reference_encoder": {"channels": 8, "kernel_size": 3, "layers": 2},
        },
        "training": {
            "steps": 4, "max_frames_per_batch": 400, "warmup_steps": 2, "kl_warmup_steps": 4,
            "checkpoint_interval": 2, "log_interval": 1, "learning_rate": 1e-3,
        },
        "vocoder": {"griffin_lim_iters": 4},
        "evaluation": {"num_samples": 3, "num_utterances": 2},
    })
    return deep_merge(base, secoes)


def make_batch(
    config: Dict[str, Any],
    phoneme_lengths: Sequence[int] = (5, 3),
    seed: int = 0,
    dtype: torch.dtype = torch.float32
) -> Dict[str, torch.Tensor]:
    """Lote sintético coerente: durações 1..4, mel aleatório com sum(d) quadros por linha."""
    rng = np.random.default_rng(seed)
    B = len(phoneme_lengths)
    T = max(phoneme_lengths)
    n_mels = config["audio"]["n_mels"]
    num_pares = 2 * config["corpus"]["context_size"]

    ids = torch.zeros(B, T, dtype=torch.long)
    duracoes = torch.zeros(B, T, dtype=torch.long)
    for b, t in enumerate(phoneme_lengths):
        ids[b, :t] = torch.as_tensor(rng.integers(4, 40, size=t))
        duracoes[b, :t] = torch.as_tensor(rng.integers(1, 5, size=t))
    quadros = duracoes.sum(dim=1)
    N = int(quadros.max())
    mel = torch.as_tensor(rng.standard_normal((B, N, n_mels)), dtype=dtype)
    mel_mask = torch.arange(N)[None, :] >= quadros[:, None]
    mel = mel.masked_fill(mel_mask[..., None], 0.0)
    fonemas = torch.as_tensor(list(phoneme_lengths))

    return {
        "phoneme_ids": ids,
        "phoneme_mask": torch.arange(T)[None, :] >= fonemas[:, None],
        "phoneme_lengths": fonemas,
        "speaker_idx": torch.zeros(B, dtype=torch.long),
        "durations": duracoes,
        "mel": mel,
        "mel_mask": mel_mask,
        "mel_lengths": quadros,
        "pitch": torch.as_tensor(rng.uniform(4.5, 5.5, size=(B, T)), dtype=dtype),
        "energy": torch.as_tensor(rng.uniform(0.0, 2.0, size=(B, T)), dtype=dtype),
        "context": torch.as_tensor(rng.standard_normal((B, num_pares, config["context"]["d_ctx"])), dtype=dtype),
        "context_mask": torch.zeros(B, num_pares, dtype=torch.bool),
    }


def sine(freq: float, seconds: float, sample_rate: int, amplitude: float = 0.5) -> np.ndarray:
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    return (amplitude * np.sin(2 * np.pi * freq * t)).astype(np.float32)
