"""
Serviço de Configuração
========================
Centraliza os parâmetros do sistema CUC-VAE TTS.

PRECEDÊNCIA:
1. DEFAULT_CONFIG (este módulo)
2. Arquivo JSON informado via --config
3. Flags da linha de comando

AMBIENTE (.env via python-dotenv):
- CUCVAE_CACHE_DIR: diretório do cache de embeddings de contexto
- CUCVAE_DEVICE: dispositivo torch (cpu, cuda, ...)
- CUCVAE_VOCODER_COMMAND: comando externo do vocoder
"""

import copy
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

load_dotenv()

# ========================================
# CONSTANTES
# ========================================

VARIANTES = ["baseline", "global_vae", "fine_grained_vae", "cvae", "cuc_vae"]

# Variantes que consomem o cache de contexto
VARIANTES_COM_CONTEXTO = ["cuc_vae"]

# Variantes com prior condicional (rede de prior a partir de H e D)
VARIANTES_PRIOR_CONDICIONAL = ["cvae", "cuc_vae"]

RESOLVED_CONFIG_NAME = "resolved_config.json"


# ========================================
# PARÂMETROS CONFIGURÁVEIS
# ========================================

DEFAULT_CONFIG: Dict[str, Any] = {
    "audio": {
        "sample_rate": 22050,
        "n_fft": 1024,
        "hop_length": 256,
        "win_length": 1024,
        "n_mels": 80,
        "fmin": 0.0,
        "fmax": 8000.0,
        "f0_min": 70.0,
        "f0_max": 400.0,
        "voicing_threshold": 0.3,
        "log_floor": 1e-5,
    },
    "corpus": {
        "context_size": 5,
        "book_match_threshold": 0.85,
        "num_workers": 1,
    },
    "g2p": {
        "backend": "g2p_en",
        "lexicon_path": None,
        "word_boundary": "sp",
        "edge_silence": False,
    },
    "context": {
        "embedder": "stub",
        "d_ctx": 768,
        "model_name": "bert-base-uncased",
        "batch_size": 16,
        "cache_dir": None,
    },
    "model": {
        "variant": "cuc_vae",
        "d_model": 256,
        "encoder": {
            "layers": 4,
            "heads": 2,
            "ff_dim": 1024,
            "kernel_sizes": [9, 1],
            "dropout": 0.1,
            "positional": True,
        },
        "fusion": {
            "heads": 8,
            "d_attn": 256,
            "mask_sentinel": False,
        },
        "duration_predictor": {
            "filter_size": 256,
            "kernel_size": 3,
            "dropout": 0.5,
        },
        "variance_predictor": {
            "filter_size": 256,
            "kernel_size": 3,
            "dropout": 0.5,
        },
        "vae": {
            "d_z": 2,
            "hidden": 256,
            "layers": 4,
            "logvar_min": -14.0,
            "logvar_max": 14.0,
            "zero_init_output": True,
        },
        "reference_encoder": {
            "channels": 128,
            "kernel_size": 3,
            "layers": 3,
        },
        "decoder": {
            "layers": 4,
            "heads": 2,
            "ff_dim": 1024,
            "kernel_sizes": [9, 1],
            "dropout": 0.1,
            "positional": True,
        },
    },
    "training": {
        "seed": 1234,
        "steps": 100000,
        "max_frames_per_batch": 8000,
        "learning_rate": 1e-3,
        "warmup_steps": 4000,
        "adam_betas": [0.9, 0.98],
        "adam_eps": 1e-9,
        "beta1_max": 1e-4,
        "beta2_max": 1e-4,
        "kl_warmup_steps": 10000,
        "grad_clip": 1.0,
        "checkpoint_interval": 5000,
        "log_interval": 100,
        "divergence_factor": 1000.0,
        "deterministic": True,
        "device": "cpu",
    },
    "inference": {
        "mode": "sample",
        "temperature": 1.0,
        "standard_gaussian": False,
        "reference_durations": False,
        "num_samples": 1,
        "seed": 7,
    },
    "vocoder": {
        "backend": "griffin_lim",
        "griffin_lim_iters": 32,
        "torchscript_path": None,
        "command": None,
        "allow_fallback": True,
    },
    "evaluation": {
        "gpe_threshold": 0.2,
        "frame_tolerance": 2,
        "n_mfcc": 13,
        "num_samples": 20,
        "phonemes_per_utterance": 3,
        "num_utterances": 11,
        "seed": 11,
    },
    "paths": {
        "corpus_dir": None,
        "out_dir": "data/preprocessed",
        "manifest": None,
        "aligner_dir": None,
        "checkpoint_dir": "checkpoints",
        "checkpoint": None,
        "synth_dir": "synth",
        "eval_dir": "evaluation",
    },
}


# ========================================
# CARGA E MESCLAGEM
# ========================================

def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Mescla recursivamente `override` sobre uma cópia de `base`."""
    resultado = copy.deepcopy(base)
    for chave, valor in (override or {}).items():
        if isinstance(valor, dict) and isinstance(resultado.get(chave), dict):
            resultado[chave] = deep_merge(resultado[chave], valor)
        else:
            resultado[chave] = copy.deepcopy(valor)
    return resultado


def set_dotted(config: Dict[str, Any], chave: str, valor: Any) -> None:
    """Atribui `valor` na chave pontuada (ex.: 'training.seed')."""
    partes = chave.split(".")
    alvo = config
    for parte in partes[:-1]:
        alvo = alvo.setdefault(parte, {})
    alvo[partes[-1]] = valor


def get_dotted(config: Dict[str, Any], chave: str, padrao: Any = None) -> Any:
    alvo: Any = config
    for parte in chave.split("."):
        if not isinstance(alvo, dict) or parte not in alvo:
            return padrao
        alvo = alvo[parte]
    return alvo


def _apply_environment(config: Dict[str, Any]) -> None:
    cache_dir = os.getenv("CUCVAE_CACHE_DIR")
    if cache_dir:
        config["context"]["cache_dir"] = cache_dir
    device = os.getenv("CUCVAE_DEVICE")
    if device:
        config["training"]["device"] = device
    comando = os.getenv("CUCVAE_VOCODER_COMMAND")
    if comando and not config["vocoder"].get("command"):
        config["vocoder"]["command"] = comando


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """
    Resolve a configuração final.

    Args:
        path: Arquivo JSON opcional com valores parciais
        overrides: Dict de chaves pontuadas vindas das flags (None é ignorado)

    Returns:
        Configuração completa e validada
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    _apply_environment(config)

    if path:
        caminho = Path(path)
        if not caminho.exists():
            raise ValueError(f"Arquivo de configuração não encontrado: {caminho}")
        with open(caminho, "r", encoding="utf-8") as f:
            config = deep_merge(config, json.load(f))
        logger.info(f"Configuração carregada de {caminho}")

    for chave, valor in (overrides or {}).items():
        if valor is not None:
            set_dotted(config, chave, valor)

    validate_config(config)
    return config


def validate_config(config: Dict[str, Any]) -> None:
    """Valida combinações de parâmetros; levanta ValueError se inválidas."""
    variante = config["model"]["variant"]
    if variante not in VARIANTES:
        raise ValueError(f"Variante desconhecida: '{variante}'. Opções: {VARIANTES}")

    contexto = int(config["corpus"]["context_size"])
    if contexto < 1:
        raise ValueError(f"context_size (L) deve ser >= 1, recebido {contexto}")
    if variante not in VARIANTES_COM_CONTEXTO:
        logger.warning(f"Variante '{variante}' ignora o contexto L={contexto}")

    if float(config["inference"]["temperature"]) < 0:
        raise ValueError(f"Temperatura deve ser >= 0, recebido {config['inference']['temperature']}")

    if config["inference"]["mode"] not in ("sample", "mean"):
        raise ValueError(f"Modo de inferência inválido: {config['inference']['mode']}")

    d_model = config["model"]["d_model"]
    for bloco in ("encoder", "decoder"):
        heads = config["model"][bloco]["heads"]
        if d_model % heads != 0:
            raise ValueError(f"{bloco}: d_model={d_model} não divisível por heads={heads}")
    fusao = config["model"]["fusion"]
    if fusao["d_attn"] % fusao["heads"] != 0:
        raise ValueError(f"fusion: d_attn={fusao['d_attn']} não divisível por heads={fusao['heads']}")


# ========================================
# PROVENIÊNCIA
# ========================================

def config_fingerprint(config: Dict[str, Any]) -> str:
    """Hash estável das seções que determinam a arquitetura e as features."""
    relevante = {"audio": config["audio"], "model": config["model"], "d_ctx": config["context"]["d_ctx"]}
    texto = json.dumps(relevante, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(texto.encode("utf-8")).hexdigest()


def dump_config(config: Dict[str, Any], out_dir: str) -> Path:
    """Salva a configuração resolvida ao lado das saídas do comando."""
    destino = Path(out_dir)
    destino.mkdir(parents=True, exist_ok=True)
    caminho = destino / RESOLVED_CONFIG_NAME
    with open(caminho, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, ensure_ascii=False, sort_keys=True)
    return caminho


def context_cache_dir(config: Dict[str, Any]) -> Path:
    """Diretório do cache de contexto (padrão: ao lado das features)."""
    if config["context"].get("cache_dir"):
        return Path(config["context"]["cache_dir"])
    return Path(config["paths"]["out_dir"]) / "features"
