"""
Serviço de Treinamento
=======================
Objetivo ELBO (reconstrução L1 do mel, MSE das log-durações, dois termos KL),
loop de otimização com checkpoints e a grade de ablação das variantes.

REGISTROS (paths.checkpoint_dir):
- train.log: log dedicado do treino
- losses.jsonl: um LossBreakdown por passo registrado
- step_<n>.pt: checkpoints
- resolved_config.json
"""

import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch.nn.utils.rnn import pad_sequence
from torch.utils.data import Dataset

from models.cu_embedding import log_duration_target
from models.cuc_vae import kl_posterior_prior, kl_prior_standard
from models.tts_model import CUCVAETTS, build_model, count_trainable_parameters
from services.config_service import (
    VARIANTES,
    VARIANTES_COM_CONTEXTO,
    config_fingerprint,
    context_cache_dir,
    deep_merge,
    dump_config,
)
from services.context_service import adopt_cache_metadata, load_context_cache
from services.corpus_service import MANIFEST_NAME, SENTINEL, UtteranceRecord, read_manifest
from services.feature_service import load_features, phoneme_level_average
from services.g2p_service import phonemes_to_ids

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s | %(levelname)s | %(funcName)s | %(message)s'
LOSS_TERMS = ("recon", "dur", "variance", "kl_post", "kl_prior")


# ========================================
# DADOS
# ========================================

def speakers_from_records(records: Sequence[UtteranceRecord]) -> List[str]:
    return sorted({r.speaker_id for r in records})


def sentinel_pair_mask(record: UtteranceRecord, known_ids: Optional[set] = None) -> np.ndarray:
    """True para pares cujos dois lados são sentinela (ou vizinhos fora do manifesto)."""
    ausente = [
        uid == SENTINEL or (known_ids is not None and uid not in known_ids)
        for uid in record.context_ids
    ]
    return np.array([ausente[k] and ausente[k + 1] for k in range(len(ausente) - 1)], dtype=bool)


class TTSDataset(Dataset):
    """
    Elocuções do manifesto com features, alvos por fonema e contexto.

    As features são carregadas na construção (escala de bancada).
    """

    def __init__(
        self,
        records: Sequence[UtteranceRecord],
        config: Dict[str, Any],
        speakers: Sequence[str],
        context_cache: Optional[Dict[str, np.ndarray]] = None
    ):
        self.records = list(records)
        self.speaker_index = {s: i for i, s in enumerate(speakers)}
        self.context_cache = context_cache
        num_pares = 2 * int(config["corpus"]["context_size"])
        conhecidos = {r.id for r in self.records}

        self.items: List[Dict[str, Any]] = []
        for r in self.records:
            features = load_features(r.feature_path)
            ids = np.array(phonemes_to_ids(r.phonemes.split()), dtype=np.int64)
            if len(ids) != len(features.durations):
                raise ValueError(
                    f"{r.id}: {len(ids)} fonemas no manifesto e {len(features.durations)} durações"
                )
            item = {
                "id": r.id,
                "phoneme_ids": ids,
                "speaker_idx": self.speaker_index[r.speaker_id],
                "durations": features.durations.astype(np.int64),
                "mel": features.mel,
                "pitch": np.log1p(phoneme_level_average(features.f0, features.durations, voiced_only=True)),
                "energy": np.log1p(phoneme_level_average(features.energy, features.durations)),
                "context_mask": sentinel_pair_mask(r, conhecidos),
            }
            if context_cache is not None:
                contexto = context_cache[r.id]
                if contexto.shape[0] != num_pares:
                    raise ValueError(f"{r.id}: cache com {contexto.shape[0]} pares; configurado 2L={num_pares}")
                item["context"] = contexto.astype(np.float32)
            self.items.append(item)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, idx: int) -> Dict[str, Any]:
        return self.items[idx]

    @property
    def frame_lengths(self) -> List[int]:
        return [int(item["mel"].shape[0]) for item in self.items]


def collate_batch(items: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """Empilha itens com padding; máscaras com True = padding."""
    def _pad(chave, dtype):
        return pad_sequence([torch.as_tensor(i[chave], dtype=dtype) for i in items], batch_first=True)

    fonemas = torch.tensor([len(i["phoneme_ids"]) for i in items])
    quadros = torch.tensor([i["mel"].shape[0] for i in items])
    lote = {
        "ids": [i["id"] for i in items],
        "phoneme_ids": _pad("phoneme_ids", torch.long),
        "speaker_idx": torch.tensor([i["speaker_idx"] for i in items], dtype=torch.long),
        "durations": _pad("durations", torch.long),
        "mel": _pad("mel", torch.float32),
        "pitch": _pad("pitch", torch.float32),
        "energy": _pad("energy", torch.float32),
        "phoneme_lengths": fonemas,
        "mel_lengths": quadros,
        "context_mask": torch.as_tensor(np.stack([i["context_mask"] for i in items])),
    }
    lote["phoneme_mask"] = torch.arange(lote["phoneme_ids"].shape[1])[None, :] >= fonemas[:, None]
    lote["mel_mask"] = torch.arange(lote["mel"].shape[1])[None, :] >= quadros[:, None]
    if all("context" in i for i in items):
        lote["context"] = torch.as_tensor(np.stack([i["context"] for i in items]))
    return lote


def batch_to_device(batch: Dict[str, Any], device: torch.device) -> Dict[str, Any]:
    return {k: v.to(device) if isinstance(v, torch.Tensor) else v for k, v in batch.items()}


def frame_budget_batches(lengths: Sequence[int], max_frames: int, seed: int, epoch: int) -> List[List[int]]:
    """
    Lotes com (maior comprimento x tamanho do lote) <= max_frames, em ordem
    embaralhada determinística por (seed, epoch).
    """
    ordem = np.random.default_rng(seed + epoch).permutation(len(lengths))
    lotes: List[List[int]] = []
    atual: List[int] = []
    maior = 0
    for i in ordem:
        novo_maior = max(maior, lengths[i])
        if atual and novo_maior * (len(atual) + 1) > max_frames:
            lotes.append(atual)
            atual, novo_maior = [], lengths[i]
        atual.append(int(i))
        maior = novo_maior
    if atual:
        lotes.append(atual)
    return lotes


# ========================================
# OBJETIVO
# ========================================

@dataclass
class LossBreakdown:
    recon: torch.Tensor
    dur: torch.Tensor
    variance: torch.Tensor
    kl_post: torch.Tensor
    kl_prior: torch.Tensor
    beta1: float
    beta2: float
    total: torch.Tensor

    def as_dict(self) -> Dict[str, float]:
        return {
            "recon": float(self.recon),
            "dur": float(self.dur),
            "variance": float(self.variance),
            "kl_post": float(self.kl_post),
            "kl_prior": float(self.kl_prior),
            "beta1": float(self.beta1),
            "beta2": float(self.beta2),
            "total": float(self.total),
        }


def elbo_loss(
    batch: Dict[str, Any],
    model: CUCVAETTS,
    betas: Tuple[float, float],
    outputs: Optional[Dict[str, Any]] = None,
    epsilon: Optional[torch.Tensor] = None,
    generator: Optional[torch.Generator] = None
) -> LossBreakdown:
    """
    total = recon + dur + variance + β1·kl_post + β2·kl_prior

    - recon: L1 médio do mel nos quadros válidos
    - dur: MSE das log-durações nos fonemas válidos
    - variance: MSE de pitch + energia (somente baseline)
    - kl_post / kl_prior: somados sobre fonemas, média no lote

    Raises:
        RuntimeError: termo não finito (nomeado na mensagem)
    """
    saida = outputs if outputs is not None else model(batch, epsilon=epsilon, generator=generator)
    beta1, beta2 = betas

    mel_pred = saida["mel"]
    n = mel_pred.shape[1]
    validos = (~saida["frame_mask"]).to(mel_pred.dtype)
    alvo = batch["mel"][:, :n].to(mel_pred.dtype)
    recon = ((mel_pred - alvo).abs() * validos[..., None]).sum() / (validos.sum() * mel_pred.shape[-1])

    mascara = batch["phoneme_mask"]
    fonemas_validos = (~mascara).to(mel_pred.dtype)
    D = saida["log_duration"]
    dur = (((D - log_duration_target(batch["durations"]).to(D.dtype)) ** 2) * fonemas_validos).sum() / fonemas_validos.sum()

    zero = mel_pred.new_zeros(())
    variance = zero
    if "pitch_pred" in saida:
        variance = (
            (((saida["pitch_pred"] - batch["pitch"].to(D.dtype)) ** 2) * fonemas_validos).sum()
            + (((saida["energy_pred"] - batch["energy"].to(D.dtype)) ** 2) * fonemas_validos).sum()
        ) / fonemas_validos.sum()

    kl_post, kl_prior = zero, zero
    if "prior" in saida and "posterior" in saida:
        kl_post = kl_posterior_prior(saida["posterior"], saida["prior"], mascara).mean()
        kl_prior = kl_prior_standard(saida["prior"], mascara).mean()
    elif "posterior" in saida:
        posterior = saida["posterior"]
        mascara_kl = mascara if posterior.mu.shape[1] == mascara.shape[1] else None
        kl_post = kl_prior_standard(posterior, mascara_kl).mean()

    for nome, valor in (("recon", recon), ("dur", dur), ("variance", variance), ("kl_post", kl_post), ("kl_prior", kl_prior)):
        if not torch.isfinite(valor):
            raise RuntimeError(f"Termo de perda '{nome}' não finito: {float(valor)}")

    total = recon + dur + variance + beta1 * kl_post + beta2 * kl_prior
    return LossBreakdown(recon, dur, variance, kl_post, kl_prior, beta1, beta2, total)


def kl_anneal(step: int, config: Dict[str, Any]) -> Tuple[float, float]:
    """Aquecimento linear de (0, 0) até (beta1_max, beta2_max) em kl_warmup_steps."""
    if step < 0:
        raise ValueError(f"Passo negativo: {step}")
    horizonte = int(config["kl_warmup_steps"])
    fracao = 1.0 if horizonte <= 0 else min(step / horizonte, 1.0)
    return fracao * float(config["beta1_max"]), fracao * float(config["beta2_max"])


def noam_lr(step: int, peak: float, warmup: int) -> float:
    """peak · min(step/warmup, sqrt(warmup/step)); máximo em step == warmup."""
    step = max(step, 1)
    warmup = max(warmup, 1)
    return peak * min(step / warmup, math.sqrt(warmup / step))


# ========================================
# CHECKPOINTS
# ========================================

def save_checkpoint(
    path: str,
    model: CUCVAETTS,
    optimizer: Optional[torch.optim.Optimizer],
    scheduler: Optional[Any],
    step: int,
    config: Dict[str, Any]
) -> Path:
    destino = Path(path)
    destino.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "scheduler": scheduler.state_dict() if scheduler is not None else None,
        "step": step,
        "config": config,
        "fingerprint": config_fingerprint(config),
        "speakers": list(model.speakers.speakers),
    }, destino)
    return destino


def load_checkpoint(
    path: str,
    device: str = "cpu",
    config: Optional[Dict[str, Any]] = None
) -> Tuple[CUCVAETTS, Dict[str, Any]]:
    """Reconstrói o modelo do checkpoint; avisa se a configuração atual diverge."""
    caminho = Path(path)
    if not caminho.exists():
        raise ValueError(f"Checkpoint não encontrado: {caminho}")
    dados = torch.load(caminho, map_location=device, weights_only=False)
    if config is not None and config_fingerprint(config) != dados["fingerprint"]:
        logger.warning(f"Configuração atual difere da usada no checkpoint {caminho.name}; usando a do checkpoint")
    model = build_model(dados["config"], dados["speakers"]).to(device)
    model.load_state_dict(dados["model"])
    model.eval()
    return model, dados


# ========================================
# LOOP DE TREINO
# ========================================

def set_seed(seed: int, deterministic: bool = True) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        if torch.backends.cudnn.is_available():
            torch.backends.cudnn.benchmark = False
            torch.backends.cudnn.deterministic = True


def _attach_log_file(path: Path) -> logging.Handler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
    logger.addHandler(handler)
    return handler


def load_training_records(config: Dict[str, Any]) -> List[UtteranceRecord]:
    manifest = config["paths"].get("manifest") or str(Path(config["paths"]["out_dir"]) / MANIFEST_NAME)
    return read_manifest(manifest)


def train(
    config: Dict[str, Any],
    records: Optional[Sequence[UtteranceRecord]] = None,
    steps: Optional[int] = None,
    on_step: Optional[Callable[[Dict[str, float]], None]] = None
) -> Dict[str, Any]:
    """
    Treina o modelo da variante configurada.

    Args:
        config: Configuração resolvida
        records: Elocuções (padrão: manifesto de paths.manifest ou out_dir)
        steps: Número de passos (padrão: training.steps)
        on_step: Callback opcional com o registro de cada passo

    Returns:
        Dict com model, history (um registro por passo), checkpoints e final

    Raises:
        RuntimeError: termo de perda não finito ou divergência
    """
    tr = config["training"]
    total_passos = int(steps if steps is not None else tr["steps"])
    seed = int(tr["seed"])
    set_seed(seed, bool(tr["deterministic"]))
    device = torch.device(tr.get("device", "cpu"))

    records = list(records) if records is not None else load_training_records(config)
    if not records:
        raise ValueError("Nenhuma elocução para treinar")
    variante = config["model"]["variant"]

    cache = None
    if variante in VARIANTES_COM_CONTEXTO:
        cache_dir = str(context_cache_dir(config))
        config = adopt_cache_metadata(config, cache_dir)
        cache = load_context_cache([r.id for r in records], cache_dir)

    speakers = speakers_from_records(records)
    dataset = TTSDataset(records, config, speakers, cache)
    model = build_model(config, speakers).to(device)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=float(tr["learning_rate"]),
        betas=tuple(tr["adam_betas"]), eps=float(tr["adam_eps"]),
    )
    warmup = int(tr["warmup_steps"])
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda s: noam_lr(s + 1, 1.0, warmup))

    out_dir = Path(config["paths"]["checkpoint_dir"])
    dump_config(config, str(out_dir))
    handler = _attach_log_file(out_dir / "train.log")
    losses_path = out_dir / "losses.jsonl"
    losses_path.write_text("", encoding="utf-8")

    generator = torch.Generator(device=device).manual_seed(seed)
    log_interval = max(1, int(tr["log_interval"]))
    ckpt_interval = max(1, int(tr["checkpoint_interval"]))
    lengths = dataset.frame_lengths

    history: List[Dict[str, float]] = []
    checkpoints: List[str] = []
    total_inicial: Optional[float] = None
    passo, epoca = 0, 0

    logger.info(
        f"Treino '{variante}': {len(dataset)} elocuções, {count_trainable_parameters(model)} parâmetros, "
        f"{total_passos} passos"
    )
    try:
        while passo < total_passos:
            for indices in frame_budget_batches(lengths, int(tr["max_frames_per_batch"]), seed, epoca):
                batch = batch_to_device(collate_batch([dataset[i] for i in indices]), device)
                model.train()
                betas = kl_anneal(passo, tr)
                perdas = elbo_loss(batch, model, betas, generator=generator)
                total = float(perdas.total)

                if total_inicial is None:
                    total_inicial = total
                elif total > float(tr["divergence_factor"]) * max(total_inicial, 1e-8):
                    raise RuntimeError(
                        f"Treino divergiu no passo {passo}: total={total:.4g}, inicial={total_inicial:.4g}, "
                        f"termos={perdas.as_dict()}"
                    )

                optimizer.zero_grad(set_to_none=True)
                perdas.total.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), float(tr["grad_clip"]))
                lr = optimizer.param_groups[0]["lr"]
                optimizer.step()
                scheduler.step()
                passo += 1

                registro = {"step": passo, "lr": lr, **perdas.as_dict()}
                history.append(registro)
                if on_step:
                    on_step(registro)
                if passo == 1 or passo % log_interval == 0 or passo == total_passos:
                    with open(losses_path, "a", encoding="utf-8") as f:
                        f.write(json.dumps(registro) + "\n")
                    logger.info(
                        f"passo {passo}: total={registro['total']:.4f} recon={registro['recon']:.4f} "
                        f"dur={registro['dur']:.4f} kl_post={registro['kl_post']:.4f} kl_prior={registro['kl_prior']:.4f}"
                    )
                if passo % ckpt_interval == 0 or passo == total_passos:
                    caminho = save_checkpoint(str(out_dir / f"step_{passo}.pt"), model, optimizer, scheduler, passo, config)
                    checkpoints.append(str(caminho))
                if passo >= total_passos:
                    break
            epoca += 1
    except Exception as e:
        logger.error(f"✗ Treino interrompido: {e}", exc_info=True)
        raise
    finally:
        logger.removeHandler(handler)
        handler.close()

    logger.info(f"✓ Treino concluído: {passo} passos, checkpoint final {checkpoints[-1]}")
    return {"model": model, "history": history, "checkpoints": checkpoints, "final": history[-1]}


def run_ablation_grid(
    config: Dict[str, Any],
    records: Optional[Sequence[UtteranceRecord]] = None,
    steps: int = 100,
    variants: Sequence[str] = VARIANTES
) -> pd.DataFrame:
    """Treina cada variante por `steps` passos; tabela com perdas finais e parâmetros."""
    base_dir = Path(config["paths"]["checkpoint_dir"])
    linhas = []
    for variante in variants:
        cfg = deep_merge(config, {
            "model": {"variant": variante},
            "paths": {"checkpoint_dir": str(base_dir / variante)},
        })
        resultado = train(cfg, records, steps=steps)
        linhas.append({
            "variant": variante,
            "trainable_parameters": count_trainable_parameters(resultado["model"]),
            "uses_context": resultado["model"].uses_context,
            **{k: resultado["final"][k] for k in (*LOSS_TERMS, "total")},
        })
        logger.info(f"✓ Ablação '{variante}' concluída")

    tabela = pd.DataFrame(linhas)
    base_dir.mkdir(parents=True, exist_ok=True)
    tabela.to_csv(base_dir / "ablation.csv", index=False)
    return tabela
