"""
Serviço de Avaliação
=====================
Métricas objetivas de síntese e estudo de caso.

MÉTRICAS:
- FFE: (quadros com erro grosseiro de pitch + quadros com erro de vozeamento) / N
- MCD: (10·√2 / ln 10) · ‖c_ref[1..13] − c_test[1..13]‖₂ médio por quadro
- Diversidade prosódica: desvio padrão, entre N amostras, da energia
  relativa (E) e do F0 médio de fonemas selecionados

RELATÓRIOS: tabela por elocução + linha MEDIA (CSV e JSON); estudo de caso
com uma tabela por contexto e figura plotly em HTML.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import librosa
import numpy as np
import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from services.config_service import DEFAULT_CONFIG
from services.feature_service import estimate_f0, frame_energy, log_mel_spectrogram
from services.g2p_service import is_silence
from services.vocoder_service import read_wav

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

MCD_CONSTANT = 10.0 * math.sqrt(2.0) / math.log(10.0)
AGGREGATE_ROW = "MEDIA"


@dataclass
class F0Track:
    """Track de F0 em Hz (0 = não vozeado)."""
    f0: np.ndarray
    voicing: Optional[np.ndarray] = None

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        esperado = self.f0 > 0
        if self.voicing is None:
            self.voicing = esperado
        else:
            self.voicing = np.asarray(self.voicing, dtype=bool)
            if not np.array_equal(self.voicing, esperado):
                raise ValueError("Vozeamento inconsistente com f0 > 0")

    def __len__(self) -> int:
        return len(self.f0)


@dataclass
class ProsodyStats:
    energy_std: float
    f0_std: float
    num_samples: int
    num_phonemes: int
    f0_excluded: int = 0
    selection: List[Dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        if self.num_samples < 2:
            raise ValueError(f"São necessárias ao menos 2 amostras, recebido {self.num_samples}")
        if self.energy_std < 0 or self.f0_std < 0:
            raise ValueError("Desvios padrão negativos")


def _eval_config(config: Optional[Dict]) -> Dict:
    return config or DEFAULT_CONFIG


def _align_lengths(n_ref: int, n_test: int, tolerancia: int, contexto: str) -> int:
    if n_ref == n_test:
        return n_ref
    if abs(n_ref - n_test) > tolerancia:
        raise ValueError(f"{contexto}: {n_ref} e {n_test} quadros (tolerância {tolerancia})")
    logger.warning(f"{contexto}: truncando {n_ref}/{n_test} quadros para {min(n_ref, n_test)}")
    return min(n_ref, n_test)


# ========================================
# FFE
# ========================================

def ffe(reference: F0Track, test: F0Track, config: Optional[Dict] = None) -> float:
    """
    F0 Frame Error.

    Raises:
        ValueError: diferença de comprimento acima de frame_tolerance
    """
    avaliacao = _eval_config(config)["evaluation"]
    n = _align_lengths(len(reference), len(test), int(avaliacao["frame_tolerance"]), "FFE")
    if n == 0:
        raise ValueError("FFE: tracks vazias")
    ref_f0, test_f0 = reference.f0[:n], test.f0[:n]
    ref_v, test_v = reference.voicing[:n], test.voicing[:n]

    vde = ref_v != test_v
    ambos = ref_v & test_v
    desvio = np.zeros(n)
    desvio[ambos] = np.abs(test_f0[ambos] - ref_f0[ambos]) / ref_f0[ambos]
    gpe = ambos & (desvio > float(avaliacao["gpe_threshold"]))
    return float((gpe.sum() + vde.sum()) / n)


# ========================================
# MCD
# ========================================

def mfcc(audio: np.ndarray, config: Optional[Dict] = None) -> np.ndarray:
    """
    MFCC [frames x (n_mfcc + 1)] com c0 na coluna 0: DCT-II ortonormal do
    log-mel do corpus (magnitude, log natural, piso log_floor).
    """
    config = _eval_config(config)
    log_mel = log_mel_spectrogram(np.asarray(audio, dtype=np.float32), config["audio"])
    coeficientes = librosa.feature.mfcc(
        S=log_mel.T.astype(np.float64), n_mfcc=int(config["evaluation"]["n_mfcc"]) + 1, dct_type=2, norm="ortho"
    )
    return coeficientes.T


def mcd_from_mfcc(c_ref: np.ndarray, c_test: np.ndarray, n_mfcc: int = 13) -> float:
    """MCD médio (dB) sobre os coeficientes 1..n_mfcc; c0 excluído."""
    n = min(len(c_ref), len(c_test))
    if n == 0:
        raise ValueError("MCD: sem quadros em comum")
    if len(c_ref) != len(c_test):
        logger.warning(f"MCD: truncando {len(c_ref)}/{len(c_test)} quadros para {n}")
    diff = np.asarray(c_ref, dtype=np.float64)[:n, 1:n_mfcc + 1] - np.asarray(c_test, dtype=np.float64)[:n, 1:n_mfcc + 1]
    return float(MCD_CONSTANT * np.mean(np.sqrt(np.sum(diff ** 2, axis=1))))


def mcd(reference_audio: np.ndarray, test_audio: np.ndarray, config: Optional[Dict] = None) -> float:
    config = _eval_config(config)
    return mcd_from_mfcc(mfcc(reference_audio, config), mfcc(test_audio, config), int(config["evaluation"]["n_mfcc"]))


# ========================================
# DIVERSIDADE PROSÓDICA
# ========================================

def select_phonemes(phonemes: Sequence[str], durations: Sequence[int], k: int = 3) -> List[int]:
    """Índices dos k fonemas não-silêncio mais longos (empate: menor índice)."""
    candidatos = [i for i, p in enumerate(phonemes) if not is_silence(p) and durations[i] > 0]
    candidatos.sort(key=lambda i: (-int(durations[i]), i))
    return sorted(candidatos[:k])


def phoneme_spans(durations: Sequence[int], hop_length: int) -> List[Tuple[int, int]]:
    """(início, fim) em amostras de cada fonema."""
    fim = np.cumsum(np.asarray(durations, dtype=np.int64)) * hop_length
    inicio = fim - np.asarray(durations, dtype=np.int64) * hop_length
    return [(int(a), int(b)) for a, b in zip(inicio, fim)]


def relative_energy(waveform: np.ndarray, start: int, end: int) -> float:
    """Amplitude absoluta média no trecho dividida pela média da forma de onda inteira."""
    absoluto = np.abs(np.asarray(waveform, dtype=np.float64))
    media = absoluto.mean() if absoluto.size else 0.0
    trecho = absoluto[start:end]
    if media <= 0 or trecho.size == 0:
        return 0.0
    return float(trecho.mean() / media)


def prosody_from_waveforms(
    waveforms: Sequence[np.ndarray],
    spans: Sequence[Sequence[Tuple[int, int]]],
    config: Optional[Dict] = None
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    E e F0 de cada fonema selecionado em cada amostra e seus desvios padrão.

    Args:
        waveforms: N formas de onda da mesma elocução
        spans: por amostra, (início, fim) em amostras de cada fonema selecionado

    Returns:
        (std de E por fonema, std de F0 por fonema vozeado, fonemas excluídos do F0)
    """
    config = _eval_config(config)
    hop = config["audio"]["hop_length"]
    if len(waveforms) < 2:
        raise ValueError(f"São necessárias ao menos 2 amostras, recebido {len(waveforms)}")

    energias = np.array([[relative_energy(w, a, b) for a, b in sp] for w, sp in zip(waveforms, spans)])
    f0s = []
    for w, sp in zip(waveforms, spans):
        track = estimate_f0(w, config["audio"])
        medias = []
        for a, b in sp:
            trecho = track[a // hop: max(a // hop + 1, b // hop)]
            vozeado = trecho[trecho > 0]
            medias.append(vozeado.mean() if vozeado.size else np.nan)
        f0s.append(medias)
    f0s = np.array(f0s, dtype=np.float64)

    f0_std = []
    excluidos = 0
    for coluna in f0s.T:
        validos = coluna[~np.isnan(coluna)]
        if validos.size < 2:
            excluidos += 1
            continue
        f0_std.append(validos.std())
    return energias.std(axis=0), np.array(f0_std), excluidos


def _prosody_of_utterance(model, utt, num_samples, config, embedder, seed, k, vocoder) -> Optional[ProsodyStats]:
    from services.synthesis_service import synthesize_samples

    amostras = synthesize_samples(
        model, utt["text"], config, num_samples, seed, vocoder=vocoder,
        speaker=utt.get("speaker"), neighbors=utt.get("neighbors"),
        context=utt.get("context"), embedder=embedder,
    )
    indices = select_phonemes(amostras[0]["phonemes"], amostras[0]["durations"], k)
    if not indices:
        logger.warning(f"Elocução '{utt['text']}' sem fonemas selecionáveis")
        return None

    hop = config["audio"]["hop_length"]
    spans = [[phoneme_spans(a["durations"], hop)[i] for i in indices] for a in amostras]
    e_std, f0_std, fora = prosody_from_waveforms([a["waveform"] for a in amostras], spans, config)
    return ProsodyStats(
        energy_std=float(e_std.mean()),
        f0_std=float(f0_std.mean()) if f0_std.size else 0.0,
        num_samples=int(num_samples),
        num_phonemes=len(indices),
        f0_excluded=fora,
        selection=[{"text": utt["text"], "phonemes": [amostras[0]["phonemes"][i] for i in indices]}],
    )


def prosody_by_utterance(
    model,
    utterances: Sequence[Dict[str, Any]],
    num_samples: int,
    config: Dict[str, Any],
    embedder=None,
    seed: Optional[int] = None,
    phonemes_per_utterance: Optional[int] = None
) -> Dict[str, ProsodyStats]:
    """
    Desvio padrão de E e F0 entre N sínteses de cada elocução.

    Args:
        model: Modelo treinado
        utterances: dicts com text e opcionalmente id, speaker, neighbors, context
        num_samples: N >= 2 amostras por elocução
        config: Configuração (inference.mode/temperature valem para as amostras)
        seed: semente base; a n-ésima elocução usa seed + n

    Returns:
        id -> ProsodyStats (elocuções sem fonemas selecionáveis ficam de fora)
    """
    from services.vocoder_service import load_vocoder

    if num_samples < 2:
        raise ValueError(f"São necessárias ao menos 2 amostras, recebido {num_samples}")
    avaliacao = config["evaluation"]
    k = int(phonemes_per_utterance or avaliacao["phonemes_per_utterance"])
    seed = int(avaliacao["seed"] if seed is None else seed)
    vocoder = load_vocoder(config)

    resultado: Dict[str, ProsodyStats] = {}
    for n, utt in enumerate(utterances):
        stats = _prosody_of_utterance(model, utt, num_samples, config, embedder, seed + n, k, vocoder)
        if stats is not None:
            resultado[str(utt.get("id", f"utt_{n:03d}"))] = stats
    return resultado


def merge_prosody(stats: Sequence[ProsodyStats], num_samples: int) -> ProsodyStats:
    """Média sobre fonemas de todas as elocuções (F0 só sobre fonemas vozeados)."""
    n_e = sum(s.num_phonemes for s in stats)
    n_f0 = sum(s.num_phonemes - s.f0_excluded for s in stats)
    excluidos = sum(s.f0_excluded for s in stats)
    if excluidos:
        logger.warning(f"{excluidos} fonemas sem F0 vozeado excluídos do desvio de F0")
    return ProsodyStats(
        energy_std=sum(s.energy_std * s.num_phonemes for s in stats) / n_e if n_e else 0.0,
        f0_std=sum(s.f0_std * (s.num_phonemes - s.f0_excluded) for s in stats) / n_f0 if n_f0 else 0.0,
        num_samples=int(num_samples),
        num_phonemes=n_e,
        f0_excluded=excluidos,
        selection=[item for s in stats for item in s.selection],
    )


def prosody_std(
    model,
    utterances: Sequence[Dict[str, Any]],
    num_samples: int,
    config: Dict[str, Any],
    embedder=None,
    seed: Optional[int] = None,
    phonemes_per_utterance: Optional[int] = None
) -> ProsodyStats:
    """ProsodyStats agregado (médias sobre fonemas e elocuções)."""
    por_elocucao = prosody_by_utterance(
        model, utterances, num_samples, config, embedder, seed, phonemes_per_utterance
    )
    return merge_prosody(list(por_elocucao.values()), num_samples)


# ========================================
# ESTUDO DE CASO
# ========================================

def contour_table(waveform: np.ndarray, phonemes: Sequence[str], durations: Sequence[int],
                  config: Dict[str, Any]) -> pd.DataFrame:
    """Tabela por quadro: tempo (s), energia, f0 e fonema."""
    a = config["audio"]
    energia = frame_energy(waveform, a)
    f0 = estimate_f0(waveform, a)
    n = min(len(energia), len(f0))
    rotulos = [p for p, d in zip(phonemes, durations) for _ in range(int(d))]
    rotulos = (rotulos + [""] * n)[:n]
    return pd.DataFrame({
        "time": np.arange(n) * a["hop_length"] / a["sample_rate"],
        "energy": energia[:n],
        "f0": f0[:n],
        "phoneme": rotulos,
    })


def emit_case_study(
    model,
    text: str,
    contexts: Sequence[Sequence[str]],
    out_dir: str,
    config: Dict[str, Any],
    embedder=None,
    speaker: Optional[str] = None
) -> Dict[str, Any]:
    """
    Sintetiza o mesmo texto sob cada conjunto de vizinhos e exporta os
    contornos de energia e F0 (um CSV por contexto e um HTML comparativo).
    """
    from services.synthesis_service import synthesize
    from services.vocoder_service import load_vocoder
    import torch

    destino = Path(out_dir)
    destino.mkdir(parents=True, exist_ok=True)
    vocoder = load_vocoder(config)
    generator = torch.Generator().manual_seed(int(config["inference"]["seed"]))

    figura = make_subplots(rows=2, cols=1, shared_xaxes=True, subplot_titles=("Energia", "F0 (Hz)"))
    tabelas = []
    for i, vizinhos in enumerate(contexts):
        resultado = synthesize(
            model, text, config, speaker=speaker, neighbors=list(vizinhos) if model.uses_context else None,
            embedder=embedder, generator=generator, vocoder=vocoder,
        )
        tabela = contour_table(resultado["waveform"], resultado["phonemes"], resultado["durations"], config)
        caminho = destino / f"context_{i:02d}.csv"
        tabela.to_csv(caminho, index=False)
        tabelas.append(str(caminho))

        rotulo = f"contexto {i}"
        figura.add_trace(go.Scatter(x=tabela["time"], y=tabela["energy"], name=rotulo, legendgroup=rotulo), row=1, col=1)
        f0_plot = tabela["f0"].where(tabela["f0"] > 0)
        figura.add_trace(
            go.Scatter(x=tabela["time"], y=f0_plot, name=rotulo, legendgroup=rotulo, showlegend=False), row=2, col=1
        )

    figura.update_layout(title=f"Contornos de energia e F0: \"{text}\"", template="plotly_white")
    figura.update_xaxes(title_text="Tempo (s)", row=2, col=1)
    html = destino / "case_study.html"
    figura.write_html(str(html), include_plotlyjs="cdn")
    logger.info(f"✓ Estudo de caso: {len(tabelas)} contextos em {destino}")
    return {"tables": tabelas, "figure": str(html)}


# ========================================
# RELATÓRIOS
# ========================================

def build_report(rows: Sequence[Dict[str, Any]]) -> pd.DataFrame:
    """Tabela por elocução com linha agregada MEDIA (média das colunas numéricas)."""
    tabela = pd.DataFrame(list(rows))
    if tabela.empty:
        return pd.DataFrame(columns=["id", "ffe", "mcd", "f0_std", "e_std"])
    medias = tabela.drop(columns=["id"], errors="ignore").select_dtypes("number").mean()
    agregado = {"id": AGGREGATE_ROW, **medias.to_dict()}
    return pd.concat([tabela, pd.DataFrame([agregado])], ignore_index=True)


def write_report(report: pd.DataFrame, out_dir: str, name: str = "metrics") -> Dict[str, str]:
    destino = Path(out_dir)
    destino.mkdir(parents=True, exist_ok=True)
    csv_path = destino / f"{name}.csv"
    json_path = destino / f"{name}.json"
    report.to_csv(csv_path, index=False)
    report.to_json(json_path, orient="records", indent=2, force_ascii=False)
    return {"csv": str(csv_path), "json": str(json_path)}


def evaluate_pairs(
    pairs: Mapping[str, Tuple[str, str]],
    config: Dict[str, Any],
    prosody: Optional[Mapping[str, ProsodyStats]] = None
) -> List[Dict[str, Any]]:
    """
    FFE e MCD para pares id -> (wav de referência, wav sintetizado), com
    f0_std e e_std da diversidade prosódica por id (NaN quando ausente).
    """
    prosody = prosody or {}
    linhas = []
    for uid, (ref_path, test_path) in sorted(pairs.items()):
        try:
            ref, _ = read_wav(ref_path)
            test, _ = read_wav(test_path)
            stats = prosody.get(uid)
            linhas.append({
                "id": uid,
                "ffe": ffe(F0Track(estimate_f0(ref, config["audio"])), F0Track(estimate_f0(test, config["audio"])), config),
                "mcd": mcd(ref, test, config),
                "f0_std": stats.f0_std if stats else float("nan"),
                "e_std": stats.energy_std if stats else float("nan"),
            })
        except Exception as e:
            logger.error(f"✗ Avaliação de {uid}: {e}", exc_info=True)
    return linhas


def match_by_id(reference: Mapping[str, str], synthesized_dir: str) -> Dict[str, Tuple[str, str]]:
    """Casa referências (id -> wav) com <synthesized_dir>/<id>.wav."""
    pares = {}
    for uid, ref_path in reference.items():
        candidato = Path(synthesized_dir) / f"{uid}.wav"
        if candidato.exists():
            pares[uid] = (ref_path, str(candidato))
    faltando = len(reference) - len(pares)
    if faltando:
        logger.warning(f"{faltando} referências sem áudio sintetizado correspondente")
    return pares


def export_asr_list(paths: Mapping[str, str], out_path: str) -> Path:
    """Lista id<TAB>caminho para um reconhecedor externo."""
    destino = Path(out_path)
    destino.parent.mkdir(parents=True, exist_ok=True)
    with open(destino, "w", encoding="utf-8") as f:
        for uid, caminho in sorted(paths.items()):
            f.write(f"{uid}\t{caminho}\n")
    return destino
