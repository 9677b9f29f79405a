"""
Serviço de Extração de Features Acústicas
==========================================
Mel-espectrograma logarítmico, F0 por autocorrelação, energia por quadro
e rótulos de duração por fonema.

CONVENÇÕES:
- STFT centrado (padding constante de n_fft/2): num_frames = 1 + len // hop
- F0 em Hz, 0 = quadro não-vozeado
- Energia = norma L2 da magnitude do STFT por quadro
- Durações: alinhamento externo (TSV fone/início/fim) ou divisão uniforme
"""

import io
import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import librosa
import numpy as np

from services.config_service import DEFAULT_CONFIG
from services.g2p_service import PhonemeSequence

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Data fixa nos containers .npz para reprocessamentos byte a byte idênticos
ZIP_DATE_TIME = (1980, 1, 1, 0, 0, 0)

# Quadros com energia média abaixo disso são tratados como silêncio no F0
PITCH_ENERGY_FLOOR = 1e-10


@dataclass
class AcousticFeatures:
    """Features de uma elocução (mel [N x n_mels], f0 [N], energy [N], durations [T])."""
    mel: np.ndarray
    f0: np.ndarray
    energy: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        self.mel = np.asarray(self.mel, dtype=np.float32)
        self.f0 = np.asarray(self.f0, dtype=np.float32)
        self.energy = np.asarray(self.energy, dtype=np.float32)
        self.durations = np.asarray(self.durations, dtype=np.int32)
        n = self.mel.shape[0]
        if self.f0.shape[0] != n or self.energy.shape[0] != n:
            raise ValueError(
                f"Tracks com tamanhos inconsistentes: mel={n}, f0={self.f0.shape[0]}, energy={self.energy.shape[0]}"
            )
        if (self.durations < 0).any():
            raise ValueError("Durações negativas não são permitidas")
        if int(self.durations.sum()) != n:
            raise ValueError(f"sum(durations)={int(self.durations.sum())} difere de num_frames={n}")

    @property
    def num_frames(self) -> int:
        return int(self.mel.shape[0])


# ========================================
# ANÁLISE ESPECTRAL
# ========================================

def _audio_config(config: Optional[Dict]) -> Dict:
    return {**DEFAULT_CONFIG["audio"], **(config or {})}


def magnitude_stft(audio: np.ndarray, config: Optional[Dict] = None) -> np.ndarray:
    """Magnitude do STFT [1 + n_fft/2, num_frames]."""
    cfg = _audio_config(config)
    return np.abs(librosa.stft(
        np.asarray(audio, dtype=np.float32),
        n_fft=cfg["n_fft"],
        hop_length=cfg["hop_length"],
        win_length=cfg["win_length"],
        window="hann",
        center=True,
        pad_mode="constant",
    ))


def mel_basis(config: Optional[Dict] = None) -> np.ndarray:
    cfg = _audio_config(config)
    return librosa.filters.mel(
        sr=cfg["sample_rate"], n_fft=cfg["n_fft"], n_mels=cfg["n_mels"],
        fmin=cfg["fmin"], fmax=cfg["fmax"],
    )


def log_mel_spectrogram(audio: np.ndarray, config: Optional[Dict] = None) -> np.ndarray:
    """Log-mel [num_frames x n_mels] com piso log_floor."""
    cfg = _audio_config(config)
    mel = mel_basis(cfg) @ magnitude_stft(audio, cfg)
    return np.log(np.maximum(mel, cfg["log_floor"])).T.astype(np.float32)


def frame_energy(audio: np.ndarray, config: Optional[Dict] = None) -> np.ndarray:
    """Norma L2 da magnitude por quadro."""
    return np.linalg.norm(magnitude_stft(audio, config), axis=0).astype(np.float32)


def estimate_f0(audio: np.ndarray, config: Optional[Dict] = None) -> np.ndarray:
    """
    Estimador de F0 por autocorrelação normalizada, quadro a quadro.

    Um quadro é vozeado quando o pico da autocorrelação normalizada dentro de
    [sr/f0_max, sr/f0_min] atinge voicing_threshold. O período é refinado por
    interpolação parabólica.

    Returns:
        Vetor [num_frames] em Hz; 0 nos quadros não-vozeados
    """
    cfg = _audio_config(config)
    sr, n_fft, hop = cfg["sample_rate"], cfg["n_fft"], cfg["hop_length"]
    audio = np.asarray(audio, dtype=np.float64)

    padded = np.pad(audio, n_fft // 2, mode="constant")
    frames = librosa.util.frame(padded, frame_length=n_fft, hop_length=hop, axis=0)
    frames = frames - frames.mean(axis=1, keepdims=True)

    lag_min = max(1, int(np.floor(sr / cfg["f0_max"])))
    lag_max = min(n_fft - 2, int(np.ceil(sr / cfg["f0_min"])))

    ac = librosa.autocorrelate(frames, max_size=lag_max + 2, axis=-1)
    r0 = ac[:, 0]
    f0 = np.zeros(frames.shape[0], dtype=np.float32)

    ativos = r0 > PITCH_ENERGY_FLOOR * n_fft
    if not ativos.any():
        return f0

    norm = ac[ativos] / r0[ativos, None]
    janela = norm[:, lag_min:lag_max + 1]
    lag = np.argmax(janela, axis=1) + lag_min
    pico = norm[np.arange(norm.shape[0]), lag]

    # Interpolação parabólica do período
    esquerda = norm[np.arange(norm.shape[0]), lag - 1]
    direita = norm[np.arange(norm.shape[0]), np.minimum(lag + 1, norm.shape[1] - 1)]
    denom = esquerda - 2 * pico + direita
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(np.abs(denom) > 1e-12, 0.5 * (esquerda - direita) / denom, 0.0)
    periodo = lag + np.clip(delta, -0.5, 0.5)

    valores = sr / periodo
    vozeado = (pico >= cfg["voicing_threshold"]) & (valores >= cfg["f0_min"]) & (valores <= cfg["f0_max"])
    f0[np.flatnonzero(ativos)] = np.where(vozeado, valores, 0.0).astype(np.float32)
    return f0


# ========================================
# DURAÇÕES
# ========================================

def largest_remainder_round(valores: Sequence[float], total: int) -> np.ndarray:
    """
    Arredonda `valores` (reescalados para somar `total`) em inteiros não
    negativos com soma exatamente `total` pelo método do maior resto.
    """
    valores = np.asarray(valores, dtype=np.float64)
    if (valores < 0).any():
        raise ValueError("Valores negativos no arredondamento de durações")
    soma = valores.sum()
    if soma <= 0:
        valores = np.ones_like(valores)
        soma = valores.sum()
    escalados = valores * (total / soma)
    base = np.floor(escalados).astype(np.int64)
    faltam = int(total - base.sum())
    if faltam > 0:
        fracoes = escalados - base
        ordem = sorted(range(len(fracoes)), key=lambda i: (-fracoes[i], i))
        for i in ordem[:faltam]:
            base[i] += 1
    return base.astype(np.int32)


def read_alignment(path: str) -> List[Tuple[str, float, float]]:
    """Lê alinhamento TSV: 'fone<TAB>início_s<TAB>fim_s' por linha."""
    intervalos = []
    with open(path, "r", encoding="utf-8") as f:
        for numero, linha in enumerate(f, 1):
            if not linha.strip() or linha.startswith("#"):
                continue
            partes = linha.rstrip("\n").split("\t")
            if len(partes) != 3:
                raise ValueError(f"{path}:{numero}: esperado 'fone<TAB>início<TAB>fim'")
            intervalos.append((partes[0], float(partes[1]), float(partes[2])))
    return intervalos


def durations_from_alignment(
    alinhamento: Sequence[Tuple[str, float, float]],
    num_fonemas: int,
    num_frames: int,
    config: Optional[Dict] = None
) -> np.ndarray:
    """Converte intervalos em segundos para contagens de quadros."""
    if len(alinhamento) != num_fonemas:
        raise ValueError(
            f"Alinhamento com {len(alinhamento)} fones, sequência de fonemas com T={num_fonemas}"
        )
    cfg = _audio_config(config)
    quadros = [max(0.0, fim - inicio) * cfg["sample_rate"] / cfg["hop_length"] for _, inicio, fim in alinhamento]
    return largest_remainder_round(quadros, num_frames)


def uniform_durations(num_fonemas: int, num_frames: int) -> np.ndarray:
    """Divisão uniforme (modo toy, sem alinhador)."""
    return largest_remainder_round(np.ones(num_fonemas), num_frames)


def phoneme_level_average(
    track: np.ndarray,
    durations: np.ndarray,
    voiced_only: bool = False
) -> np.ndarray:
    """Média de uma track por segmento de fonema; segmentos vazios ficam em 0."""
    track = np.asarray(track, dtype=np.float64)
    fim = np.cumsum(durations)
    inicio = fim - durations
    medias = np.zeros(len(durations), dtype=np.float32)
    for i, (a, b) in enumerate(zip(inicio, fim)):
        segmento = track[a:b]
        if voiced_only:
            segmento = segmento[segmento > 0]
        if segmento.size:
            medias[i] = segmento.mean()
    return medias


# ========================================
# EXTRAÇÃO
# ========================================

def extract_features(
    audio: np.ndarray,
    phonemes: PhonemeSequence,
    alignment: Optional[Sequence[Tuple[str, float, float]]] = None,
    sample_rate: Optional[int] = None,
    config: Optional[Dict] = None
) -> AcousticFeatures:
    """
    Extrai mel, F0, energia e durações de uma elocução.

    Args:
        audio: Forma de onda mono (reamostrada se sample_rate difere da config)
        phonemes: Sequência de fonemas da elocução
        alignment: Intervalos (fone, início, fim) ou None para divisão uniforme
        sample_rate: Taxa do áudio fornecido (padrão: a da config)
        config: Seção "audio" da configuração

    Returns:
        AcousticFeatures com sum(durations) == num_frames
    """
    cfg = _audio_config(config)
    audio = np.asarray(audio, dtype=np.float32)
    if audio.ndim > 1:
        audio = librosa.to_mono(audio)
    if sample_rate and sample_rate != cfg["sample_rate"]:
        audio = librosa.resample(audio, orig_sr=sample_rate, target_sr=cfg["sample_rate"])

    mel = log_mel_spectrogram(audio, cfg)
    energia = frame_energy(audio, cfg)
    f0 = estimate_f0(audio, cfg)
    n = mel.shape[0]
    f0, energia = f0[:n], energia[:n]

    if mel.shape[1] != cfg["n_mels"]:
        raise ValueError(f"mel_bins={mel.shape[1]} difere do configurado {cfg['n_mels']}")

    if alignment is not None:
        duracoes = durations_from_alignment(alignment, phonemes.T, n, cfg)
    else:
        duracoes = uniform_durations(phonemes.T, n)

    return AcousticFeatures(mel=mel, f0=f0, energy=energia, durations=duracoes)


def load_audio(path: str, config: Optional[Dict] = None) -> np.ndarray:
    """Carrega áudio mono na taxa configurada."""
    cfg = _audio_config(config)
    audio, _ = librosa.load(path, sr=cfg["sample_rate"], mono=True)
    return audio


# ========================================
# PERSISTÊNCIA
# ========================================

def save_features(features: AcousticFeatures, path: str) -> None:
    """Grava o container .npz (mel/f0/energy float32, durations int32) de forma determinística."""
    destino = Path(path)
    destino.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "mel": features.mel.astype(np.float32),
        "f0": features.f0.astype(np.float32),
        "energy": features.energy.astype(np.float32),
        "durations": features.durations.astype(np.int32),
    }
    with zipfile.ZipFile(destino, "w", compression=zipfile.ZIP_STORED) as zf:
        for nome, array in arrays.items():
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.ascontiguousarray(array), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{nome}.npy", date_time=ZIP_DATE_TIME), buffer.getvalue())


def load_features(path: str) -> AcousticFeatures:
    with np.load(path, allow_pickle=False) as dados:
        return AcousticFeatures(
            mel=dados["mel"], f0=dados["f0"], energy=dados["energy"], durations=dados["durations"]
        )
