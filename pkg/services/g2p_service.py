"""
Serviço de Conversão Grafema-Fonema (G2P)
==========================================
Normaliza o texto e converte em sequência de fonemas do inventário fixo.

BACKENDS (g2p.backend):
- g2p_en (padrão): CMUdict + previsão neural para palavras fora do
  dicionário, pelo pacote g2p_en
- lexicon: léxico (data/lexicon.json ou arquivo CMUdict em g2p.lexicon_path)
  com regras letra-som (maior casamento primeiro) para palavras fora dele

Sem o g2p_en utilizável (pacote ou dados do nltk ausentes, máquina sem
rede), o backend g2p_en cai no lexicon com um aviso.
"""

import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# ========================================
# INVENTÁRIO DE FONEMAS
# ========================================

PAD = "<pad>"
SILENCE = "sil"
WORD_BOUNDARY = "sp"

ARPABET = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH",
    "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH", "K",
    "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH",
    "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
]

# id 0 reservado para padding
PHONEME_INVENTORY: List[str] = [PAD, SILENCE, WORD_BOUNDARY] + ARPABET
PHONEME_TO_ID: Dict[str, int] = {p: i for i, p in enumerate(PHONEME_INVENTORY)}
SILENCE_SYMBOLS = {PAD, SILENCE, WORD_BOUNDARY}

LEXICON_PATH = Path(__file__).parent.parent / "data" / "lexicon.json"

BACKENDS = ("g2p_en", "lexicon")
DEFAULT_BACKEND = "g2p_en"

DIGITOS = {
    "0": "zero", "1": "one", "2": "two", "3": "three", "4": "four",
    "5": "five", "6": "six", "7": "seven", "8": "eight", "9": "nine",
}

# Regras letra-som: grafemas mais longos primeiro
REGRAS_LETRA_SOM: List[Tuple[str, List[str]]] = [
    ("tion", ["SH", "AH", "N"]),
    ("sion", ["ZH", "AH", "N"]),
    ("ough", ["AO"]),
    ("igh", ["AY"]),
    ("tch", ["CH"]),
    ("sch", ["S", "K"]),
    ("dge", ["JH"]),
    ("ph", ["F"]),
    ("sh", ["SH"]),
    ("ch", ["CH"]),
    ("th", ["TH"]),
    ("wh", ["W"]),
    ("ck", ["K"]),
    ("ng", ["NG"]),
    ("qu", ["K", "W"]),
    ("kn", ["N"]),
    ("wr", ["R"]),
    ("ee", ["IY"]),
    ("ea", ["IY"]),
    ("oo", ["UW"]),
    ("ou", ["AW"]),
    ("ow", ["OW"]),
    ("oi", ["OY"]),
    ("oy", ["OY"]),
    ("ai", ["EY"]),
    ("ay", ["EY"]),
    ("ey", ["EY"]),
    ("ie", ["IY"]),
    ("au", ["AO"]),
    ("aw", ["AO"]),
    ("er", ["ER"]),
    ("ir", ["ER"]),
    ("ur", ["ER"]),
    ("ar", ["AA", "R"]),
    ("or", ["AO", "R"]),
    ("ss", ["S"]),
    ("ll", ["L"]),
    ("tt", ["T"]),
    ("pp", ["P"]),
    ("bb", ["B"]),
    ("dd", ["D"]),
    ("ff", ["F"]),
    ("gg", ["G"]),
    ("mm", ["M"]),
    ("nn", ["N"]),
    ("rr", ["R"]),
    ("zz", ["Z"]),
    ("cc", ["K"]),
    ("a", ["AE"]),
    ("b", ["B"]),
    ("c", ["K"]),
    ("d", ["D"]),
    ("e", ["EH"]),
    ("f", ["F"]),
    ("g", ["G"]),
    ("h", ["HH"]),
    ("i", ["IH"]),
    ("j", ["JH"]),
    ("k", ["K"]),
    ("l", ["L"]),
    ("m", ["M"]),
    ("n", ["N"]),
    ("o", ["AA"]),
    ("p", ["P"]),
    ("q", ["K"]),
    ("r", ["R"]),
    ("s", ["S"]),
    ("t", ["T"]),
    ("u", ["AH"]),
    ("v", ["V"]),
    ("w", ["W"]),
    ("x", ["K", "S"]),
    ("y", ["Y"]),
    ("z", ["Z"]),
]


@dataclass
class PhonemeSequence:
    """Sequência P = [p_1..p_T] de símbolos do inventário."""
    phonemes: List[str]

    def __post_init__(self):
        if len(self.phonemes) < 1:
            raise ValueError("Sequência de fonemas vazia (T deve ser >= 1)")
        desconhecidos = [p for p in self.phonemes if p not in PHONEME_TO_ID]
        if desconhecidos:
            raise ValueError(f"Fonemas fora do inventário: {sorted(set(desconhecidos))}")

    @property
    def T(self) -> int:
        return len(self.phonemes)

    def ids(self) -> List[int]:
        return phonemes_to_ids(self.phonemes)


# ========================================
# NORMALIZAÇÃO DE TEXTO
# ========================================

def normalize_text(texto: str) -> str:
    """
    Normaliza o transcrito: NFKD, minúsculas, dígitos por extenso,
    remove pontuação (mantém apóstrofos) e colapsa espaços.
    """
    texto = unicodedata.normalize("NFKD", texto or "")
    texto = "".join(c for c in texto if not unicodedata.combining(c))
    texto = texto.lower()
    texto = re.sub(r"\d", lambda m: f" {DIGITOS[m.group(0)]} ", texto)
    texto = re.sub(r"[^a-z'\s]", " ", texto)
    texto = re.sub(r"\s'|'\s|^'|'$", " ", texto)
    return re.sub(r"\s+", " ", texto).strip()


# ========================================
# LÉXICO
# ========================================

@lru_cache(maxsize=8)
def load_lexicon(path: Optional[str] = None) -> Dict[str, Tuple[str, ...]]:
    """
    Carrega o léxico. Aceita o JSON do projeto ou um arquivo no formato
    CMUdict ("PALAVRA  F1 F2 ..."); marcas de tonicidade são removidas.
    """
    caminho = Path(path) if path else LEXICON_PATH
    lexico: Dict[str, Tuple[str, ...]] = {}

    if caminho.suffix == ".json":
        with open(caminho, "r", encoding="utf-8") as f:
            for palavra, fones in json.load(f).items():
                lexico[palavra.lower()] = tuple(fones)
    else:
        with open(caminho, "r", encoding="latin-1") as f:
            for linha in f:
                if not linha.strip() or linha.startswith(";;;"):
                    continue
                palavra, *fones = linha.split()
                palavra = re.sub(r"\(\d+\)$", "", palavra.lower())
                if palavra in lexico:
                    continue  # mantém a primeira variante
                lexico[palavra] = tuple(re.sub(r"\d", "", f) for f in fones)

    logger.info(f"Léxico carregado: {len(lexico)} palavras de {caminho.name}")
    return lexico


def letter_to_sound(palavra: str) -> List[str]:
    """Pronúncia por regras para palavras fora do léxico."""
    palavra = palavra.replace("'", "")
    if len(palavra) > 2 and palavra.endswith("e") and palavra[-2] not in "aeiou":
        palavra = palavra[:-1]  # 'e' final mudo
    final_y = len(palavra) > 1 and palavra.endswith("y")
    if final_y:
        palavra = palavra[:-1]

    fones: List[str] = []
    i = 0
    while i < len(palavra):
        for grafema, saida in REGRAS_LETRA_SOM:
            if palavra.startswith(grafema, i):
                fones.extend(saida)
                i += len(grafema)
                break
        else:
            i += 1
    if final_y:
        fones.append("IY")
    return fones


@lru_cache(maxsize=1)
def load_g2p_en():
    """Instância de g2p_en.G2p; None quando o pacote ou seus dados não carregam."""
    try:
        from g2p_en import G2p

        return G2p()
    except Exception as e:
        logger.warning(f"g2p_en indisponível ({e}); usando léxico embutido e regras letra-som")
        return None


def _g2p_en_words(texto: str, modelo) -> List[List[str]]:
    palavras: List[List[str]] = [[]]
    for simbolo in modelo(texto):
        if simbolo == " ":
            palavras.append([])
        elif re.sub(r"\d", "", simbolo) in PHONEME_TO_ID:
            palavras[-1].append(re.sub(r"\d", "", simbolo))
    return [p for p in palavras if p]


# ========================================
# G2P
# ========================================

def g2p(texto: str, config: Optional[Dict] = None) -> PhonemeSequence:
    """
    Converte texto em PhonemeSequence de forma determinística.

    Args:
        texto: Transcrito (normalizado ou não)
        config: Seção "g2p" da configuração (backend, lexicon_path,
            word_boundary, edge_silence)

    Returns:
        PhonemeSequence com pausas de fronteira de palavra conforme config
    """
    config = config or {}
    normalizado = normalize_text(texto)
    if not normalizado:
        raise ValueError(f"Texto vazio após normalização: '{texto}'")

    backend = config.get("backend", DEFAULT_BACKEND)
    if backend not in BACKENDS:
        raise ValueError(f"Backend de G2P desconhecido: '{backend}'. Opções: {list(BACKENDS)}")

    modelo = load_g2p_en() if backend == "g2p_en" else None
    if modelo is not None:
        palavras = _g2p_en_words(normalizado, modelo)
    else:
        lexico = load_lexicon(config.get("lexicon_path"))
        palavras = []
        for palavra in normalizado.split():
            fones = list(lexico.get(palavra, ())) or letter_to_sound(palavra)
            if fones:
                palavras.append(fones)

    if not palavras:
        raise ValueError(f"Nenhum fonema produzido para: '{texto}'")

    fronteira = config.get("word_boundary", WORD_BOUNDARY)
    sequencia: List[str] = []
    for i, fones in enumerate(palavras):
        if i > 0 and fronteira:
            sequencia.append(fronteira)
        sequencia.extend(fones)

    if config.get("edge_silence", False):
        sequencia = [SILENCE] + sequencia + [SILENCE]

    return PhonemeSequence(sequencia)


def phonemes_to_ids(fonemas: List[str]) -> List[int]:
    return [PHONEME_TO_ID[p] for p in fonemas]


def ids_to_phonemes(ids: List[int]) -> List[str]:
    return [PHONEME_INVENTORY[i] for i in ids]


def is_silence(fonema: str) -> bool:
    return fonema in SILENCE_SYMBOLS
