"""
Serviço de Corpus
==================
Leitura de corpora texto+áudio, reconstrução das janelas de contexto
entre elocuções, G2P, extração de features e manifesto em disco.

LAYOUTS SUPORTADOS:
- LJ-Speech: metadata.csv (id|texto|normalizado) + wavs/<id>.wav
  Documento = prefixo do id antes do '-'
- LibriTTS: <falante>/<capítulo>/<id>.wav + <id>.normalized.txt
  Documento = falante/capítulo; book.txt opcional define a ordem de leitura

SAÍDAS (out_dir):
- manifest.jsonl: um UtteranceRecord por linha
- features/<id>.npz: mel, f0, energy, durations
- preprocess_report.json: auditoria das elocuções com falha
"""

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import accumulate
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from rapidfuzz import process
from rapidfuzz.distance import Levenshtein

from services.config_service import DEFAULT_CONFIG
from services.feature_service import (
    extract_features,
    load_audio,
    load_features,
    read_alignment,
    save_features,
)
from services.g2p_service import g2p, normalize_text

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Vizinho ausente (fora do documento)
SENTINEL = ""

MANIFEST_NAME = "manifest.jsonl"
REPORT_NAME = "preprocess_report.json"
FEATURES_DIRNAME = "features"

PALAVRA_RE = re.compile(r"[A-Za-z0-9']+")


@dataclass
class UtteranceRecord:
    """Uma elocução do corpus e a janela de 2L+1 ids ao seu redor."""
    id: str
    text: str
    speaker_id: str
    audio_path: str
    context_ids: List[str]
    feature_path: str = ""
    document_id: str = ""
    phonemes: str = ""

    def __post_init__(self):
        self.context_ids = list(self.context_ids)
        n = len(self.context_ids)
        if n < 3 or n % 2 == 0:
            raise ValueError(f"{self.id}: context_ids deve ter tamanho 2L+1 >= 3, recebido {n}")
        if self.context_ids[n // 2] != self.id:
            raise ValueError(
                f"{self.id}: elemento central de context_ids é '{self.context_ids[n // 2]}'"
            )
        if not normalize_text(self.text):
            raise ValueError(f"{self.id}: texto vazio após normalização")

    @property
    def context_size(self) -> int:
        return len(self.context_ids) // 2


# ========================================
# JANELAS DE CONTEXTO
# ========================================

def build_context_windows(
    documents: Mapping[str, Sequence[Dict[str, Any]]],
    L: int
) -> List[UtteranceRecord]:
    """
    Monta a janela de contexto de cada elocução, sem cruzar documentos.

    Args:
        documents: documento -> elocuções em ordem de leitura; cada elocução
            é um dict com id, text, speaker_id e audio_path
        L: Número de vizinhos de cada lado (L >= 1)

    Returns:
        Lista de UtteranceRecord na ordem dos documentos
    """
    if L < 1:
        raise ValueError(f"L deve ser >= 1, recebido {L}")

    registros: List[UtteranceRecord] = []
    vistos: Dict[str, str] = {}

    for doc_id, elocucoes in documents.items():
        ids = [str(e["id"]) for e in elocucoes]
        for uid in ids:
            if uid in vistos:
                raise ValueError(
                    f"Id de elocução duplicado: '{uid}' (documentos '{vistos[uid]}' e '{doc_id}')"
                )
            vistos[uid] = doc_id

        preenchido = [SENTINEL] * L + ids + [SENTINEL] * L
        for i, elocucao in enumerate(elocucoes):
            registros.append(UtteranceRecord(
                id=ids[i],
                text=normalize_text(elocucao["text"]),
                speaker_id=str(elocucao.get("speaker_id", "0")),
                audio_path=str(elocucao.get("audio_path", "")),
                context_ids=preenchido[i:i + 2 * L + 1],
                document_id=str(doc_id),
            ))

    return registros


# ========================================
# LOCALIZAÇÃO NO LIVRO
# ========================================

def _tokens_com_posicao(texto: str) -> List[Tuple[str, int, int]]:
    tokens = []
    for m in PALAVRA_RE.finditer(texto):
        palavra = normalize_text(m.group(0))
        if palavra:
            tokens.append((palavra, m.start(), m.end()))
    return tokens


def locate_in_book(
    transcript: str,
    book_text: str,
    threshold: Optional[float] = None
) -> Optional[Tuple[int, int]]:
    """
    Localiza o transcrito no texto do livro.

    Compara janelas de palavras do livro (tamanho n-2..n+2, n = palavras do
    transcrito) pela similaridade de Levenshtein normalizada, ignorando
    caixa e pontuação. A varredura de cada tamanho roda em
    rapidfuzz.process.extractOne com corte no limiar; empates ficam com a
    janela menor e, nela, com a primeira posição.

    Returns:
        (início, fim) em caracteres do livro, ou None se nenhuma janela
        atingir o limiar
    """
    if not book_text:
        raise ValueError("Texto do livro vazio")
    if threshold is None:
        threshold = DEFAULT_CONFIG["corpus"]["book_match_threshold"]

    alvo = normalize_text(transcript)
    if not alvo:
        return None
    n = len(alvo.split())
    tokens = _tokens_com_posicao(book_text)
    palavras = [t[0] for t in tokens]

    # palavras normalizadas unidas por espaço; janelas são fatias desse texto
    normalizado = " ".join(palavras)
    offsets = list(accumulate((len(p) + 1 for p in palavras), initial=0))

    melhor: Optional[Tuple[int, int]] = None
    melhor_sim = -1.0
    for tamanho in range(max(1, n - 2), n + 3):
        if tamanho > len(tokens):
            break
        candidatos = [
            normalizado[offsets[inicio]:offsets[inicio + tamanho] - 1]
            for inicio in range(len(tokens) - tamanho + 1)
        ]
        achado = process.extractOne(
            alvo, candidatos, scorer=Levenshtein.normalized_similarity,
            score_cutoff=max(threshold, melhor_sim),
        )
        if achado is not None and achado[1] > melhor_sim:
            _, melhor_sim, inicio = achado
            melhor = (inicio, inicio + tamanho)

    if melhor is None or melhor_sim < threshold:
        return None
    return tokens[melhor[0]][1], tokens[melhor[1] - 1][2]


# ========================================
# LEITORES DE CORPUS
# ========================================

def read_ljspeech(corpus_dir: str) -> Dict[str, List[Dict[str, Any]]]:
    """Lê metadata.csv (id|texto|normalizado) e agrupa por prefixo do id."""
    raiz = Path(corpus_dir)
    documentos: Dict[str, List[Dict[str, Any]]] = {}
    with open(raiz / "metadata.csv", "r", encoding="utf-8") as f:
        for linha in f:
            partes = linha.rstrip("\n").split("|")
            if len(partes) < 2 or not partes[0]:
                continue
            uid = partes[0]
            texto = partes[2] if len(partes) > 2 and partes[2].strip() else partes[1]
            documentos.setdefault(uid.split("-")[0], []).append({
                "id": uid,
                "text": texto,
                "speaker_id": "0",
                "audio_path": str(raiz / "wavs" / f"{uid}.wav"),
            })
    return documentos


def read_libritts(
    corpus_dir: str,
    threshold: Optional[float] = None
) -> Dict[str, List[Dict[str, Any]]]:
    """Lê <falante>/<capítulo>/<id>.wav; ordena pelo book.txt quando existe."""
    raiz = Path(corpus_dir)
    documentos: Dict[str, List[Dict[str, Any]]] = {}

    for capitulo in sorted(p for p in raiz.glob("*/*") if p.is_dir()):
        falante = capitulo.parent.name
        elocucoes = []
        for wav in sorted(capitulo.glob("*.wav")):
            texto_path = wav.with_suffix(".normalized.txt")
            if not texto_path.exists():
                texto_path = wav.with_suffix(".original.txt")
            if not texto_path.exists():
                logger.warning(f"Transcrito ausente para {wav.name}")
                continue
            elocucoes.append({
                "id": wav.stem,
                "text": texto_path.read_text(encoding="utf-8").strip(),
                "speaker_id": falante,
                "audio_path": str(wav),
            })

        livro = capitulo / "book.txt"
        if livro.exists() and elocucoes:
            elocucoes = order_by_book(elocucoes, livro.read_text(encoding="utf-8"), threshold)

        if elocucoes:
            documentos[f"{falante}/{capitulo.name}"] = elocucoes

    return documentos


def order_by_book(
    elocucoes: List[Dict[str, Any]],
    book_text: str,
    threshold: Optional[float] = None
) -> List[Dict[str, Any]]:
    """Ordena pela posição no livro; as não localizadas vão ao final em ordem de id."""
    localizadas, perdidas = [], []
    for e in elocucoes:
        span = locate_in_book(e["text"], book_text, threshold)
        if span is None:
            perdidas.append(e)
        else:
            localizadas.append((span[0], e["id"], e))
    if perdidas:
        logger.warning(f"{len(perdidas)} elocuções não localizadas no livro")
    localizadas.sort(key=lambda x: (x[0], x[1]))
    return [e for _, _, e in localizadas] + sorted(perdidas, key=lambda e: e["id"])


def read_corpus(corpus_dir: str, config: Optional[Dict] = None) -> Dict[str, List[Dict[str, Any]]]:
    """Detecta o layout do corpus e devolve os documentos em ordem de leitura."""
    config = config or DEFAULT_CONFIG
    raiz = Path(corpus_dir)
    if not raiz.exists():
        raise ValueError(f"Diretório do corpus não encontrado: {raiz}")
    if (raiz / "metadata.csv").exists():
        logger.info(f"Layout LJ-Speech detectado em {raiz}")
        return read_ljspeech(corpus_dir)
    logger.info(f"Layout LibriTTS assumido em {raiz}")
    return read_libritts(corpus_dir, config["corpus"]["book_match_threshold"])


# ========================================
# MANIFESTO
# ========================================

def write_manifest(records: Sequence[UtteranceRecord], path: str) -> Path:
    destino = Path(path)
    destino.parent.mkdir(parents=True, exist_ok=True)
    with open(destino, "w", encoding="utf-8") as f:
        for registro in records:
            f.write(json.dumps(asdict(registro), ensure_ascii=False) + "\n")
    return destino


def read_manifest(path: str) -> List[UtteranceRecord]:
    caminho = Path(path)
    if not caminho.exists():
        raise ValueError(f"Manifesto não encontrado: {caminho}")
    registros = []
    with open(caminho, "r", encoding="utf-8") as f:
        for linha in f:
            if linha.strip():
                registros.append(UtteranceRecord(**json.loads(linha)))
    return registros


def verify_manifest(records: Sequence[UtteranceRecord]) -> List[str]:
    """Confere sum(durations) == num_frames em cada arquivo de features."""
    problemas = []
    for registro in records:
        try:
            load_features(registro.feature_path)
        except Exception as e:
            problemas.append(f"{registro.id}: {e}")
    return problemas


# ========================================
# PRÉ-PROCESSAMENTO
# ========================================

def _process_utterance(tarefa: Dict[str, Any]) -> Dict[str, Any]:
    """Unidade de trabalho independente (executada em processo separado)."""
    uid = tarefa["id"]
    try:
        fonemas = g2p(tarefa["text"], tarefa["g2p"])
        audio = load_audio(tarefa["audio_path"], tarefa["audio"])
        alinhamento = read_alignment(tarefa["alignment_path"]) if tarefa["alignment_path"] else None
        features = extract_features(audio, fonemas, alinhamento, config=tarefa["audio"])
        save_features(features, tarefa["feature_path"])
        return {"id": uid, "phonemes": " ".join(fonemas.phonemes), "erro": None}
    except Exception as e:
        return {"id": uid, "phonemes": "", "erro": f"{type(e).__name__}: {e}"}


def preprocess_corpus(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Pipeline completo de pré-processamento.

    Lê o corpus, monta as janelas de contexto, roda G2P e extração de
    features (paralela por elocução) e grava manifesto e relatório.

    Args:
        config: Configuração resolvida (paths.corpus_dir, paths.out_dir,
            paths.aligner_dir, corpus.context_size, corpus.num_workers)

    Returns:
        Relatório com total, processadas e falhas
    """
    corpus_dir = config["paths"]["corpus_dir"]
    if not corpus_dir:
        raise ValueError("paths.corpus_dir não informado")
    out_dir = Path(config["paths"]["out_dir"])
    features_dir = out_dir / FEATURES_DIRNAME
    features_dir.mkdir(parents=True, exist_ok=True)
    aligner_dir = Path(config["paths"]["aligner_dir"]) if config["paths"].get("aligner_dir") else None

    documentos = read_corpus(corpus_dir, config)
    registros = build_context_windows(documentos, int(config["corpus"]["context_size"]))
    logger.info(f"{len(registros)} elocuções em {len(documentos)} documentos")

    tarefas = []
    sem_alinhamento = 0
    for r in registros:
        alinhamento = None
        if aligner_dir is not None:
            candidato = aligner_dir / f"{r.id}.tsv"
            if candidato.exists():
                alinhamento = str(candidato)
            else:
                sem_alinhamento += 1
        r.feature_path = str(features_dir / f"{r.id}.npz")
        tarefas.append({
            "id": r.id,
            "text": r.text,
            "audio_path": r.audio_path,
            "feature_path": r.feature_path,
            "alignment_path": alinhamento,
            "audio": config["audio"],
            "g2p": config["g2p"],
        })
    if sem_alinhamento:
        logger.warning(f"{sem_alinhamento} elocuções sem alinhamento; usando divisão uniforme")

    workers = int(config["corpus"].get("num_workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            resultados = list(executor.map(_process_utterance, tarefas, chunksize=8))
    else:
        resultados = [_process_utterance(t) for t in tarefas]

    falhas = []
    aceitos = []
    for registro, resultado in zip(registros, resultados):
        if resultado["erro"]:
            logger.error(f"✗ {registro.id}: {resultado['erro']}")
            falhas.append({"id": registro.id, "erro": resultado["erro"]})
            continue
        registro.phonemes = resultado["phonemes"]
        aceitos.append(registro)

    manifest_path = write_manifest(aceitos, str(out_dir / MANIFEST_NAME))

    relatorio = {
        "corpus_dir": str(corpus_dir),
        "total": len(registros),
        "processadas": len(aceitos),
        "sem_alinhamento": sem_alinhamento,
        "falhas": falhas,
        "manifest": str(manifest_path),
    }
    with open(out_dir / REPORT_NAME, "w", encoding="utf-8") as f:
        json.dump(relatorio, f, indent=2, ensure_ascii=False)

    logger.info(f"✓ Pré-processamento: {len(aceitos)}/{len(registros)} elocuções")
    return relatorio


def records_by_id(records: Sequence[UtteranceRecord]) -> Dict[str, UtteranceRecord]:
    return {r.id: r for r in records}


def context_texts(record: UtteranceRecord, by_id: Mapping[str, UtteranceRecord]) -> List[str]:
    """Textos da janela; vizinhos fora do manifesto viram sentinela."""
    textos = []
    for uid in record.context_ids:
        if uid == SENTINEL:
            textos.append(SENTINEL)
        elif uid in by_id:
            textos.append(by_id[uid].text)
        else:
            logger.warning(f"{record.id}: vizinho '{uid}' ausente do manifesto, tratado como sentinela")
            textos.append(SENTINEL)
    return textos
