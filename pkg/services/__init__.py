"""
Pacote de Serviços
==================
Pré-processamento, contexto, treino, síntese e avaliação.

Os serviços que dependem de torch (training, synthesis, evaluation) são
importados diretamente pelo módulo: `from services.training_service import train`.
"""

from .config_service import (
    DEFAULT_CONFIG,
    VARIANTES,
    load_config,
    validate_config,
    dump_config
)
from .g2p_service import (
    PhonemeSequence,
    g2p,
    phonemes_to_ids,
    ids_to_phonemes
)
from .feature_service import (
    AcousticFeatures,
    extract_features,
    save_features,
    load_features
)
from .corpus_service import (
    UtteranceRecord,
    build_context_windows,
    locate_in_book,
    preprocess_corpus,
    read_manifest,
    write_manifest
)

__all__ = [
    'DEFAULT_CONFIG',
    'VARIANTES',
    'load_config',
    'validate_config',
    'dump_config',
    'PhonemeSequence',
    'g2p',
    'phonemes_to_ids',
    'ids_to_phonemes',
    'AcousticFeatures',
    'extract_features',
    'save_features',
    'load_features',
    'UtteranceRecord',
    'build_context_windows',
    'locate_in_book',
    'preprocess_corpus',
    'read_manifest',
    'write_manifest',
]
