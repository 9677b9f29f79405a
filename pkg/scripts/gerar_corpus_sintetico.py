"""
Script - Corpus Sintético
==========================
Gera um corpus de tons harmônicos no layout LJ-Speech, com alinhamentos,
para exercitar o pipeline sem dados reais.

Uso: python scripts/gerar_corpus_sintetico.py <destino> [--documents 2] [--frames 5]
"""

import argparse
import sys
from pathlib import Path

# Adiciona o diretório raiz ao path
sys.path.insert(0, str(Path(__file__).parent.parent))

from services.toy_corpus_service import TOY_SENTENCES, make_toy_corpus


def main():
    parser = argparse.ArgumentParser(description="Gera o corpus sintético")
    parser.add_argument("destino", help="Diretório do corpus")
    parser.add_argument("--documents", type=int, default=2, help="Número de documentos (padrão: 2)")
    parser.add_argument("--frames", type=int, default=None, help="Quadros por fonema (padrão: sorteio 3..8)")
    parser.add_argument("--seed", type=int, default=0, help="Semente das durações (padrão: 0)")
    args = parser.parse_args()

    print("=" * 70)
    print("CORPUS SINTÉTICO")
    print("=" * 70)
    resultado = make_toy_corpus(args.destino, num_documents=args.documents,
                                frames_per_phoneme=args.frames, seed=args.seed)
    print(f"✅ {len(resultado['ids'])} elocuções de {len(TOY_SENTENCES)} frases")
    print(f"📂 Corpus: {resultado['corpus_dir']}")
    print(f"📂 Alinhamentos: {resultado['aligner_dir']}")
    print("\nPróximo passo:")
    print(f"  python cli.py preprocess --corpus-dir {resultado['corpus_dir']} "
          f"--aligner-dir {resultado['aligner_dir']} --context-size 2")


if __name__ == "__main__":
    main()
