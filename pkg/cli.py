"""
CUC-VAE TTS - Linha de comando
===============================
Ponto de entrada único do pipeline.

COMANDOS:
- preprocess:    corpus -> manifesto + features
- embed-context: manifesto -> cache de embeddings de contexto
- train:         manifesto + cache -> checkpoints
- synthesize:    checkpoint + texto (ou ids do manifesto) -> wav + mel
- evaluate:      referências x sintetizados -> FFE, MCD (e diversidade prosódica)
- case-study:    mesmo texto sob vários contextos -> contornos de energia/F0
- ablation:      treino curto de todas as variantes -> tabela comparativa

Uso: python cli.py <comando> --help
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from services.config_service import (
    DEFAULT_CONFIG,
    VARIANTES,
    context_cache_dir,
    deep_merge,
    dump_config,
    get_dotted,
    load_config,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


# ========================================
# FLAGS
# ========================================

# (flag, chave pontuada da configuração, tipo, ajuda)
FLAGS_COMANDOS: Dict[str, List[tuple]] = {
    "preprocess": [
        ("--corpus-dir", "paths.corpus_dir", str, "Diretório do corpus (LJ-Speech ou LibriTTS)"),
        ("--out-dir", "paths.out_dir", str, "Destino do manifesto e das features"),
        ("--context-size", "corpus.context_size", int, "L: vizinhos de cada lado"),
        ("--aligner-dir", "paths.aligner_dir", str, "Alinhamentos <id>.tsv (opcional)"),
        ("--num-workers", "corpus.num_workers", int, "Processos de extração de features"),
    ],
    "embed-context": [
        ("--manifest", "paths.manifest", str, "Manifesto (padrão: <out-dir>/manifest.jsonl)"),
        ("--out-dir", "paths.out_dir", str, "Diretório do pré-processamento"),
        ("--embedder", "context.embedder", str, "Embedder de pares (stub, bert)"),
        ("--model-name", "context.model_name", str, "Modelo pré-treinado do embedder bert"),
        ("--cache-dir", "context.cache_dir", str, "Cache de contexto (padrão: <out-dir>/features)"),
    ],
    "train": [
        ("--manifest", "paths.manifest", str, "Manifesto de treino"),
        ("--out-dir", "paths.out_dir", str, "Diretório do pré-processamento"),
        ("--checkpoint-dir", "paths.checkpoint_dir", str, "Destino de checkpoints e logs"),
        ("--cache-dir", "context.cache_dir", str, "Cache de contexto"),
        ("--context-size", "corpus.context_size", int, "L: deve coincidir com o cache de contexto"),
        ("--variant", "model.variant", str, f"Variante: {', '.join(VARIANTES)}"),
        ("--steps", "training.steps", int, "Passos de otimização"),
        ("--seed", "training.seed", int, "Semente do treino"),
        ("--learning-rate", "training.learning_rate", float, "Pico da taxa de aprendizado"),
        ("--max-frames", "training.max_frames_per_batch", int, "Orçamento de quadros por lote"),
        ("--device", "training.device", str, "Dispositivo torch"),
    ],
    "synthesize": [
        ("--checkpoint", "paths.checkpoint", str, "Checkpoint treinado"),
        ("--out-dir", "paths.synth_dir", str, "Destino dos áudios"),
        ("--manifest", "paths.manifest", str, "Manifesto para síntese por --ids"),
        ("--cache-dir", "context.cache_dir", str, "Cache de contexto"),
        ("--embedder", "context.embedder", str, "Embedder de pares para --context"),
        ("--mode", "inference.mode", str, "sample ou mean"),
        ("--temperature", "inference.temperature", float, "Temperatura de amostragem"),
        ("--num-samples", "inference.num_samples", int, "Amostras por texto"),
        ("--seed", "inference.seed", int, "Semente da amostragem"),
        ("--vocoder", "vocoder.backend", str, "Vocoder (griffin_lim, torchscript, command)"),
        ("--device", "training.device", str, "Dispositivo torch"),
    ],
    "evaluate": [
        ("--manifest", "paths.manifest", str, "Manifesto das referências"),
        ("--out-dir", "paths.out_dir", str, "Diretório do pré-processamento"),
        ("--synth-dir", "paths.synth_dir", str, "Áudios sintetizados <id>.wav"),
        ("--eval-dir", "paths.eval_dir", str, "Destino do relatório"),
        ("--checkpoint", "paths.checkpoint", str, "Checkpoint para diversidade prosódica (opcional)"),
        ("--cache-dir", "context.cache_dir", str, "Cache de contexto"),
        ("--num-samples", "evaluation.num_samples", int, "Amostras por elocução na diversidade"),
        ("--num-utterances", "evaluation.num_utterances", int, "Elocuções na diversidade"),
        ("--seed", "evaluation.seed", int, "Semente da diversidade"),
    ],
    "case-study": [
        ("--checkpoint", "paths.checkpoint", str, "Checkpoint treinado"),
        ("--eval-dir", "paths.eval_dir", str, "Destino das tabelas e da figura"),
        ("--embedder", "context.embedder", str, "Embedder de pares"),
        ("--seed", "inference.seed", int, "Semente da amostragem"),
        ("--mode", "inference.mode", str, "sample ou mean"),
        ("--temperature", "inference.temperature", float, "Temperatura de amostragem"),
    ],
    "ablation": [
        ("--manifest", "paths.manifest", str, "Manifesto de treino"),
        ("--out-dir", "paths.out_dir", str, "Diretório do pré-processamento"),
        ("--checkpoint-dir", "paths.checkpoint_dir", str, "Destino (um subdiretório por variante)"),
        ("--cache-dir", "context.cache_dir", str, "Cache de contexto"),
        ("--steps", "training.steps", int, "Passos por variante"),
        ("--seed", "training.seed", int, "Semente do treino"),
    ],
}

# Chaves booleanas ligadas por presença da flag
CHAVES_BOOLEANAS: Dict[str, List[tuple]] = {
    "synthesize": [
        ("--standard-gaussian", "inference.standard_gaussian", "Amostra z de N(0, τ²) em vez do prior condicional"),
        ("--reference-durations", "inference.reference_durations", "Usa as durações das features do manifesto"),
    ],
}

# Entradas de cada invocação (textos, vizinhos, ids, variantes): ficam fora da configuração
ENTRADAS_COMANDOS: Dict[str, List[str]] = {
    "synthesize": ["--text", "--context", "--speaker", "--ids"],
    "case-study": ["--text", "--contexts-file", "--speaker"],
    "ablation": ["--variants"],
}

DESCRICOES = {
    "preprocess": "Pré-processa o corpus: janelas de contexto, G2P, features e manifesto",
    "embed-context": "Calcula e grava os embeddings dos pares de contexto",
    "train": "Treina a variante configurada",
    "synthesize": "Sintetiza áudio a partir de um checkpoint",
    "evaluate": "Calcula FFE e MCD (e, com --checkpoint, a diversidade prosódica)",
    "case-study": "Sintetiza o mesmo texto sob vários contextos e exporta os contornos",
    "ablation": "Treina todas as variantes por poucos passos e compara as perdas",
}


def _formatar_padrao(valor: Any) -> str:
    return "nenhum" if valor is None else str(valor)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="CUC-VAE TTS")
    sub = parser.add_subparsers(dest="command", required=True)

    for comando, flags in FLAGS_COMANDOS.items():
        p = sub.add_parser(comando, help=DESCRICOES[comando], description=DESCRICOES[comando])
        p.add_argument("--config", default=None, help="Arquivo JSON de configuração (padrão: nenhum)")
        for flag, chave, tipo, ajuda in flags:
            p.add_argument(
                flag, dest=chave, type=tipo, default=None,
                help=f"{ajuda} (padrão: {_formatar_padrao(get_dotted(DEFAULT_CONFIG, chave))})",
            )

    synth = sub.choices["synthesize"]
    synth.add_argument("--text", default=None, help="Texto a sintetizar (padrão: nenhum)")
    synth.add_argument(
        "--context", action="append", default=None,
        help="Texto vizinho, repetido exatamente 2L vezes em ordem de documento; '' marca ausente (padrão: nenhum)",
    )
    synth.add_argument("--speaker", default=None, help="speaker_id (padrão: primeiro do checkpoint)")
    synth.add_argument("--ids", nargs="+", default=None, help="Ids do manifesto a sintetizar (padrão: todos)")

    for comando, chaves in CHAVES_BOOLEANAS.items():
        for flag, chave, ajuda in chaves:
            sub.choices[comando].add_argument(
                flag, dest=chave, action="store_const", const=True, default=None,
                help=f"{ajuda} (padrão: {_formatar_padrao(get_dotted(DEFAULT_CONFIG, chave))})",
            )

    caso = sub.choices["case-study"]
    caso.add_argument("--text", required=True, help="Texto a sintetizar")
    caso.add_argument(
        "--contexts-file", required=True,
        help="JSON com uma lista de conjuntos de 2L textos vizinhos",
    )
    caso.add_argument("--speaker", default=None, help="speaker_id (padrão: primeiro do checkpoint)")

    sub.choices["ablation"].add_argument(
        "--variants", nargs="+", default=None, choices=VARIANTES,
        help=f"Variantes a treinar (padrão: {' '.join(VARIANTES)})",
    )
    return parser


def resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    """DEFAULT_CONFIG < --config < flags."""
    chaves = {chave for flags in FLAGS_COMANDOS.values() for _, chave, _, _ in flags}
    chaves.update(chave for flags in CHAVES_BOOLEANAS.values() for _, chave, _ in flags)
    overrides = {k: v for k, v in vars(args).items() if k in chaves}
    return load_config(args.config, overrides)


# ========================================
# AUXILIARES
# ========================================

def _registros(config: Dict[str, Any]):
    from services.training_service import load_training_records
    return load_training_records(config)


def _embedder(config: Dict[str, Any]):
    from embedders.registry import get_embedder
    return get_embedder(config["context"]["embedder"], config)


def _flag_embedder(args: argparse.Namespace) -> Optional[str]:
    return vars(args).get("context.embedder")


def _carregar_modelo(config: Dict[str, Any], embedder_flag: Optional[str] = None):
    """
    Modelo do checkpoint; arquitetura, áudio, G2P e embedder de contexto vêm
    da configuração salva nele.

    Raises:
        ValueError: --embedder explícito diferente do embedder do treino
    """
    from services.training_service import load_checkpoint

    caminho = config["paths"].get("checkpoint")
    if not caminho:
        raise ValueError("Informe --checkpoint")
    model, dados = load_checkpoint(caminho, config["training"].get("device", "cpu"), config)
    salvo = dados["config"]

    contexto_salvo = salvo["context"]
    if model.uses_context and embedder_flag and embedder_flag != contexto_salvo["embedder"]:
        raise ValueError(
            f"Checkpoint treinado com o embedder '{contexto_salvo['embedder']}', recebido --embedder {embedder_flag}"
        )
    if model.uses_context and config["context"]["embedder"] != contexto_salvo["embedder"]:
        logger.warning(
            f"Embedder '{config['context']['embedder']}' da configuração substituído por "
            f"'{contexto_salvo['embedder']}' do checkpoint"
        )

    config = deep_merge(config, {
        "audio": salvo["audio"],
        "g2p": salvo["g2p"],
        "model": salvo["model"],
        "corpus": {"context_size": salvo["corpus"]["context_size"]},
        "context": {k: contexto_salvo[k] for k in ("d_ctx", "embedder", "model_name") if k in contexto_salvo},
    })
    return model, config


# ========================================
# COMANDOS
# ========================================

def cmd_preprocess(config: Dict[str, Any], args: argparse.Namespace) -> int:
    from services.corpus_service import preprocess_corpus

    dump_config(config, config["paths"]["out_dir"])
    relatorio = preprocess_corpus(config)
    print(f"✅ {relatorio['processadas']}/{relatorio['total']} elocuções processadas")
    print(f"📄 Manifesto: {relatorio['manifest']}")
    if relatorio["sem_alinhamento"]:
        print(f"⚠️  {relatorio['sem_alinhamento']} sem alinhamento (durações uniformes)")
    if relatorio["falhas"]:
        print(f"❌ {len(relatorio['falhas'])} falhas:")
        for falha in relatorio["falhas"]:
            print(f"   {falha['id']}: {falha['erro']}")
        return 1
    return 0


def cmd_embed_context(config: Dict[str, Any], args: argparse.Namespace) -> int:
    from services.context_service import precompute_and_cache

    cache_dir = str(context_cache_dir(config))
    dump_config(config, cache_dir)
    relatorio = precompute_and_cache(_registros(config), _embedder(config), cache_dir)
    print(f"✅ {relatorio['gravados']} conjuntos de contexto em {relatorio['cache_dir']}")
    if relatorio["falhas"]:
        print(f"❌ {len(relatorio['falhas'])} falhas")
        return 1
    return 0


def cmd_train(config: Dict[str, Any], args: argparse.Namespace) -> int:
    from services.training_service import train

    resultado = train(config)
    print("✅ Treino concluído")
    print(json.dumps(resultado["final"], indent=2, ensure_ascii=False))
    print(f"💾 Checkpoint final: {resultado['checkpoints'][-1]}")
    return 0


def cmd_synthesize(config: Dict[str, Any], args: argparse.Namespace) -> int:
    from services.corpus_service import read_manifest, records_by_id
    from services.synthesis_service import save_synthesis, synthesize_records, synthesize_samples

    model, config = _carregar_modelo(config, _flag_embedder(args))
    out_dir = config["paths"]["synth_dir"]
    dump_config(config, out_dir)
    inferencia = config["inference"]

    if args.text is not None:
        embedder = _embedder(config) if model.uses_context and args.context is not None else None
        amostras = synthesize_samples(
            model, args.text, config, int(inferencia["num_samples"]), int(inferencia["seed"]),
            speaker=args.speaker, neighbors=args.context, embedder=embedder,
        )
        for k, resultado in enumerate(amostras):
            caminhos = save_synthesis(resultado, out_dir, f"sample_{k:02d}", config, {
                "text": args.text,
                "context": args.context,
                "sample": k,
                "seed": int(inferencia["seed"]),
                "temperature": float(inferencia["temperature"]),
                "mode": inferencia["mode"],
                "standard_gaussian": bool(inferencia["standard_gaussian"]),
                "variant": model.variant,
            })
            print(f"✅ {caminhos['wav']}")
        return 0

    manifest = config["paths"].get("manifest")
    if not manifest:
        raise ValueError("Informe --text ou --manifest")
    registros = read_manifest(manifest)
    selecionados = [r for r in registros if args.ids is None or r.id in set(args.ids)]
    if args.ids:
        faltando = sorted(set(args.ids) - {r.id for r in selecionados})
        if faltando:
            raise ValueError(f"Ids fora do manifesto: {faltando}")

    cache_dir = config["context"].get("cache_dir") or str(Path(manifest).parent / "features")
    embedder = _embedder(config) if model.uses_context else None
    gerados = synthesize_records(
        model, selecionados, records_by_id(registros), config, out_dir,
        cache_dir=cache_dir, embedder=embedder, reference_durations=bool(inferencia["reference_durations"]),
    )
    print(f"✅ {len(gerados)}/{len(selecionados)} elocuções sintetizadas em {out_dir}")
    return 0 if len(gerados) == len(selecionados) else 1


def cmd_evaluate(config: Dict[str, Any], args: argparse.Namespace) -> int:
    from services.evaluation_service import (
        build_report,
        evaluate_pairs,
        export_asr_list,
        match_by_id,
        merge_prosody,
        write_report,
    )

    registros = _registros(config)
    eval_dir = config["paths"]["eval_dir"]

    prosodia = {}
    if config["paths"].get("checkpoint"):
        model, config = _carregar_modelo(config, _flag_embedder(args))
        prosodia = _prosodia_por_elocucao(model, registros, config)
    dump_config(config, eval_dir)

    pares = match_by_id({r.id: r.audio_path for r in registros}, config["paths"]["synth_dir"])
    relatorio = build_report(evaluate_pairs(pares, config, prosodia))
    caminhos = write_report(relatorio, eval_dir)
    export_asr_list({uid: teste for uid, (_, teste) in pares.items()}, str(Path(eval_dir) / "asr_list.tsv"))
    print(relatorio.to_string(index=False))
    print(f"📄 Relatório: {caminhos['csv']}")

    if prosodia:
        stats = merge_prosody(list(prosodia.values()), int(config["evaluation"]["num_samples"]))
        with open(Path(eval_dir) / "prosody.json", "w", encoding="utf-8") as f:
            json.dump(stats.__dict__, f, indent=2, ensure_ascii=False)
        print(f"📊 σ(E)={stats.energy_std:.4f}  σ(F0)={stats.f0_std:.2f} Hz  ({stats.num_phonemes} fonemas)")
    return 0


def _prosodia_por_elocucao(model, registros, config: Dict[str, Any]) -> Dict[str, Any]:
    from services.corpus_service import records_by_id
    from services.evaluation_service import prosody_by_utterance
    from services.synthesis_service import record_context

    avaliacao = config["evaluation"]
    por_id = records_by_id(registros)
    embedder = _embedder(config) if model.uses_context else None
    cache_dir = str(context_cache_dir(config))
    elocucoes = []
    for r in registros[: int(avaliacao["num_utterances"])]:
        elocucoes.append({
            "id": r.id,
            "text": r.text,
            "speaker": r.speaker_id if r.speaker_id in model.speakers.index else None,
            "context": record_context(r, por_id, cache_dir, embedder) if model.uses_context else None,
        })
    return prosody_by_utterance(
        model, elocucoes, int(avaliacao["num_samples"]), config, embedder, int(avaliacao["seed"])
    )


def cmd_case_study(config: Dict[str, Any], args: argparse.Namespace) -> int:
    from services.evaluation_service import emit_case_study

    model, config = _carregar_modelo(config, _flag_embedder(args))
    with open(args.contexts_file, "r", encoding="utf-8") as f:
        contextos = json.load(f)
    embedder = _embedder(config) if model.uses_context else None
    dump_config(config, config["paths"]["eval_dir"])
    resultado = emit_case_study(
        model, args.text, contextos, config["paths"]["eval_dir"], config, embedder=embedder, speaker=args.speaker
    )
    print(f"✅ Figura: {resultado['figure']}")
    return 0


def cmd_ablation(config: Dict[str, Any], args: argparse.Namespace) -> int:
    from services.training_service import run_ablation_grid

    tabela = run_ablation_grid(
        config, _registros(config), steps=int(config["training"]["steps"]), variants=args.variants or VARIANTES
    )
    print(tabela.to_string(index=False))
    return 0


COMANDOS = {
    "preprocess": cmd_preprocess,
    "embed-context": cmd_embed_context,
    "train": cmd_train,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
    "case-study": cmd_case_study,
    "ablation": cmd_ablation,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        return COMANDOS[args.command](config, args)
    except (ValueError, RuntimeError) as e:
        logger.error(f"✗ {args.command}: {e}", exc_info=True)
        print(f"❌ {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
