"""
Testes - Linha de comando
==========================
Flags documentadas, precedência da configuração e o pipeline completo
sobre o corpus sintético.
"""

import contextlib
import io
import json
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from cli import CHAVES_BOOLEANAS, ENTRADAS_COMANDOS, FLAGS_COMANDOS, build_parser, main, resolve_config
from services.toy_corpus_service import make_toy_corpus
from tests.fixtures import FIXTURES_DIR, tiny_config

TEXTO = "Mary asked the time"
VIZINHOS = ["", "the river was calm", "what happened next", ""]


def _ajuda(comando):
    saida = io.StringIO()
    with contextlib.redirect_stdout(saida):
        try:
            main([comando, "--help"])
        except SystemExit as e:
            if e.code != 0:
                raise
    return saida.getvalue()


class TestAjuda(unittest.TestCase):
    """--help de cada comando"""

    def test_01_todas_as_flags(self):
        print("\n🧪 Teste 1: Flags documentadas")
        with open(FIXTURES_DIR / "cli_flags.json", "r", encoding="utf-8") as f:
            esperado = json.load(f)
        self.assertEqual(set(esperado), set(FLAGS_COMANDOS))
        for comando, flags in esperado.items():
            texto = _ajuda(comando)
            for flag in flags:
                self.assertIn(flag, texto, f"{comando}: {flag} ausente do --help")
            print(f"✓ {comando}: {len(flags)} flags")

    def test_02_padroes_visiveis(self):
        for comando, flags in FLAGS_COMANDOS.items():
            with self.subTest(comando=comando):
                self.assertGreaterEqual(_ajuda(comando).count("padrão"), len(flags))

    def test_03_precedencia(self):
        print("\n🧪 Teste 3: padrões < --config < flags")
        with tempfile.TemporaryDirectory() as tmp:
            arquivo = Path(tmp) / "config.json"
            arquivo.write_text(json.dumps({"training": {"steps": 7, "seed": 3}}), encoding="utf-8")
            parser = build_parser()
            config = resolve_config(parser.parse_args(["train", "--config", str(arquivo), "--steps", "9"]))
            self.assertEqual(config["training"]["steps"], 9)
            self.assertEqual(config["training"]["seed"], 3)
            config = resolve_config(parser.parse_args(["train", "--config", str(arquivo)]))
            self.assertEqual(config["training"]["steps"], 7)

    def test_04_valor_invalido(self):
        self.assertEqual(main(["train", "--variant", "inexistente", "--steps", "1"]), 2)

    def test_05_flags_com_chave_ou_entrada(self):
        print("\n🧪 Teste 5: Flags mapeadas para chaves pontuadas ou entradas da invocação")
        with open(FIXTURES_DIR / "cli_flags.json", "r", encoding="utf-8") as f:
            esperado = json.load(f)
        for comando, flags in esperado.items():
            with self.subTest(comando=comando):
                mapeadas = {flag for flag, _, _, _ in FLAGS_COMANDOS[comando]}
                mapeadas |= {flag for flag, _, _ in CHAVES_BOOLEANAS.get(comando, [])}
                entradas = set(ENTRADAS_COMANDOS.get(comando, []))
                self.assertFalse(mapeadas & entradas)
                self.assertEqual(set(flags), {"--config"} | mapeadas | entradas)

    def test_06_context_size_e_chaves_booleanas(self):
        parser = build_parser()
        config = resolve_config(parser.parse_args(["train", "--context-size", "3"]))
        self.assertEqual(config["corpus"]["context_size"], 3)
        config = resolve_config(parser.parse_args(["synthesize", "--reference-durations"]))
        self.assertTrue(config["inference"]["reference_durations"])
        self.assertFalse(config["inference"]["standard_gaussian"])


class TestPipeline(unittest.TestCase):
    """preprocess -> embed-context -> train -> synthesize -> evaluate"""

    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp())
        config = tiny_config()
        cls.config_path = cls.tmp / "config.json"
        cls.config_path.write_text(json.dumps(config), encoding="utf-8")
        corpus = make_toy_corpus(str(cls.tmp / "corpus"), frames_per_phoneme=3, config=config)
        cls.pre = cls.tmp / "pre"
        cls.ckpt_dir = cls.tmp / "ckpt"

        cls.codigos = {
            "preprocess": main([
                "preprocess", "--config", str(cls.config_path), "--corpus-dir", corpus["corpus_dir"],
                "--aligner-dir", corpus["aligner_dir"], "--out-dir", str(cls.pre),
            ]),
            "embed-context": main([
                "embed-context", "--config", str(cls.config_path), "--out-dir", str(cls.pre), "--embedder", "stub",
            ]),
            "train": main([
                "train", "--config", str(cls.config_path), "--out-dir", str(cls.pre),
                "--checkpoint-dir", str(cls.ckpt_dir), "--steps", "2",
            ]),
        }
        cls.checkpoint = str(cls.ckpt_dir / "step_2.pt")

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def _sintetizar(self, destino, *extras):
        argv = [
            "synthesize", "--config", str(self.config_path), "--checkpoint", self.checkpoint,
            "--out-dir", str(self.tmp / destino), "--text", TEXTO,
        ]
        for vizinho in VIZINHOS:
            argv += ["--context", vizinho]
        return main(argv + list(extras))

    def test_01_etapas_iniciais(self):
        print("\n🧪 Teste 1: preprocess, embed-context e train")
        self.assertEqual(self.codigos, {"preprocess": 0, "embed-context": 0, "train": 0})
        self.assertTrue((self.pre / "manifest.jsonl").exists())
        self.assertTrue(Path(self.checkpoint).exists())
        self.assertTrue((self.ckpt_dir / "losses.jsonl").exists())

    def test_02_modo_media_repete(self):
        print("\n🧪 Teste 2: --mode mean gera amostras idênticas")
        self.assertEqual(self._sintetizar("media", "--mode", "mean", "--num-samples", "3"), 0)
        destino = self.tmp / "media"
        wavs = [(destino / f"sample_{k:02d}.wav").read_bytes() for k in range(3)]
        self.assertEqual(wavs[0], wavs[1])
        self.assertEqual(wavs[0], wavs[2])
        sidecar = json.loads((destino / "sample_00.json").read_text(encoding="utf-8"))
        self.assertEqual(sidecar["mode"], "mean")
        self.assertEqual(sidecar["context"], VIZINHOS)
        self.assertTrue((destino / "sample_00.mel.npy").exists())

    def test_03_semente_reproduz(self):
        print("\n🧪 Teste 3: --seed 7 reproduz a amostragem")
        self.assertEqual(self._sintetizar("semente_a", "--mode", "sample", "--seed", "7"), 0)
        self.assertEqual(self._sintetizar("semente_b", "--mode", "sample", "--seed", "7"), 0)
        self.assertEqual(
            (self.tmp / "semente_a" / "sample_00.wav").read_bytes(),
            (self.tmp / "semente_b" / "sample_00.wav").read_bytes(),
        )

    def test_04_contexto_obrigatorio(self):
        print("\n🧪 Teste 4: cuc_vae sem --context falha")
        argv = [
            "synthesize", "--config", str(self.config_path), "--checkpoint", self.checkpoint,
            "--out-dir", str(self.tmp / "sem_contexto"), "--text", TEXTO,
        ]
        erro = io.StringIO()
        with contextlib.redirect_stderr(erro):
            self.assertEqual(main(argv), 2)
        self.assertIn("--context", erro.getvalue())

    def test_05_contexto_com_tamanho_errado(self):
        argv = [
            "synthesize", "--config", str(self.config_path), "--checkpoint", self.checkpoint,
            "--out-dir", str(self.tmp / "errado"), "--text", TEXTO, "--context", "a", "--context", "b",
        ]
        self.assertEqual(main(argv), 2)

    def test_06_sintese_e_avaliacao_do_manifesto(self):
        print("\n🧪 Teste 6: Síntese do manifesto e avaliação")
        manifesto = str(self.pre / "manifest.jsonl")
        synth_dir = self.tmp / "manifesto"
        self.assertEqual(main([
            "synthesize", "--config", str(self.config_path), "--checkpoint", self.checkpoint,
            "--manifest", manifesto, "--out-dir", str(synth_dir), "--reference-durations",
        ]), 0)

        eval_dir = self.tmp / "avaliacao"
        self.assertEqual(main([
            "evaluate", "--config", str(self.config_path), "--out-dir", str(self.pre),
            "--synth-dir", str(synth_dir), "--eval-dir", str(eval_dir), "--checkpoint", self.checkpoint,
        ]), 0)
        metricas = json.loads((eval_dir / "metrics.json").read_text(encoding="utf-8"))
        self.assertEqual(metricas[-1]["id"], "MEDIA")
        self.assertEqual(len(metricas) - 1, len(list(synth_dir.glob("*.wav"))))
        self.assertTrue((eval_dir / "asr_list.tsv").exists())
        prosodia = json.loads((eval_dir / "prosody.json").read_text(encoding="utf-8"))
        self.assertEqual(prosodia["num_samples"], 3)

    def test_07_ids_inexistentes(self):
        self.assertEqual(main([
            "synthesize", "--config", str(self.config_path), "--checkpoint", self.checkpoint,
            "--manifest", str(self.pre / "manifest.jsonl"), "--out-dir", str(self.tmp / "ids"),
            "--ids", "NAO-EXISTE",
        ]), 2)

    def test_08_metricas_com_diversidade_por_elocucao(self):
        print("\n🧪 Teste 8: Colunas f0_std e e_std no relatório")
        manifesto = str(self.pre / "manifest.jsonl")
        synth_dir = self.tmp / "manifesto_prosodia"
        self.assertEqual(main([
            "synthesize", "--config", str(self.config_path), "--checkpoint", self.checkpoint,
            "--manifest", manifesto, "--out-dir", str(synth_dir),
        ]), 0)
        eval_dir = self.tmp / "avaliacao_prosodia"
        self.assertEqual(main([
            "evaluate", "--config", str(self.config_path), "--out-dir", str(self.pre),
            "--synth-dir", str(synth_dir), "--eval-dir", str(eval_dir), "--checkpoint", self.checkpoint,
        ]), 0)
        metricas = json.loads((eval_dir / "metrics.json").read_text(encoding="utf-8"))
        for linha in metricas:
            self.assertIn("f0_std", linha)
            self.assertIn("e_std", linha)
        com_prosodia = [m for m in metricas[:-1] if m["e_std"] is not None]
        self.assertEqual(len(com_prosodia), 2)
        self.assertIsNotNone(metricas[-1]["e_std"])
        self.assertAlmostEqual(metricas[-1]["e_std"], sum(m["e_std"] for m in com_prosodia) / 2, places=6)

    def test_09_procedencia_do_embedder(self):
        print("\n🧪 Teste 9: Embedder do cache gravado e restaurado do checkpoint")
        meta = json.loads((self.pre / "features" / "context_meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["embedder"], "stub")
        treino = json.loads((self.ckpt_dir / "resolved_config.json").read_text(encoding="utf-8"))
        self.assertEqual(treino["context"]["embedder"], "stub")

        self.assertEqual(self._sintetizar("embedder_explicito", "--embedder", "bert"), 2)

        config = tiny_config(context={"embedder": "bert"})
        config_bert = self.tmp / "config_bert.json"
        config_bert.write_text(json.dumps(config), encoding="utf-8")
        argv = [
            "synthesize", "--config", str(config_bert), "--checkpoint", self.checkpoint,
            "--out-dir", str(self.tmp / "embedder_restaurado"), "--text", TEXTO,
        ]
        for vizinho in VIZINHOS:
            argv += ["--context", vizinho]
        self.assertEqual(main(argv), 0)
        resolvida = json.loads((self.tmp / "embedder_restaurado" / "resolved_config.json").read_text(encoding="utf-8"))
        self.assertEqual(resolvida["context"]["embedder"], "stub")

    def test_10_context_size_diferente_do_cache(self):
        self.assertEqual(main([
            "train", "--config", str(self.config_path), "--out-dir", str(self.pre),
            "--checkpoint-dir", str(self.tmp / "ckpt_l3"), "--steps", "1", "--context-size", "3",
        ]), 2)


if __name__ == '__main__':
    unittest.main(verbosity=2)
