"""
Testes - Treinamento
=====================
Objetivo ELBO, agendas, checkpoints, reprodutibilidade e gradientes.
"""

import json
import math
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from embedders.stub import StubEmbedder
from models.cu_embedding import log_duration_target, round_durations
from models.tts_model import build_model, count_trainable_parameters
from services.config_service import context_cache_dir, deep_merge
from services.context_service import precompute_and_cache
from services.corpus_service import preprocess_corpus, read_manifest
from services.toy_corpus_service import make_toy_corpus
from services.training_service import (
    TTSDataset,
    collate_batch,
    elbo_loss,
    frame_budget_batches,
    kl_anneal,
    load_checkpoint,
    noam_lr,
    run_ablation_grid,
    save_checkpoint,
    speakers_from_records,
    train,
)
from tests.fixtures import make_batch, tiny_config


class TestObjetivo(unittest.TestCase):
    """Composição da perda"""

    def setUp(self):
        torch.manual_seed(0)
        self.config = tiny_config()
        self.model = build_model(self.config, ["0"])
        self.batch = make_batch(self.config)

    def test_01_soma_dos_termos(self):
        print("\n🧪 Teste 1: total = recon + dur + β1·kl_post + β2·kl_prior")
        perdas = elbo_loss(self.batch, self.model, (0.3, 0.7), generator=torch.Generator().manual_seed(0))
        esperado = perdas.recon + perdas.dur + perdas.variance + 0.3 * perdas.kl_post + 0.7 * perdas.kl_prior
        torch.testing.assert_close(perdas.total, esperado)
        self.assertEqual(float(perdas.variance), 0.0)
        self.assertGreaterEqual(float(perdas.kl_post), 0.0)
        self.assertGreaterEqual(float(perdas.kl_prior), 0.0)

    def test_02_reconstrucao_mascarada(self):
        print("\n🧪 Teste 2: L1 apenas nos quadros válidos")
        saida = self.model(self.batch, generator=torch.Generator().manual_seed(0))
        perdas = elbo_loss(self.batch, self.model, (0.0, 0.0), outputs=saida)
        erros = []
        for b, n in enumerate(self.batch["mel_lengths"].tolist()):
            erros.append((saida["mel"][b, :n] - self.batch["mel"][b, :n]).abs().reshape(-1))
        torch.testing.assert_close(perdas.recon, torch.cat(erros).mean())

        validos = ~self.batch["phoneme_mask"]
        alvo = log_duration_target(self.batch["durations"])
        torch.testing.assert_close(perdas.dur, ((saida["log_duration"] - alvo)[validos] ** 2).mean())
        torch.testing.assert_close(perdas.total, perdas.recon + perdas.dur)

    def test_03_baseline_tem_termo_de_variancia(self):
        config = tiny_config(variant="baseline")
        model = build_model(config, ["0"])
        perdas = elbo_loss(make_batch(config), model, (1.0, 1.0))
        self.assertGreater(float(perdas.variance), 0.0)
        self.assertEqual(float(perdas.kl_post), 0.0)
        self.assertEqual(float(perdas.kl_prior), 0.0)

    def test_04_prior_unico(self):
        for variante in ("global_vae", "fine_grained_vae"):
            with self.subTest(variante=variante):
                config = tiny_config(variant=variante)
                perdas = elbo_loss(make_batch(config), build_model(config, ["0"]), (1.0, 1.0))
                self.assertEqual(float(perdas.kl_prior), 0.0)
                self.assertGreaterEqual(float(perdas.kl_post), 0.0)

    def test_05_termo_nao_finito(self):
        saida = self.model(self.batch)
        saida["mel"] = torch.full_like(saida["mel"], float("nan"))
        with self.assertRaises(RuntimeError) as ctx:
            elbo_loss(self.batch, self.model, (0.0, 0.0), outputs=saida)
        self.assertIn("recon", str(ctx.exception))


class TestGradientes(unittest.TestCase):
    """Gradientes analíticos contra diferenças finitas (float64)"""

    def test_diferencas_finitas_em_todos_os_parametros(self):
        print("\n🧪 Teste: Gradiente analítico vs. diferenças finitas, entrada a entrada")
        bloco = {"layers": 1, "heads": 2, "ff_dim": 16, "kernel_sizes": [3, 1], "dropout": 0.0, "positional": True}
        preditor = {"filter_size": 8, "kernel_size": 3, "dropout": 0.0}
        config = tiny_config(model={
            "d_model": 8, "encoder": bloco, "decoder": bloco,
            "fusion": {"heads": 2, "d_attn": 8, "mask_sentinel": False},
            "duration_predictor": preditor, "variance_predictor": preditor,
            "vae": {"d_z": 2, "hidden": 8, "layers": 4, "zero_init_output": False},
        }, context={"d_ctx": 8})
        torch.manual_seed(0)
        model = build_model(config, ["0"]).double().eval()
        batch = make_batch(config, phoneme_lengths=(4, 3), dtype=torch.float64)
        T = batch["phoneme_ids"].shape[1]
        self.assertLessEqual(T, 4)
        eps = torch.randn(2, T, config["model"]["vae"]["d_z"], dtype=torch.float64,
                          generator=torch.Generator().manual_seed(1))

        def perda():
            return elbo_loss(batch, model, (0.5, 0.5), epsilon=eps).total

        model.zero_grad()
        perda().backward()

        h = 1e-6
        verificadas = 0
        for nome, p in model.named_parameters():
            analiticos = p.grad if p.grad is not None else torch.zeros_like(p)
            plano = p.data.view(-1)
            for i in range(plano.numel()):
                with torch.no_grad():
                    original = float(plano[i])
                    plano[i] = original + h
                    mais = float(perda())
                    plano[i] = original - h
                    menos = float(perda())
                    plano[i] = original
                numerico = (mais - menos) / (2 * h)
                analitico = float(analiticos.view(-1)[i])
                erro = abs(numerico - analitico) / max(1.0, abs(analitico))
                self.assertLess(erro, 1e-4, f"{nome}[{i}]: analítico={analitico} numérico={numerico}")
                verificadas += 1
        self.assertEqual(verificadas, sum(p.numel() for p in model.parameters()))
        print(f"✓ {verificadas} entradas verificadas")


class TestAgendas(unittest.TestCase):
    """Aquecimento do KL e taxa de aprendizado"""

    def test_kl_anneal(self):
        cfg = {"kl_warmup_steps": 10, "beta1_max": 1e-4, "beta2_max": 2e-4}
        self.assertEqual(kl_anneal(0, cfg), (0.0, 0.0))
        b1, b2 = kl_anneal(5, cfg)
        self.assertAlmostEqual(b1, 5e-5)
        self.assertAlmostEqual(b2, 1e-4)
        self.assertEqual(kl_anneal(50, cfg), (1e-4, 2e-4))
        with self.assertRaises(ValueError):
            kl_anneal(-1, cfg)

    def test_noam(self):
        self.assertAlmostEqual(noam_lr(4000, 1e-3, 4000), 1e-3)
        self.assertLess(noam_lr(1000, 1e-3, 4000), noam_lr(2000, 1e-3, 4000))
        self.assertAlmostEqual(noam_lr(16000, 1e-3, 4000), 1e-3 * math.sqrt(4000 / 16000))


class TestLotes(unittest.TestCase):
    """Lotes por orçamento de quadros"""

    def test_orcamento(self):
        comprimentos = [30, 80, 25, 60, 90, 10, 45]
        lotes = frame_budget_batches(comprimentos, 120, seed=3, epoch=0)
        self.assertEqual(sorted(i for lote in lotes for i in lote), list(range(len(comprimentos))))
        for lote in lotes:
            self.assertTrue(len(lote) == 1 or max(comprimentos[i] for i in lote) * len(lote) <= 120)
        self.assertEqual(lotes, frame_budget_batches(comprimentos, 120, seed=3, epoch=0))
        um_lote = frame_budget_batches(comprimentos, 10 ** 6, seed=3, epoch=0)
        self.assertEqual(len(um_lote), 1)
        self.assertEqual(um_lote[0], [i for lote in lotes for i in lote])


class TestTreinoNoCorpusSintetico(unittest.TestCase):
    """Treino curto de ponta a ponta"""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        base = tiny_config()
        corpus = make_toy_corpus(str(Path(cls.tmp) / "corpus"), frames_per_phoneme=3, config=base)
        cls.config = deep_merge(base, {"paths": {
            "corpus_dir": corpus["corpus_dir"],
            "aligner_dir": corpus["aligner_dir"],
            "out_dir": str(Path(cls.tmp) / "pre"),
        }})
        relatorio = preprocess_corpus(cls.config)
        cls.records = read_manifest(relatorio["manifest"])
        precompute_and_cache(cls.records, StubEmbedder(16), str(context_cache_dir(cls.config)))

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def _config(self, nome, **secoes):
        return deep_merge(self.config, {"paths": {"checkpoint_dir": str(Path(self.tmp) / nome)}, **secoes})

    def test_01_dataset_e_collate(self):
        print("\n🧪 Teste 1: Dataset e collate")
        from services.context_service import load_context_cache
        cache = load_context_cache([r.id for r in self.records], str(context_cache_dir(self.config)))
        dataset = TTSDataset(self.records, self.config, speakers_from_records(self.records), cache)
        lote = collate_batch([dataset[0], dataset[1]])
        self.assertEqual(lote["context"].shape, (2, 4, 16))
        self.assertEqual(lote["mel_lengths"].tolist(), [int(d.sum()) for d in lote["durations"]])
        self.assertEqual(lote["context_mask"].shape, (2, 4))
        self.assertTrue(lote["context_mask"][0, 0].item())

    def test_02_treino_registra_e_salva(self):
        print("\n🧪 Teste 2: Treino de 4 passos")
        config = self._config("run_a")
        resultado = train(config, self.records)
        self.assertEqual(len(resultado["history"]), 4)
        self.assertEqual([Path(c).name for c in resultado["checkpoints"]], ["step_2.pt", "step_4.pt"])
        pasta = Path(config["paths"]["checkpoint_dir"])
        linhas = (pasta / "losses.jsonl").read_text(encoding="utf-8").strip().splitlines()
        self.assertEqual(len(linhas), 4)
        self.assertEqual(
            set(json.loads(linhas[0])),
            {"step", "lr", "recon", "dur", "variance", "kl_post", "kl_prior", "beta1", "beta2", "total"},
        )
        self.assertTrue((pasta / "resolved_config.json").exists())
        self.assertTrue((pasta / "train.log").exists())
        print(f"✓ total final = {resultado['final']['total']:.4f}")

    def test_03_reprodutivel(self):
        print("\n🧪 Teste 3: Mesma semente, mesmo histórico em 100 passos")
        ajustes = {"training": {"checkpoint_interval": 1000, "log_interval": 50}}
        a = train(self._config("rep_a", **ajustes), self.records, steps=100)
        b = train(self._config("rep_b", **ajustes), self.records, steps=100)
        self.assertEqual(len(a["history"]), 100)
        self.assertEqual([h["total"] for h in a["history"]], [h["total"] for h in b["history"]])
        for (nome, pa), (_, pb) in zip(a["model"].named_parameters(), b["model"].named_parameters()):
            self.assertTrue(torch.equal(pa, pb), nome)

    def test_04_checkpoint_ida_e_volta(self):
        print("\n🧪 Teste 4: Checkpoint preserva as saídas")
        config = self._config("ckpt")
        resultado = train(config, self.records, steps=2)
        model = resultado["model"].eval()
        caminho = save_checkpoint(str(Path(self.tmp) / "manual.pt"), model, None, None, 2, config)
        restaurado, dados = load_checkpoint(str(caminho), "cpu", config)
        self.assertEqual(dados["step"], 2)

        batch = make_batch(config)
        eps = torch.randn(2, batch["phoneme_ids"].shape[1], 2, generator=torch.Generator().manual_seed(3))
        with torch.no_grad():
            a = model(batch, epsilon=eps)["mel"]
            b = restaurado(batch, epsilon=eps)["mel"]
        torch.testing.assert_close(a, b, rtol=0, atol=0)

    def test_05_perda_diminui(self):
        print("\n🧪 Teste 5: Reconstrução diminui")
        config = self._config("aprende", training={"learning_rate": 1e-2, "warmup_steps": 10,
                                                   "checkpoint_interval": 100})
        resultado = train(config, self.records, steps=40)
        inicio = sum(h["recon"] for h in resultado["history"][:5]) / 5
        fim = sum(h["recon"] for h in resultado["history"][-5:]) / 5
        self.assertLess(fim, inicio)
        print(f"✓ recon {inicio:.3f} -> {fim:.3f}")

    def test_06_grade_de_ablacao(self):
        print("\n🧪 Teste 6: Grade de ablação")
        tabela = run_ablation_grid(self._config("ablacao"), self.records, steps=2)
        self.assertEqual(tabela["variant"].tolist(), ["baseline", "global_vae", "fine_grained_vae", "cvae", "cuc_vae"])
        parametros = dict(zip(tabela["variant"], tabela["trainable_parameters"]))
        self.assertGreater(parametros["cuc_vae"], parametros["cvae"])
        self.assertTrue((Path(self.tmp) / "ablacao" / "ablation.csv").exists())
        self.assertEqual(
            parametros["cvae"],
            count_trainable_parameters(build_model(
                deep_merge(self.config, {"model": {"variant": "cvae"}}), speakers_from_records(self.records)
            )),
        )

    def test_07_duracoes_previstas_em_corpus_constante(self):
        print("\n🧪 Teste 7: Preditor de durações a ±1 quadro com durações constantes")
        config = self._config("duracoes", model={"variant": "cvae"}, training={
            "learning_rate": 1e-2, "warmup_steps": 10, "checkpoint_interval": 1000,
        })
        model = train(config, self.records, steps=80)["model"].eval()
        dataset = TTSDataset(self.records, config, speakers_from_records(self.records))
        lote = collate_batch([dataset[i] for i in range(len(dataset))])
        with torch.no_grad():
            saida = model(lote)
        previstas = round_durations(saida["log_duration"], lote["phoneme_ids"], lote["phoneme_mask"])
        validos = ~lote["phoneme_mask"]
        self.assertTrue((lote["durations"][validos] == 3).all())
        desvio = (previstas[validos] - lote["durations"][validos]).abs()
        self.assertLessEqual(int(desvio.max()), 1)
        print(f"✓ desvio máximo = {int(desvio.max())} quadro(s)")


if __name__ == '__main__':
    unittest.main(verbosity=2)
