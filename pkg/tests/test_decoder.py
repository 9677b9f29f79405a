"""
Testes - Decoder acústico e vocoder
====================================
Regulador de comprimento, injeção do latente, decodificação e Griffin-Lim.
"""

import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from models.acoustic_decoder import MelDecoder, inject_latent, length_regulate, regulate_batch
from models.cuc_vae import LatentProjection
from models.tts_model import VARIANTES, build_model
from services.vocoder_service import load_vocoder, read_mel_interchange, vocode, write_mel_interchange
from tests.fixtures import make_batch, tiny_config


class TestRegulador(unittest.TestCase):
    """Regulador de comprimento"""

    def test_01_repeticao(self):
        print("\n🧪 Teste 1: Repetição em ordem")
        linhas = torch.tensor([[1.0], [2.0], [3.0]])
        saida = length_regulate(linhas, torch.tensor([2, 0, 3]))
        self.assertEqual(saida.squeeze(-1).tolist(), [1.0, 1.0, 3.0, 3.0, 3.0])

    def test_02_erros(self):
        linhas = torch.zeros(3, 2)
        with self.assertRaises(ValueError):
            length_regulate(linhas, torch.tensor([1, 1]))
        with self.assertRaises(ValueError):
            length_regulate(linhas, torch.tensor([1, -1, 1]))
        with self.assertRaises(ValueError):
            length_regulate(linhas, torch.tensor([0, 0, 0]))

    def test_03_lote(self):
        linhas = torch.randn(2, 3, 4)
        quadros, comprimentos = regulate_batch(linhas, torch.tensor([[1, 2, 1], [3, 0, 0]]))
        self.assertEqual(tuple(quadros.shape), (2, 4, 4))
        self.assertEqual(comprimentos.tolist(), [4, 3])
        torch.testing.assert_close(quadros[1, :3], linhas[1, :1].expand(3, 4))
        self.assertTrue((quadros[1, 3] == 0).all())

    def test_04_multiconjunto_e_ordem_aleatorios(self):
        print("\n🧪 Teste 4: Cada linha aparece d_t vezes, em ordem")
        rng = np.random.default_rng(0)
        for repeticao in range(50):
            T = int(rng.integers(1, 12))
            duracoes = rng.integers(0, 5, size=T)
            if duracoes.sum() == 0:
                duracoes[rng.integers(T)] = 1
            linhas = torch.arange(T, dtype=torch.float64)[:, None].expand(T, 3)
            saida = length_regulate(linhas, torch.as_tensor(duracoes))
            indices = saida[:, 0].long().numpy()
            with self.subTest(repeticao=repeticao):
                self.assertEqual(saida.shape[0], int(duracoes.sum()))
                np.testing.assert_array_equal(np.bincount(indices, minlength=T), duracoes)
                self.assertTrue((np.diff(indices) >= 0).all())
                torch.testing.assert_close(saida, linhas[torch.as_tensor(indices)])


class TestDecoderEquivariancia(unittest.TestCase):
    """Sem codificação posicional e com convoluções de núcleo 1, o decoder comuta com permutações de quadros"""

    def test_permutacao_dos_quadros(self):
        print("\n🧪 Teste: Decoder equivariante a permutações")
        bloco = {"layers": 2, "heads": 2, "ff_dim": 32, "kernel_sizes": [1, 1], "dropout": 0.0, "positional": False}
        torch.manual_seed(0)
        decoder = MelDecoder(16, 20, bloco).double().eval()
        quadros = torch.randn(1, 9, 16, dtype=torch.float64)
        rng = torch.Generator().manual_seed(4)
        with torch.no_grad():
            base = decoder(quadros)
            for _ in range(5):
                permutacao = torch.randperm(9, generator=rng)
                torch.testing.assert_close(decoder(quadros[:, permutacao]), base[:, permutacao])


class TestInjecao(unittest.TestCase):
    """H' = H + Linear(z)"""

    def test_afim_em_z(self):
        torch.manual_seed(0)
        projecao = LatentProjection(2, 8)
        H = torch.randn(1, 4, 8)
        z1, z2 = torch.randn(1, 4, 2), torch.randn(1, 4, 2)
        a = inject_latent(projecao, H, z1)
        b = inject_latent(projecao, H, z2)
        meio = inject_latent(projecao, H, 0.5 * (z1 + z2))
        torch.testing.assert_close(meio, 0.5 * (a + b))
        torch.testing.assert_close(a - H, projecao.linear(z1))

    def test_shapes_incompativeis(self):
        with self.assertRaises(ValueError):
            inject_latent(LatentProjection(2, 8), torch.randn(1, 4, 8), torch.randn(1, 3, 2))


class TestModelo(unittest.TestCase):
    """Forward e inferência de todas as variantes"""

    def test_01_forward_todas_as_variantes(self):
        print("\n🧪 Teste 1: Forward com durações reais")
        for variante in VARIANTES:
            with self.subTest(variante=variante):
                config = tiny_config(variant=variante)
                torch.manual_seed(0)
                model = build_model(config, ["0"])
                batch = make_batch(config)
                saida = model(batch, generator=torch.Generator().manual_seed(0))
                self.assertEqual(tuple(saida["mel"].shape), tuple(batch["mel"].shape))
                self.assertEqual(saida["mel_lengths"].tolist(), batch["mel_lengths"].tolist())
                self.assertTrue((saida["mel"][saida["frame_mask"]] == 0).all())
                self.assertEqual(model.uses_context, variante == "cuc_vae")
                print(f"✓ {variante}")

    def test_02_inferencia_media_deterministica(self):
        print("\n🧪 Teste 2: Inferência em modo média")
        config = tiny_config()
        torch.manual_seed(0)
        model = build_model(config, ["0"]).eval()
        batch = make_batch(config, (5,))
        args = (batch["phoneme_ids"], batch["speaker_idx"], None, batch["context"])
        a = model.infer(*args, mode="mean")
        b = model.infer(*args, mode="mean")
        torch.testing.assert_close(a["mel"], b["mel"], rtol=0, atol=0)
        self.assertEqual(a["mel"].shape[1], int(a["durations"].sum()))

    def test_03_duracoes_forcadas(self):
        config = tiny_config(variant="cvae")
        model = build_model(config, ["0"]).eval()
        batch = make_batch(config, (5,))
        saida = model.infer(batch["phoneme_ids"], batch["speaker_idx"], durations=batch["durations"])
        self.assertEqual(saida["mel"].shape[1], int(batch["durations"].sum()))

    def test_04_contexto_obrigatorio(self):
        config = tiny_config()
        model = build_model(config, ["0"]).eval()
        batch = make_batch(config, (5,))
        with self.assertRaises(ValueError):
            model.infer(batch["phoneme_ids"], batch["speaker_idx"])


class TestVocoder(unittest.TestCase):
    """Vocoder Griffin-Lim e troca de mel"""

    def setUp(self):
        self.config = tiny_config()
        self.audio = self.config["audio"]

    def test_01_comprimento(self):
        print("\n🧪 Teste 1: Comprimento da forma de onda")
        mel = np.random.default_rng(0).normal(-4, 1, size=(12, self.audio["n_mels"])).astype(np.float32)
        onda = vocode(mel, self.config)
        self.assertEqual(len(onda), 12 * self.audio["hop_length"])

    def test_02_silencio(self):
        print("\n🧪 Teste 2: Mel no piso gera silêncio")
        mel = np.full((10, self.audio["n_mels"]), np.log(self.audio["log_floor"]), dtype=np.float32)
        onda = vocode(mel, self.config)
        self.assertLess(float(np.sqrt(np.mean(onda ** 2))), 1e-2)

    def test_03_deterministico(self):
        mel = np.random.default_rng(1).normal(-3, 1, size=(8, self.audio["n_mels"])).astype(np.float32)
        np.testing.assert_array_equal(vocode(mel, self.config), vocode(mel, self.config))

    def test_04_fallback(self):
        config = tiny_config(vocoder={"backend": "torchscript", "torchscript_path": None})
        self.assertEqual(type(load_vocoder(config)).__name__, "GriffinLimVocoder")
        sem_fallback = tiny_config(vocoder={"backend": "torchscript", "allow_fallback": False})
        with self.assertRaises(RuntimeError):
            load_vocoder(sem_fallback)

    def test_05_troca_de_mel(self):
        mel = np.random.default_rng(2).normal(size=(6, self.audio["n_mels"])).astype(np.float32)
        with tempfile.TemporaryDirectory() as tmp:
            caminho = write_mel_interchange(mel, str(Path(tmp) / "x.mel.npy"), self.audio)
            lido, meta = read_mel_interchange(str(caminho))
        np.testing.assert_array_equal(lido, mel)
        self.assertEqual(meta["num_frames"], 6)
        self.assertEqual(meta["hop_length"], self.audio["hop_length"])


if __name__ == '__main__':
    unittest.main(verbosity=2)
