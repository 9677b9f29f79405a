"""
Testes - G2P
=============
Normalização, léxico, regras letra-som e pausas de fronteira.
"""

import json
import sys
import unittest
from unittest import mock
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from services.g2p_service import (
    PAD,
    PHONEME_INVENTORY,
    PHONEME_TO_ID,
    PhonemeSequence,
    g2p,
    load_g2p_en,
    ids_to_phonemes,
    is_silence,
    letter_to_sound,
    normalize_text,
)

GOLDEN = Path(__file__).parent / "fixtures" / "g2p_golden.json"
LEXICO = {"backend": "lexicon"}


class TestNormalizacao(unittest.TestCase):
    """Normalização de transcritos"""

    def test_pontuacao_e_caixa(self):
        self.assertEqual(normalize_text("  MARY, asked   the time!  "), "mary asked the time")

    def test_digitos_por_extenso(self):
        self.assertEqual(normalize_text("it was 5"), "it was five")

    def test_apostrofo_interno_mantido(self):
        self.assertEqual(normalize_text("don't 'quote'"), "don't quote")

    def test_acentos_removidos(self):
        self.assertEqual(normalize_text("café"), "cafe")


class TestG2P(unittest.TestCase):
    """Conversão texto -> fonemas"""

    def test_golden(self):
        with open(GOLDEN, "r", encoding="utf-8") as f:
            casos = json.load(f)
        for texto, esperado in casos.items():
            with self.subTest(texto=texto):
                self.assertEqual(" ".join(g2p(texto, LEXICO).phonemes), esperado)

    def test_tamanho_exemplo(self):
        self.assertEqual(g2p("Mary asked the time", LEXICO).T, 16)

    def test_deterministico(self):
        self.assertEqual(g2p("the old man said nothing", LEXICO).phonemes, g2p("the old man said nothing", LEXICO).phonemes)

    def test_sem_fronteira(self):
        seq = g2p("Mary asked", {**LEXICO, "word_boundary": ""})
        self.assertEqual(seq.phonemes, ["M", "EH", "R", "IY", "AE", "S", "K", "T"])

    def test_silencio_nas_bordas(self):
        seq = g2p("Mary", {**LEXICO, "edge_silence": True})
        self.assertEqual(seq.phonemes[0], "sil")
        self.assertEqual(seq.phonemes[-1], "sil")

    def test_palavra_fora_do_lexico(self):
        fones = letter_to_sound("zorblax")
        self.assertTrue(fones)
        self.assertTrue(all(f in PHONEME_TO_ID for f in fones))
        self.assertIn("Z", fones)

    def test_texto_vazio(self):
        with self.assertRaises(ValueError):
            g2p("  ,.!  ", LEXICO)

    def test_ids_ida_e_volta(self):
        seq = g2p("Mary asked the time", LEXICO)
        self.assertEqual(ids_to_phonemes(seq.ids()), seq.phonemes)
        self.assertNotIn(PHONEME_TO_ID[PAD], seq.ids())


class TestBackendG2pEn(unittest.TestCase):
    """Backend padrão (g2p_en) e queda para o léxico"""

    def test_padrao_e_g2p_en(self):
        from services.config_service import DEFAULT_CONFIG
        self.assertEqual(DEFAULT_CONFIG["g2p"]["backend"], "g2p_en")

    def test_backend_desconhecido(self):
        with self.assertRaises(ValueError):
            g2p("Mary", {"backend": "festival"})

    def test_saida_do_g2p_en_sem_tonicidade(self):
        def modelo(texto):
            return ["M", "EH1", "R", "IY0", " ", "AE1", "S", "K", "T", " ", "."]

        with mock.patch("services.g2p_service.load_g2p_en", return_value=modelo):
            seq = g2p("Mary asked.")
        self.assertEqual(" ".join(seq.phonemes), "M EH R IY sp AE S K T")

    def test_queda_para_lexico_sem_g2p_en(self):
        with mock.patch("services.g2p_service.load_g2p_en", return_value=None):
            seq = g2p("Mary asked the time")
        self.assertEqual(seq.phonemes, g2p("Mary asked the time", LEXICO).phonemes)

    @unittest.skipIf(load_g2p_en() is None, "g2p_en ou dados do nltk indisponíveis")
    def test_golden_cmudict(self):
        with open(GOLDEN, "r", encoding="utf-8") as f:
            casos = json.load(f)
        for texto, esperado in casos.items():
            with self.subTest(texto=texto):
                self.assertEqual(" ".join(g2p(texto, {"backend": "g2p_en"}).phonemes), esperado)


class TestPhonemeSequence(unittest.TestCase):
    """Invariantes da sequência"""

    def test_vazia(self):
        with self.assertRaises(ValueError):
            PhonemeSequence([])

    def test_fora_do_inventario(self):
        with self.assertRaises(ValueError):
            PhonemeSequence(["M", "XX"])

    def test_inventario(self):
        self.assertEqual(PHONEME_INVENTORY[0], PAD)
        self.assertTrue(is_silence("sp"))
        self.assertFalse(is_silence("AA"))


if __name__ == '__main__':
    unittest.main(verbosity=2)
