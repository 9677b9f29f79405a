"""
Embedders de pares de sentenças (contexto entre elocuções).
"""
