"""
Módulos torch do sintetizador.
"""
