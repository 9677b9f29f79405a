"""
Vocoders: conversão de mel-espectrograma log em forma de onda.
"""
