"""
Sélection de vues centrée objet, partition des jeux d'entraînement et
composition de modèles Gaussian Splatting à partir de données SfM.
"""

__version__ = "0.3.0"
