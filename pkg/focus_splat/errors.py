from typing import Iterable, Optional, Sequence


class FormatError(ValueError):
    """Flux binaire ou texte mal formé (tronqué, déchets en fin, type inconnu)"""


class IntegrityError(ValueError):
    """Références pendantes ou incohérences piste/observation dans un modèle SfM"""

    def __init__(self, violations: Sequence):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"Modèle incohérent ({len(self.violations)} violation(s)): {lines}")


class DegenerateRoiError(ValueError):
    """ROI dont un normaliseur de score est nul"""


class GpFactorizationError(ValueError):
    """Échec de la factorisation de Cholesky malgré l'escalade du jitter"""

    def __init__(self, message: str, condition: Optional[float] = None):
        self.condition = condition
        super().__init__(message)


class OverlapError(ValueError):
    """Boîtes de ROI qui se chevauchent sous la politique `reject`"""


class ConfigError(ValueError):
    """Fichier de configuration ou recette invalide"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"ligne {line}: {message}"
        super().__init__(message)


def format_errors(errors: Iterable[object]) -> list:
    """Formate des exceptions ou violations en lignes `error:` lisibles par une machine"""
    return [f"error: {e}" for e in errors]
