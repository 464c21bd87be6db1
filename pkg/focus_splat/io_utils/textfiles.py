import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

from focus_splat.errors import ConfigError

PathLike = Union[str, Path]


def parse_key_values(text: str) -> List[Tuple[int, str, str]]:
    """
    Découpe un texte `clé: valeur` en triplets (ligne, clé, valeur)

    Les lignes vides et celles commençant par '#' sont ignorées.

    Args:
        text: Le contenu du fichier

    Returns:
        List[Tuple[int, str, str]]: Les entrées dans l'ordre du fichier

    Raises:
        ConfigError: Si une ligne n'a pas de séparateur ou si une clé est dupliquée
    """
    entries = []
    seen = set()
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ConfigError(f"séparateur ':' manquant dans {line!r}", number)
        key = key.strip()
        if not key:
            raise ConfigError("clé vide", number)
        if key in seen:
            raise ConfigError(f"clé dupliquée {key!r}", number)
        seen.add(key)
        entries.append((number, key, value.strip()))
    return entries


def format_real(value: float) -> str:
    """Réel avec 9 chiffres significatifs"""
    return format(float(value), ".9g")


def format_key_values(pairs: Iterable[Tuple[str, object]]) -> str:
    lines = []
    for key, value in pairs:
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = format_real(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def parse_bool(value: str, line: int = None) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ConfigError(f"booléen invalide {value!r}", line)


def atomic_write(path: PathLike, data) -> None:
    """
    Écrit un fichier de manière atomique (fichier temporaire puis renommage)

    Args:
        path: Le chemin de destination
        data: Le contenu : texte (encodé en UTF-8, fins de ligne LF), octets,
            liste de tampons écrits à la suite, ou fonction recevant le fichier ouvert
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            if callable(data):
                data(handle)
            else:
                for chunk in (data if isinstance(data, (list, tuple)) else [data]):
                    handle.write(chunk.encode("utf-8") if isinstance(chunk, str) else chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_name_list(path: PathLike, names: Sequence[str]) -> None:
    """Une entrée par ligne, dans l'ordre donné"""
    atomic_write(path, "".join(f"{name}\n" for name in names))


def read_name_list(path: PathLike) -> List[str]:
    with open(path, "r", encoding="utf-8") as handle:
        return [line.strip() for line in handle if line.strip()]


def parse_vector(value: str, size: int = 3, line: int = None) -> Tuple[float, ...]:
    """Réels séparés par des espaces ou des virgules"""
    tokens = value.replace(",", " ").split()
    try:
        numbers = tuple(float(t) for t in tokens)
    except ValueError:
        raise ConfigError(f"vecteur invalide {value!r}", line) from None
    if len(numbers) != size:
        raise ConfigError(f"{size} composantes attendues, {len(numbers)} lues dans {value!r}", line)
    return numbers
