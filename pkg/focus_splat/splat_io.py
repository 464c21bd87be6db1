"""
Lecture et écriture des fichiers PLY de points de contrôle 3DGS.

Schéma canonique (float32, binary_little_endian 1.0) :
    x, y, z, nx, ny, nz, f_dc_0..2, f_rest_0..(3*((d+1)^2-1)-1), opacity,
    scale_0..2, rot_0..3
"""
import logging
import re
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from plyfile import PlyData, PlyElement, PlyListProperty, PlyParseError

from focus_splat.errors import FormatError
from focus_splat.io_utils.textfiles import atomic_write

logger = logging.getLogger(__name__)

# Nombre de coefficients f_rest_* pour chaque degré SH émis par 3DGS
REST_COUNT_TO_DEGREE = {0: 0, 9: 1, 24: 2, 45: 3}
DEGREE_TO_REST_COUNT = {d: n for n, d in REST_COUNT_TO_DEGREE.items()}

_REST_NAME = re.compile(r"^f_rest_(\d+)$")
# Taille maximale lue pour trouver la fin de l'en-tête
_HEADER_SCAN = 1 << 16
# Erreurs levées par plyfile sur un en-tête ou une charge utile invalide
_PLY_ERRORS = (PlyParseError, ValueError, EOFError)


def canonical_properties(sh_degree: int) -> List[str]:
    if sh_degree not in DEGREE_TO_REST_COUNT:
        raise ValueError(f"Degré SH invalide: {sh_degree}")
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(DEGREE_TO_REST_COUNT[sh_degree])]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def splat_dtype(sh_degree: int) -> np.dtype:
    return np.dtype([(name, "<f4") for name in canonical_properties(sh_degree)])


@dataclass(frozen=True)
class SplatRecord:
    """Une gaussienne 3D telle que stockée dans un point de contrôle"""
    position: np.ndarray
    normal: np.ndarray
    sh_dc: np.ndarray
    sh_rest: np.ndarray
    opacity: float
    log_scale: np.ndarray
    rotation: np.ndarray

    def components(self) -> np.ndarray:
        return np.concatenate([
            np.asarray(self.position, dtype=np.float32), np.asarray(self.normal, dtype=np.float32),
            np.asarray(self.sh_dc, dtype=np.float32), np.asarray(self.sh_rest, dtype=np.float32).reshape(-1),
            np.asarray([self.opacity], dtype=np.float32), np.asarray(self.log_scale, dtype=np.float32),
            np.asarray(self.rotation, dtype=np.float32),
        ])


class SplatSet:
    """
    Ensemble ordonné de gaussiennes, stocké comme un tableau structuré
    float32 dans l'ordre canonique des propriétés. Immuable.
    """

    def __init__(self, data: np.ndarray, sh_degree: int):
        if data.dtype != splat_dtype(sh_degree):
            raise ValueError("Le tableau ne suit pas le schéma canonique du degré SH")
        if data.flags.writeable:
            data = data.view()
            data.setflags(write=False)
        self.data = data
        self.sh_degree = sh_degree

    @classmethod
    def empty(cls, sh_degree: int = 3) -> "SplatSet":
        return cls(np.zeros(0, dtype=splat_dtype(sh_degree)), sh_degree)

    @classmethod
    def from_components(cls, components: np.ndarray, sh_degree: int) -> "SplatSet":
        """Construit un ensemble depuis une matrice (N, nb_propriétés)"""
        dtype = splat_dtype(sh_degree)
        flat = np.ascontiguousarray(components, dtype=np.float32).reshape(-1, len(dtype.names))
        return cls(flat.view(dtype).reshape(-1).copy(), sh_degree)

    @classmethod
    def from_records(cls, records: Sequence[SplatRecord], sh_degree: int) -> "SplatSet":
        width = len(canonical_properties(sh_degree))
        if not records:
            return cls.empty(sh_degree)
        rows = [r.components() for r in records]
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"Enregistrement {i}: {len(row)} composantes, {width} attendues")
        return cls.from_components(np.stack(rows), sh_degree)

    @staticmethod
    def concatenate(parts: Sequence["SplatSet"], sh_degree: int) -> "SplatSet":
        if not parts:
            return SplatSet.empty(sh_degree)
        return SplatSet(np.concatenate([p.data for p in parts]), sh_degree)

    def __len__(self) -> int:
        return len(self.data)

    def components(self) -> np.ndarray:
        """Vue (N, nb_propriétés) float32 sur les données"""
        if len(self.data) == 0:
            return np.zeros((0, len(self.data.dtype.names)), dtype=np.float32)
        return self.data.view(np.float32).reshape(len(self.data), len(self.data.dtype.names))

    def positions(self) -> np.ndarray:
        """Centres (N, 3) élargis en float64 (conversion exacte)"""
        return self.components()[:, :3].astype(np.float64)

    def subset(self, mask: np.ndarray) -> "SplatSet":
        return SplatSet(self.data[mask], self.sh_degree)

    def record(self, index: int) -> SplatRecord:
        row = self.components()[index]
        rest = DEGREE_TO_REST_COUNT[self.sh_degree]
        return SplatRecord(
            position=row[0:3].copy(), normal=row[3:6].copy(), sh_dc=row[6:9].copy(),
            sh_rest=row[9:9 + rest].copy(), opacity=float(row[9 + rest]),
            log_scale=row[10 + rest:13 + rest].copy(), rotation=row[13 + rest:17 + rest].copy(),
        )

    def check_finite(self) -> None:
        """
        Raises:
            ValueError: Au premier enregistrement contenant NaN ou Inf
        """
        finite = np.isfinite(self.components())
        bad_rows = np.flatnonzero(~finite.all(axis=1))
        if bad_rows.size:
            index = int(bad_rows[0])
            column = int(np.flatnonzero(~finite[index])[0])
            name = self.data.dtype.names[column]
            raise ValueError(f"Enregistrement {index}: composante non finie ({name})")


def _header_length(prefix: bytes) -> int:
    marker = prefix.find(b"end_header")
    newline = prefix.find(b"\n", marker) if marker >= 0 else -1
    if newline < 0:
        raise FormatError("Fin d'en-tête PLY introuvable")
    return newline + 1


def _infer_degree(names: List[str]) -> int:
    if len(set(names)) != len(names):
        raise FormatError("Propriété dupliquée dans l'en-tête")
    rest = [n for n in names if _REST_NAME.match(n)]
    if len(rest) not in REST_COUNT_TO_DEGREE:
        raise FormatError(f"Nombre de coefficients f_rest invalide: {len(rest)}")
    degree = REST_COUNT_TO_DEGREE[len(rest)]
    expected = canonical_properties(degree)
    missing = [n for n in expected if n not in names]
    if missing:
        raise FormatError(f"Propriété manquante: {', '.join(missing)}")
    extra = [n for n in names if n not in expected]
    if extra:
        raise FormatError(f"Propriété inconnue: {', '.join(extra)}")
    return degree


def _vertex_element(plydata: PlyData) -> PlyElement:
    if plydata.text or plydata.byte_order != "<":
        kind = "ascii" if plydata.text else "binary_big_endian"
        raise FormatError(f"Format PLY non supporté: {kind} (seul binary_little_endian l'est)")
    names = [el.name for el in plydata.elements]
    if names != ["vertex"]:
        raise FormatError(f"Éléments PLY non supportés: {', '.join(names) or 'aucun'}")
    vertex = plydata["vertex"]
    for prop in vertex.properties:
        if isinstance(prop, PlyListProperty) or np.dtype(prop.val_dtype) != np.float32:
            raise FormatError(f"Propriété non float32: {prop.name}")
    return vertex


def _to_splats(plydata: PlyData, header_length: int, total_size: int) -> SplatSet:
    vertex = _vertex_element(plydata)
    raw = vertex.data
    degree = _infer_degree(list(raw.dtype.names))
    expected = vertex.count * raw.dtype.itemsize
    payload = total_size - header_length
    if payload < expected:
        raise FormatError(f"Charge utile tronquée: {payload} octets pour {vertex.count} gaussiennes")
    if payload > expected:
        raise FormatError(f"{payload - expected} octets en trop après les gaussiennes")

    canonical = splat_dtype(degree)
    if vertex.count == 0:
        return SplatSet.empty(degree)
    if raw.dtype == canonical:
        out = raw
    else:
        logger.info("Ordre des propriétés non canonique: réordonnancement")
        out = np.empty(vertex.count, dtype=canonical)
        for name in canonical.names:
            out[name] = raw[name]
    logger.info(f"{vertex.count} gaussiennes lues (degré SH {degree})")
    return SplatSet(out, degree)


def read_splats(data: Union[bytes, bytearray, memoryview]) -> SplatSet:
    """
    Décode un PLY 3DGS binaire

    Un ordre de propriétés permuté est accepté et réordonné (copie).

    Args:
        data: Le contenu du fichier

    Returns:
        SplatSet: Les gaussiennes lues

    Raises:
        FormatError: En-tête invalide, PLY ascii, propriété manquante ou
            inconnue, charge utile tronquée ou trop longue
    """
    data = bytes(data)
    header_length = _header_length(data[:_HEADER_SCAN])
    try:
        plydata = PlyData.read(BytesIO(data))
    except _PLY_ERRORS as exc:
        raise FormatError(f"PLY invalide ou charge utile tronquée: {exc}") from None
    return _to_splats(plydata, header_length, len(data))


def read_splats_file(path: Union[str, Path]) -> SplatSet:
    """Lit un point de contrôle ; le fichier binaire est projeté en mémoire sans copie"""
    path = Path(path)
    with open(path, "rb") as handle:
        header_length = _header_length(handle.read(_HEADER_SCAN))
    try:
        plydata = PlyData.read(str(path))
    except _PLY_ERRORS as exc:
        raise FormatError(f"{path.name}: PLY invalide ou charge utile tronquée: {exc}") from None
    return _to_splats(plydata, header_length, path.stat().st_size)


def _ply_data(splats: SplatSet) -> PlyData:
    splats.check_finite()
    return PlyData([PlyElement.describe(splats.data, "vertex")], byte_order="<")


def write_splats(splats: SplatSet) -> bytes:
    """
    Encode un ensemble en PLY binaire canonique

    Raises:
        ValueError: Si une composante n'est pas finie (indice de l'enregistrement cité)
    """
    buffer = BytesIO()
    _ply_data(splats).write(buffer)
    return buffer.getvalue()


def write_splats_file(path: Union[str, Path], splats: SplatSet) -> None:
    atomic_write(path, _ply_data(splats).write)
    logger.info(f"{len(splats)} gaussiennes écrites dans {path}")
