"""
Lecture et écriture des reconstructions éparses COLMAP (binaire et texte).

Disposition binaire (little-endian) :
    cameras.bin  : u64 n ; puis i32 id, i32 modèle, u64 largeur, u64 hauteur, f64 params[]
    images.bin   : u64 n ; puis i32 id, f64 q[4], f64 t[3], i32 caméra, nom\\0,
                   u64 nb_obs, (f64 u, f64 v, i64 point3d_id)[nb_obs]
    points3D.bin : u64 n ; puis i64 id, f64 xyz[3], u8 rgb[3], f64 erreur,
                   u64 longueur, (i32 image_id, i32 indice_obs)[longueur]
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from focus_splat.errors import FormatError, IntegrityError
from focus_splat.io_utils.binary import ByteReader, pack
from focus_splat.io_utils.textfiles import atomic_write

logger = logging.getLogger(__name__)

# Sentinelle COLMAP pour une observation sans point 3D ; n'apparaît jamais
# hors de ce module (les accesseurs renvoient None)
_NONE_ID = -1

# Écart toléré à la norme unité avant renormalisation, puis avant rejet
QUAT_TOLERANCE = 1e-6
QUAT_RENORMALIZE_LIMIT = 1e-3

OBSERVATION_DTYPE = np.dtype([("xy", "<f8", (2,)), ("point3d_id", "<i8")])
TRACK_DTYPE = np.dtype([("image_id", "<i4"), ("point2d_idx", "<i4")])


class CameraModel(IntEnum):
    SIMPLE_PINHOLE = 0
    PINHOLE = 1
    SIMPLE_RADIAL = 2
    OPENCV = 4

    @property
    def arity(self) -> int:
        return CAMERA_MODEL_NUM_PARAMS[self]


CAMERA_MODEL_NUM_PARAMS = {
    CameraModel.SIMPLE_PINHOLE: 3,
    CameraModel.PINHOLE: 4,
    CameraModel.SIMPLE_RADIAL: 4,
    CameraModel.OPENCV: 8,
}


@dataclass(frozen=True)
class CameraIntrinsics:
    """Paramètres internes d'une caméra COLMAP"""
    camera_id: int
    model: CameraModel
    width: int
    height: int
    params: Tuple[float, ...]

    def focal_lengths(self) -> Tuple[float, float]:
        if self.model in (CameraModel.SIMPLE_PINHOLE, CameraModel.SIMPLE_RADIAL):
            return self.params[0], self.params[0]
        return self.params[0], self.params[1]

    def principal_point(self) -> Tuple[float, float]:
        if self.model in (CameraModel.SIMPLE_PINHOLE, CameraModel.SIMPLE_RADIAL):
            return self.params[1], self.params[2]
        return self.params[2], self.params[3]

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """
        Adapte les paramètres à une image rééchantillonnée

        Les focales et le point principal sont mis à l'échelle ; les
        coefficients de distorsion (sans dimension) sont conservés.
        """
        sx = width / self.width
        sy = height / self.height
        p = list(self.params)
        if self.model in (CameraModel.SIMPLE_PINHOLE, CameraModel.SIMPLE_RADIAL):
            p[0] *= sx
            p[1] *= sx
            p[2] *= sy
        else:
            p[0] *= sx
            p[1] *= sy
            p[2] *= sx
            p[3] *= sy
        return CameraIntrinsics(self.camera_id, self.model, width, height, tuple(p))


@dataclass(frozen=True)
class Observation:
    u: float
    v: float
    point3d_id: Optional[int]


@dataclass(frozen=True, eq=False)
class PosedImage:
    """
    Image posée : rotation (w, x, y, z) et translation monde -> caméra,
    plus ses observations 2D
    """
    image_id: int
    qvec: Tuple[float, float, float, float]
    tvec: Tuple[float, float, float]
    camera_id: int
    name: str
    xys: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    point3d_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        xys = np.array(self.xys, dtype=np.float64).reshape(-1, 2)
        ids = np.array(self.point3d_ids, dtype=np.int64).reshape(-1)
        if len(xys) != len(ids):
            raise ValueError("Nombre de coordonnées et d'identifiants différents")
        xys.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "xys", xys)
        object.__setattr__(self, "point3d_ids", ids)
        object.__setattr__(self, "qvec", tuple(float(q) for q in self.qvec))
        object.__setattr__(self, "tvec", tuple(float(t) for t in self.tvec))

    @property
    def num_observations(self) -> int:
        return len(self.point3d_ids)

    def observation(self, index: int) -> Observation:
        pid = int(self.point3d_ids[index])
        return Observation(float(self.xys[index, 0]), float(self.xys[index, 1]),
                           None if pid == _NONE_ID else pid)

    def observed_point_ids(self) -> np.ndarray:
        """Identifiants des points 3D observés (observations sans point exclues)"""
        return self.point3d_ids[self.point3d_ids != _NONE_ID]

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.qvec
        return Rotation.from_quat([x, y, z, w]).as_matrix()

    def center(self) -> np.ndarray:
        """Centre optique en coordonnées monde : -R^T t"""
        return -self.rotation_matrix().T @ np.asarray(self.tvec)

    def forward(self) -> np.ndarray:
        """Axe optique (troisième ligne de R) exprimé dans le repère monde"""
        return self.rotation_matrix()[2].copy()


@dataclass(frozen=True, eq=False)
class ScenePoint:
    point3d_id: int
    xyz: Tuple[float, float, float]
    rgb: Tuple[int, int, int]
    error: float
    image_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))
    point2d_idxs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))

    def __post_init__(self):
        image_ids = np.array(self.image_ids, dtype=np.int32).reshape(-1)
        idxs = np.array(self.point2d_idxs, dtype=np.int32).reshape(-1)
        if len(image_ids) != len(idxs):
            raise ValueError("Piste incohérente: longueurs différentes")
        image_ids.setflags(write=False)
        idxs.setflags(write=False)
        object.__setattr__(self, "image_ids", image_ids)
        object.__setattr__(self, "point2d_idxs", idxs)
        object.__setattr__(self, "xyz", tuple(float(c) for c in self.xyz))
        object.__setattr__(self, "rgb", tuple(int(c) for c in self.rgb))

    @property
    def track(self) -> List[Tuple[int, int]]:
        return list(zip(self.image_ids.tolist(), self.point2d_idxs.tolist()))


@dataclass(frozen=True, eq=False)
class SfmModel:
    """Reconstruction COLMAP en mémoire ; immuable après construction"""
    cameras: Dict[int, CameraIntrinsics] = field(default_factory=dict)
    images: Dict[int, PosedImage] = field(default_factory=dict)
    points: Dict[int, ScenePoint] = field(default_factory=dict)
    renormalized: FrozenSet[int] = frozenset()

    @cached_property
    def point_ids(self) -> np.ndarray:
        return np.array(sorted(self.points), dtype=np.int64)

    @cached_property
    def positions(self) -> np.ndarray:
        """Positions (N, 3) dans l'ordre de `point_ids`"""
        if not self.points:
            return np.zeros((0, 3))
        return np.array([self.points[i].xyz for i in self.point_ids.tolist()], dtype=np.float64)

    def intrinsics_of(self, image_id: int) -> CameraIntrinsics:
        return self.cameras[self.images[image_id].camera_id]

    def image_by_name(self) -> Dict[str, int]:
        return {img.name: img.image_id for img in self.images.values()}

    def equals(self, other: "SfmModel", rtol: float = 0.0) -> bool:
        """
        Compare deux modèles champ par champ

        Args:
            other: L'autre modèle
            rtol: Tolérance relative sur les réels (0 = égalité exacte)
        """
        def close(a, b) -> bool:
            return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                               rtol=rtol, atol=0.0) if rtol else np.array_equal(a, b)

        if set(self.cameras) != set(other.cameras) or set(self.images) != set(other.images) \
                or set(self.points) != set(other.points):
            return False
        for cid, cam in self.cameras.items():
            o = other.cameras[cid]
            if (cam.model, cam.width, cam.height) != (o.model, o.width, o.height) or not close(cam.params, o.params):
                return False
        for iid, img in self.images.items():
            o = other.images[iid]
            if (img.camera_id, img.name) != (o.camera_id, o.name):
                return False
            if not (close(img.qvec, o.qvec) and close(img.tvec, o.tvec) and close(img.xys, o.xys)):
                return False
            if not np.array_equal(img.point3d_ids, o.point3d_ids):
                return False
        for pid, pt in self.points.items():
            o = other.points[pid]
            if pt.rgb != o.rgb or not close(pt.xyz, o.xyz) or not close([pt.error], [o.error]):
                return False
            if not (np.array_equal(pt.image_ids, o.image_ids) and np.array_equal(pt.point2d_idxs, o.point2d_idxs)):
                return False
        return True


@dataclass(frozen=True)
class Violation:
    """Une violation d'intégrité ; `blocking` faux pour les simples signalements"""
    kind: str
    message: str
    ids: Tuple[int, ...] = ()
    blocking: bool = True

    def __str__(self) -> str:
        return self.message


def validate(model: SfmModel) -> List[Violation]:
    """
    Liste toutes les violations d'intégrité du modèle

    Args:
        model: Le modèle à vérifier

    Returns:
        List[Violation]: Vide si et seulement si le modèle est valide
    """
    out: List[Violation] = []

    for cid in sorted(model.cameras):
        cam = model.cameras[cid]
        if len(cam.params) != cam.model.arity:
            out.append(Violation("camera", f"caméra {cid}: {len(cam.params)} paramètres, "
                                 f"{cam.model.arity} attendus pour {cam.model.name}", (cid,)))
        if cam.width <= 0 or cam.height <= 0:
            out.append(Violation("camera", f"caméra {cid}: dimensions invalides {cam.width}x{cam.height}", (cid,)))
        if len(cam.params) == cam.model.arity and min(cam.focal_lengths()) <= 0:
            out.append(Violation("camera", f"caméra {cid}: focale non positive", (cid,)))

    track_entries = set()
    for pid in sorted(model.points):
        pt = model.points[pid]
        for image_id, idx in pt.track:
            track_entries.add((pid, image_id, idx))

    for iid in sorted(model.images):
        img = model.images[iid]
        if img.camera_id not in model.cameras:
            out.append(Violation("dangling_camera",
                                 f"image {iid}: caméra {img.camera_id} inexistante", (iid, img.camera_id)))
        norm = math.sqrt(sum(q * q for q in img.qvec))
        if abs(norm - 1.0) > QUAT_TOLERANCE:
            out.append(Violation("quaternion", f"image {iid}: quaternion de norme {norm:.9g}", (iid,)))
        if iid in model.renormalized:
            out.append(Violation("renormalized", f"image {iid}: quaternion renormalisé à la lecture",
                                 (iid,), blocking=False))
        for idx, pid in enumerate(img.point3d_ids.tolist()):
            if pid == _NONE_ID:
                continue
            if pid not in model.points:
                out.append(Violation("dangling_point",
                                     f"image {iid}, observation {idx}: point {pid} inexistant", (iid, idx, pid)))
            elif (pid, iid, idx) not in track_entries:
                out.append(Violation("mismatch",
                                     f"image {iid}, observation {idx}: absente de la piste du point {pid}",
                                     (pid, iid, idx)))

    for pid in sorted(model.points):
        pt = model.points[pid]
        for image_id, idx in pt.track:
            img = model.images.get(image_id)
            if img is None:
                out.append(Violation("dangling_image",
                                     f"point {pid}: image {image_id} inexistante", (pid, image_id)))
            elif not 0 <= idx < img.num_observations:
                out.append(Violation("mismatch",
                                     f"point {pid}: observation {idx} hors limites dans l'image {image_id}",
                                     (pid, image_id, idx)))
            elif int(img.point3d_ids[idx]) != pid:
                stored = int(img.point3d_ids[idx])
                stored_txt = "NONE" if stored == _NONE_ID else str(stored)
                out.append(Violation("mismatch",
                                     f"point {pid}: image {image_id}, observation {idx} référence {stored_txt}",
                                     (pid, image_id, idx)))
    return out


def blocking_violations(model: SfmModel) -> List[Violation]:
    return [v for v in validate(model) if v.blocking]


def _check_quaternion(image_id: int, qvec: Tuple[float, ...], renormalized: set) -> Tuple[float, ...]:
    norm = math.sqrt(sum(q * q for q in qvec))
    deviation = abs(norm - 1.0)
    if deviation > QUAT_RENORMALIZE_LIMIT:
        raise FormatError(f"image {image_id}: quaternion non unitaire (norme {norm:.9g})")
    if deviation > QUAT_TOLERANCE:
        logger.warning(f"image {image_id}: quaternion renormalisé (norme {norm:.9g})")
        renormalized.add(image_id)
        return tuple(q / norm for q in qvec)
    return qvec


def _model_from_id(model_id: int, label: str) -> CameraModel:
    try:
        return CameraModel(model_id)
    except ValueError:
        raise FormatError(f"{label}: modèle de caméra inconnu {model_id}") from None


def _model_from_name(name: str, label: str) -> CameraModel:
    try:
        return CameraModel[name]
    except KeyError:
        raise FormatError(f"{label}: modèle de caméra inconnu {name}") from None


def _store(table: dict, key: int, value, label: str) -> None:
    if key in table:
        raise FormatError(f"{label}: identifiant dupliqué {key}")
    table[key] = value


def read_cameras_binary(data: bytes) -> Dict[int, CameraIntrinsics]:
    reader = ByteReader(data, "cameras")
    cameras = {}
    for _ in range(reader.u64()):
        camera_id, model_id, width, height = reader.unpack("iiQQ")
        model = _model_from_id(model_id, "cameras")
        params = reader.unpack(f"{model.arity}d")
        _store(cameras, camera_id, CameraIntrinsics(camera_id, model, width, height, params), "cameras")
    reader.expect_end()
    return cameras


def read_images_binary(data: bytes, renormalized: set) -> Dict[int, PosedImage]:
    reader = ByteReader(data, "images")
    images = {}
    for _ in range(reader.u64()):
        values = reader.unpack("i4d3di")
        image_id = values[0]
        qvec = _check_quaternion(image_id, values[1:5], renormalized)
        tvec = values[5:8]
        camera_id = values[8]
        name = reader.cstring().decode("utf-8")
        obs = reader.array(OBSERVATION_DTYPE, reader.u64())
        _store(images, image_id,
               PosedImage(image_id, qvec, tvec, camera_id, name, obs["xy"], obs["point3d_id"]), "images")
    reader.expect_end()
    return images


def read_points_binary(data: bytes) -> Dict[int, ScenePoint]:
    reader = ByteReader(data, "points3D")
    points = {}
    for _ in range(reader.u64()):
        values = reader.unpack("q3d3Bd")
        point_id = values[0]
        track = reader.array(TRACK_DTYPE, reader.u64())
        _store(points, point_id,
               ScenePoint(point_id, values[1:4], values[4:7], values[7],
                          track["image_id"], track["point2d_idx"]), "points3D")
    reader.expect_end()
    return points


def _data_lines(text: str):
    for number, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield number, line


def _parse_numbers(tokens, conv, label: str, number: int):
    try:
        return [conv(t) for t in tokens]
    except ValueError:
        raise FormatError(f"{label}: ligne {number}: valeur non numérique") from None


def read_cameras_text(text: str) -> Dict[int, CameraIntrinsics]:
    cameras = {}
    for number, line in _data_lines(text):
        elems = line.split()
        if len(elems) < 4:
            raise FormatError(f"cameras: ligne {number}: champs manquants")
        model = _model_from_name(elems[1], "cameras")
        camera_id, width, height = _parse_numbers([elems[0], elems[2], elems[3]], int, "cameras", number)
        params = tuple(_parse_numbers(elems[4:], float, "cameras", number))
        if len(params) != model.arity:
            raise FormatError(f"cameras: ligne {number}: {len(params)} paramètres pour {model.name}")
        _store(cameras, camera_id, CameraIntrinsics(camera_id, model, width, height, params), "cameras")
    return cameras


def read_images_text(text: str, renormalized: set) -> Dict[int, PosedImage]:
    images = {}
    lines = text.split("\n")
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if not line or line.startswith("#"):
            i += 1
            continue
        elems = line.split()
        if len(elems) != 10:
            raise FormatError(f"images: ligne {i + 1}: 10 champs attendus, {len(elems)} trouvés")
        image_id, camera_id = _parse_numbers([elems[0], elems[8]], int, "images", i + 1)
        reals = _parse_numbers(elems[1:8], float, "images", i + 1)
        qvec = _check_quaternion(image_id, tuple(reals[:4]), renormalized)
        obs_tokens = lines[i + 1].split() if i + 1 < len(lines) else []
        if len(obs_tokens) % 3:
            raise FormatError(f"images: ligne {i + 2}: observations incomplètes")
        xs = _parse_numbers(obs_tokens[0::3], float, "images", i + 2)
        ys = _parse_numbers(obs_tokens[1::3], float, "images", i + 2)
        ids = _parse_numbers(obs_tokens[2::3], int, "images", i + 2)
        _store(images, image_id,
               PosedImage(image_id, qvec, tuple(reals[4:7]), camera_id, elems[9],
                          np.column_stack([xs, ys]) if xs else np.zeros((0, 2)), ids), "images")
        i += 2
    return images


def read_points_text(text: str) -> Dict[int, ScenePoint]:
    points = {}
    for number, line in _data_lines(text):
        elems = line.split()
        if len(elems) < 8 or (len(elems) - 8) % 2:
            raise FormatError(f"points3D: ligne {number}: nombre de champs invalide")
        point_id = _parse_numbers([elems[0]], int, "points3D", number)[0]
        xyz = _parse_numbers(elems[1:4], float, "points3D", number)
        rgb = _parse_numbers(elems[4:7], int, "points3D", number)
        error = _parse_numbers([elems[7]], float, "points3D", number)[0]
        track = _parse_numbers(elems[8:], int, "points3D", number)
        _store(points, point_id,
               ScenePoint(point_id, xyz, rgb, error, track[0::2], track[1::2]), "points3D")
    return points


def parse_model(camera_bytes: bytes, image_bytes: bytes, point_bytes: bytes,
                format: str = "binary", workers: int = 1) -> SfmModel:
    """
    Construit un SfmModel à partir des trois flux COLMAP

    Args:
        camera_bytes, image_bytes, point_bytes: Le contenu des trois fichiers
        format: "binary" ou "text"
        workers: Si > 1, les trois flux sont décodés en parallèle

    Returns:
        SfmModel: Un modèle qui passe `validate`

    Raises:
        FormatError: Flux tronqué, déchets en fin, modèle de caméra inconnu,
            quaternion trop éloigné de l'unité
        IntegrityError: Références pendantes ou pistes incohérentes
    """
    renormalized: set = set()
    if format == "binary":
        jobs = (lambda: read_cameras_binary(camera_bytes),
                lambda: read_images_binary(image_bytes, renormalized),
                lambda: read_points_binary(point_bytes))
    elif format == "text":
        decode = lambda b: b.decode("utf-8") if isinstance(b, (bytes, bytearray)) else b
        jobs = (lambda: read_cameras_text(decode(camera_bytes)),
                lambda: read_images_text(decode(image_bytes), renormalized),
                lambda: read_points_text(decode(point_bytes)))
    else:
        raise ValueError(f"Format inconnu: {format}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=3) as pool:
            futures = [pool.submit(job) for job in jobs]
            cameras, images, points = (f.result() for f in futures)
    else:
        cameras, images, points = (job() for job in jobs)

    model = SfmModel(cameras, images, points, frozenset(renormalized))
    errors = blocking_violations(model)
    if errors:
        raise IntegrityError(errors)
    logger.info(f"Modèle lu: {len(cameras)} caméras, {len(images)} images, {len(points)} points")
    return model


def write_cameras_binary(cameras: Dict[int, CameraIntrinsics]) -> bytes:
    chunks = [pack("Q", len(cameras))]
    for cid in sorted(cameras):
        cam = cameras[cid]
        chunks.append(pack("iiQQ", cid, int(cam.model), cam.width, cam.height))
        chunks.append(pack(f"{len(cam.params)}d", *cam.params))
    return b"".join(chunks)


def write_images_binary(images: Dict[int, PosedImage]) -> bytes:
    chunks = [pack("Q", len(images))]
    for iid in sorted(images):
        img = images[iid]
        chunks.append(pack("i4d3di", iid, *img.qvec, *img.tvec, img.camera_id))
        chunks.append(img.name.encode("utf-8") + b"\x00")
        obs = np.empty(img.num_observations, dtype=OBSERVATION_DTYPE)
        obs["xy"] = img.xys
        obs["point3d_id"] = img.point3d_ids
        chunks.append(pack("Q", len(obs)))
        chunks.append(obs.tobytes())
    return b"".join(chunks)


def write_points_binary(points: Dict[int, ScenePoint]) -> bytes:
    chunks = [pack("Q", len(points))]
    for pid in sorted(points):
        pt = points[pid]
        chunks.append(pack("q3d3Bd", pid, *pt.xyz, *pt.rgb, pt.error))
        track = np.empty(len(pt.image_ids), dtype=TRACK_DTYPE)
        track["image_id"] = pt.image_ids
        track["point2d_idx"] = pt.point2d_idxs
        chunks.append(pack("Q", len(track)))
        chunks.append(track.tobytes())
    return b"".join(chunks)


def _real(x: float) -> str:
    # repr est la plus courte écriture qui relit exactement le même double
    return repr(float(x))


def write_cameras_text(cameras: Dict[int, CameraIntrinsics]) -> str:
    lines = ["# Camera list with one line of data per camera:",
             "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
             f"# Number of cameras: {len(cameras)}"]
    for cid in sorted(cameras):
        cam = cameras[cid]
        lines.append(" ".join([str(cid), cam.model.name, str(cam.width), str(cam.height)]
                              + [_real(p) for p in cam.params]))
    return "\n".join(lines) + "\n"


def write_images_text(images: Dict[int, PosedImage]) -> str:
    total_obs = sum(img.num_observations for img in images.values())
    lines = ["# Image list with two lines of data per image:",
             "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
             "#   POINTS2D[] as (X, Y, POINT3D_ID)",
             f"# Number of images: {len(images)}, mean observations per image: "
             f"{total_obs / len(images) if images else 0:.6g}"]
    for iid in sorted(images):
        img = images[iid]
        lines.append(" ".join([str(iid)] + [_real(q) for q in img.qvec] + [_real(t) for t in img.tvec]
                              + [str(img.camera_id), img.name]))
        lines.append(" ".join(f"{_real(x)} {_real(y)} {pid}"
                              for (x, y), pid in zip(img.xys.tolist(), img.point3d_ids.tolist())))
    return "\n".join(lines) + "\n"


def write_points_text(points: Dict[int, ScenePoint]) -> str:
    lines = ["# 3D point list with one line of data per point:",
             "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)",
             f"# Number of points: {len(points)}"]
    for pid in sorted(points):
        pt = points[pid]
        track = " ".join(f"{i} {j}" for i, j in pt.track)
        lines.append(" ".join([str(pid)] + [_real(c) for c in pt.xyz] + [str(c) for c in pt.rgb]
                              + [_real(pt.error)] + ([track] if track else [])))
    return "\n".join(lines) + "\n"


def serialize_model(model: SfmModel, format: str = "binary") -> Tuple[bytes, bytes, bytes]:
    """
    Sérialise un modèle, entrées triées par identifiant croissant

    Args:
        model: Le modèle (doit passer `validate`)
        format: "binary" ou "text"

    Returns:
        Tuple[bytes, bytes, bytes]: (cameras, images, points3D)

    Raises:
        IntegrityError: Si le modèle ne passe pas `validate`
    """
    errors = blocking_violations(model)
    if errors:
        raise IntegrityError(errors)
    if format == "binary":
        return (write_cameras_binary(model.cameras),
                write_images_binary(model.images),
                write_points_binary(model.points))
    if format == "text":
        return (write_cameras_text(model.cameras).encode("utf-8"),
                write_images_text(model.images).encode("utf-8"),
                write_points_text(model.points).encode("utf-8"))
    raise ValueError(f"Format inconnu: {format}")


_FILE_NAMES = ("cameras", "images", "points3D")
_EXTENSIONS = {"binary": ".bin", "text": ".txt"}


def detect_format(path: Union[str, Path]) -> str:
    path = Path(path)
    for fmt, ext in _EXTENSIONS.items():
        if all((path / f"{name}{ext}").is_file() for name in _FILE_NAMES):
            return fmt
    raise FormatError(f"Aucun modèle COLMAP complet dans {path}")


def read_model_dir(path: Union[str, Path], format: str = "auto", workers: int = 1) -> SfmModel:
    """Lit cameras/images/points3D depuis un dossier (.bin ou .txt)"""
    path = Path(path)
    if format == "auto":
        format = detect_format(path)
    ext = _EXTENSIONS[format]
    streams = [(path / f"{name}{ext}").read_bytes() for name in _FILE_NAMES]
    return parse_model(*streams, format=format, workers=workers)


def write_model_dir(model: SfmModel, path: Union[str, Path], format: str = "binary") -> None:
    path = Path(path)
    ext = _EXTENSIONS[format]
    for name, data in zip(_FILE_NAMES, serialize_model(model, format)):
        atomic_write(path / f"{name}{ext}", data)
    logger.info(f"Modèle écrit dans {path} ({format})")
