"""
Scènes synthétiques déterministes : modèle SfM (points sur une sphère
inscrite dans la boîte de la ROI, fond uniforme, caméras en anneau ou en
hémisphère visant la boîte) et ensembles de gaussiennes de comptes connus.

Chaque classe d'entités tire ses valeurs d'un flux indépendant dérivé de la
graine (voir `streams`), si bien que changer le nombre de caméras ne change
pas les points.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from focus_splat import streams
from focus_splat.colmap_io import CameraIntrinsics, CameraModel, PosedImage, ScenePoint, SfmModel
from focus_splat.errors import ConfigError
from focus_splat.geometry import NEAR_PLANE, Aabb
from focus_splat.io_utils.textfiles import parse_key_values, parse_vector
from focus_splat.splat_io import SplatSet, canonical_properties, splat_dtype

logger = logging.getLogger(__name__)

LAYOUTS = ("ring", "hemisphere")
# Rayon de la sphère relatif à la plus petite demi-arête de la boîte
SPHERE_FILL = 0.95
# Hauteur des caméras de l'anneau, relative à leur distance
RING_ELEVATION_JITTER = 0.15
BACKGROUND_SPREAD = 3.0
# Marge relative qui garde les gaussiennes loin du bord après arrondi float32
SPLAT_MARGIN = 1e-3
UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class SceneRecipe:
    seed: int = 0
    n_points_in_roi: int = 100
    n_points_background: int = 0
    box: Aabb = Aabb((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    n_cameras: int = 8
    layout: str = "ring"
    visibility_angle: float = 90.0
    dropout: float = 0.0
    camera_distance: float = 6.0
    image_width: int = 640
    image_height: int = 480
    focal: Optional[float] = None
    splats_in: int = 0
    splats_out: int = 0
    sh_degree: int = 0

    def __post_init__(self):
        for name in ("n_points_in_roi", "n_points_background", "n_cameras", "splats_in", "splats_out"):
            if getattr(self, name) < 0:
                raise ValueError(f"Recette: {name} négatif")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"Recette: taux d'omission {self.dropout} hors de [0, 1[")
        if self.layout not in LAYOUTS:
            raise ValueError(f"Recette: disposition inconnue {self.layout!r}")
        if not 0.0 < self.visibility_angle <= 180.0:
            raise ValueError(f"Recette: angle de visibilité {self.visibility_angle} hors de ]0, 180]")
        if self.camera_distance <= 0.0:
            raise ValueError("Recette: distance des caméras non positive")

    def intrinsics(self) -> CameraIntrinsics:
        focal = self.focal
        if focal is None:
            # La boîte occupe environ la moitié du plus petit côté de l'image
            radius = float(np.linalg.norm(self.box.extent)) / 2.0
            focal = 0.25 * min(self.image_width, self.image_height) * self.camera_distance / radius
        return CameraIntrinsics(1, CameraModel.PINHOLE, self.image_width, self.image_height,
                                (focal, focal, self.image_width / 2.0, self.image_height / 2.0))


_RECIPE_KEYS = {
    "seed": ("seed", int),
    "n_points_in_roi": ("n_points_in_roi", int),
    "n_points_background": ("n_points_background", int),
    "n_cameras": ("n_cameras", int),
    "layout": ("layout", str),
    "visibility_angle": ("visibility_angle", float),
    "dropout": ("dropout", float),
    "camera_distance": ("camera_distance", float),
    "image_width": ("image_width", int),
    "image_height": ("image_height", int),
    "focal": ("focal", float),
    "splats_in": ("splats_in", int),
    "splats_out": ("splats_out", int),
    "sh_degree": ("sh_degree", int),
}


def load_recipe(text: str) -> SceneRecipe:
    """
    Lit une recette `clé: valeur` ; la boîte est donnée par `roi_min` et
    `roi_max` (trois réels)

    Raises:
        ConfigError: Clé inconnue, valeur invalide ou recette incohérente
    """
    values: Dict[str, object] = {}
    corners: Dict[str, Tuple[float, ...]] = {}
    for line, key, value in parse_key_values(text):
        if key in ("roi_min", "roi_max"):
            corners[key] = parse_vector(value, 3, line)
        elif key in _RECIPE_KEYS:
            name, conv = _RECIPE_KEYS[key]
            try:
                values[name] = conv(value)
            except ValueError:
                raise ConfigError(f"valeur invalide pour {key}: {value!r}", line) from None
        else:
            raise ConfigError(f"clé de recette inconnue {key!r}", line)
    try:
        if corners:
            default = SceneRecipe.box
            values["box"] = Aabb(corners.get("roi_min", default.min), corners.get("roi_max", default.max))
        return SceneRecipe(**values)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _unit_vectors(rng: np.random.Generator, count: int) -> np.ndarray:
    v = rng.standard_normal((count, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return v / norms


def _outside_box(rng: np.random.Generator, box: Aabb, count: int, margin: float = 0.0) -> np.ndarray:
    # Tirage uniforme dans une région élargie, par rejet des points de la boîte
    lo = box.center - BACKGROUND_SPREAD * box.extent / 2.0
    hi = box.center + BACKGROUND_SPREAD * box.extent / 2.0
    inflated = (np.asarray(box.min) - margin * box.extent, np.asarray(box.max) + margin * box.extent)
    out = np.zeros((0, 3))
    while len(out) < count:
        batch = rng.uniform(lo, hi, size=(2 * (count - len(out)) + 16, 3))
        keep = ~np.all((batch >= inflated[0]) & (batch <= inflated[1]), axis=1)
        out = np.concatenate([out, batch[keep]])
    return out[:count]


def look_at(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rotation monde -> caméra : axe z vers la cible, axe y vers le bas"""
    z = target - position
    z = z / np.linalg.norm(z)
    down = -UP if abs(float(np.dot(z, UP))) < 0.999 else np.array([0.0, 1.0, 0.0])
    y = down - np.dot(down, z) * z
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return np.stack([x, y, z])


def _camera_positions(recipe: SceneRecipe, rng: np.random.Generator) -> np.ndarray:
    n, d, center = recipe.n_cameras, recipe.camera_distance, recipe.box.center
    if recipe.layout == "ring":
        angles = 2.0 * np.pi * (np.arange(n) + rng.uniform()) / n
        heights = rng.uniform(-RING_ELEVATION_JITTER, RING_ELEVATION_JITTER, size=n) * d
        offsets = np.column_stack([d * np.cos(angles), d * np.sin(angles), heights])
    else:
        dirs = _unit_vectors(rng, n)
        dirs[:, 2] = np.abs(dirs[:, 2]) + 0.1
        offsets = d * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    return center + offsets


def _quaternion(rotation: np.ndarray) -> Tuple[float, float, float, float]:
    x, y, z, w = Rotation.from_matrix(rotation).as_quat()
    q = np.array([w, x, y, z])
    if q[0] < 0:
        q = -q
    return tuple(float(c) for c in q / np.linalg.norm(q))


def generate(recipe: SceneRecipe) -> Tuple[SfmModel, Dict[int, List[int]]]:
    """
    Génère un modèle SfM synthétique

    Un point est vu par une caméra si l'angle entre sa normale et la
    direction vers la caméra ne dépasse pas `visibility_angle` et s'il est
    devant elle ; chaque observation est ensuite omise avec la probabilité
    `dropout`.

    Returns:
        Tuple[SfmModel, Dict[int, List[int]]]: Le modèle, et pour chaque
            image les points de la boîte visibles avant omission

    Raises:
        ValueError: Aucune caméra ou aucun point
    """
    if recipe.n_cameras == 0:
        raise ValueError("Recette sans caméra")
    n_points = recipe.n_points_in_roi + recipe.n_points_background
    if n_points == 0:
        raise ValueError("Recette sans point")

    box = recipe.box
    point_rng = streams.stream(recipe.seed, streams.POINTS)
    normals_in = _unit_vectors(point_rng, recipe.n_points_in_roi)
    radius = SPHERE_FILL * float(box.extent.min()) / 2.0
    positions_in = box.center + radius * normals_in
    positions_bg = _outside_box(point_rng, box, recipe.n_points_background)
    normals_bg = _unit_vectors(point_rng, recipe.n_points_background)
    colors = point_rng.integers(0, 256, size=(n_points, 3))
    positions = np.concatenate([positions_in, positions_bg])
    normals = np.concatenate([normals_in, normals_bg])
    point_ids = np.arange(1, n_points + 1)
    in_box = box.contains(positions)

    camera_rng = streams.stream(recipe.seed, streams.CAMERAS)
    dropout_rng = streams.stream(recipe.seed, streams.DROPOUT)
    intrinsics = recipe.intrinsics()
    fx, fy = intrinsics.focal_lengths()
    cx, cy = intrinsics.principal_point()
    cos_limit = np.cos(np.radians(recipe.visibility_angle))

    images: Dict[int, PosedImage] = {}
    truth: Dict[int, List[int]] = {}
    track_parts = []
    for k, position in enumerate(_camera_positions(recipe, camera_rng)):
        image_id = k + 1
        rotation = look_at(position, box.center)
        tvec = -rotation @ position
        cam = positions @ rotation.T + tvec
        to_camera = position - positions
        to_camera /= np.linalg.norm(to_camera, axis=1, keepdims=True)
        facing = np.einsum("ij,ij->i", normals, to_camera) >= cos_limit
        visible = np.flatnonzero(facing & (cam[:, 2] > NEAR_PLANE))
        truth[image_id] = point_ids[visible[in_box[visible]]].tolist()
        if recipe.dropout > 0.0:
            visible = visible[dropout_rng.random(len(visible)) >= recipe.dropout]
        xys = np.column_stack([fx * cam[visible, 0] / cam[visible, 2] + cx,
                               fy * cam[visible, 1] / cam[visible, 2] + cy])
        images[image_id] = PosedImage(image_id, _quaternion(rotation), tuple(tvec), intrinsics.camera_id,
                                      f"view_{image_id:04d}.png", xys, point_ids[visible])
        track_parts.append(np.column_stack([visible, np.full(len(visible), image_id), np.arange(len(visible))]))

    tracks = np.concatenate(track_parts) if track_parts else np.zeros((0, 3), dtype=np.int64)
    tracks = tracks[np.lexsort((tracks[:, 2], tracks[:, 1], tracks[:, 0]))]
    bounds = np.searchsorted(tracks[:, 0], np.arange(n_points + 1))
    points = {}
    for row in range(n_points):
        entries = tracks[bounds[row]:bounds[row + 1]]
        pid = int(point_ids[row])
        points[pid] = ScenePoint(pid, tuple(positions[row]), tuple(colors[row]), 0.5,
                                 entries[:, 1], entries[:, 2])

    model = SfmModel({intrinsics.camera_id: intrinsics}, images, points)
    logger.info(f"Scène synthétique: {len(images)} images, {n_points} points "
                f"({recipe.n_points_in_roi} dans la ROI), graine {recipe.seed}")
    return model, truth


def generate_splats(recipe: SceneRecipe, n_in: Optional[int] = None, n_out: Optional[int] = None,
                    sh_degree: Optional[int] = None) -> SplatSet:
    """
    Gaussiennes aléatoires dont exactement `n_in` centres sont dans la boîte
    et `n_out` hors de la boîte (valeurs de la recette par défaut)
    """
    n_in = recipe.splats_in if n_in is None else n_in
    n_out = recipe.splats_out if n_out is None else n_out
    degree = recipe.sh_degree if sh_degree is None else sh_degree
    if n_in < 0 or n_out < 0:
        raise ValueError("Nombre de gaussiennes négatif")
    width = len(canonical_properties(degree))
    total = n_in + n_out
    if total == 0:
        return SplatSet.empty(degree)

    box = recipe.box
    rng = streams.stream(recipe.seed, streams.SPLATS)
    margin = SPLAT_MARGIN * box.extent
    inside = rng.uniform(np.asarray(box.min) + margin, np.asarray(box.max) - margin, size=(n_in, 3))
    outside = _outside_box(rng, box, n_out, SPLAT_MARGIN)
    positions = np.concatenate([inside, outside])[rng.permutation(total)]

    data = np.zeros(total, dtype=splat_dtype(degree))
    comps = data.view(np.float32).reshape(total, width)
    comps[:, 0:3] = positions
    comps[:, 6:width - 8] = rng.normal(0.0, 0.3, size=(total, width - 14))
    comps[:, width - 8] = rng.normal(0.0, 2.0, size=total)
    comps[:, width - 7:width - 4] = rng.uniform(-6.0, -2.0, size=(total, 3))
    quats = rng.standard_normal((total, 4))
    comps[:, width - 4:] = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    return SplatSet(data, degree)
