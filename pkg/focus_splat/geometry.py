"""
Primitives géométriques : boîtes englobantes alignées (AABB), projection
monde -> image, polygone projeté d'une boîte et visibilité SfM d'une ROI.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull

try:
    from scipy.spatial import QhullError
except ImportError:  # scipy < 1.11
    from scipy.spatial.qhull import QhullError

from focus_splat.colmap_io import CameraIntrinsics, CameraModel, PosedImage, SfmModel

logger = logging.getLogger(__name__)

# Plan proche (mètres, repère caméra)
NEAR_PLANE = 1e-6

# Les 12 arêtes d'une boîte, indices dans l'ordre de Aabb.corners()
BOX_EDGES = (
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


@dataclass(frozen=True)
class Aabb:
    """Boîte fermée alignée sur les axes, en mètres"""
    min: Tuple[float, float, float]
    max: Tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(c) for c in self.min)
        hi = tuple(float(c) for c in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("Une AABB a exactement 3 composantes par coin")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"AABB de volume nul ou inversée: min={lo}, max={hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.min) + np.asarray(self.max)) / 2.0

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.max) - np.asarray(self.min)

    def corners(self) -> np.ndarray:
        """Les 8 coins (8, 3) ; le bit 0 de l'indice choisit x, le bit 1 y, le bit 2 z"""
        lo, hi = self.min, self.max
        return np.array([[hi[0] if i & 1 else lo[0],
                          hi[1] if i & 2 else lo[1],
                          hi[2] if i & 4 else lo[2]] for i in range(8)], dtype=np.float64)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Masque d'appartenance (bord inclus) pour un tableau (N, 3)"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.all((points >= np.asarray(self.min)) & (points <= np.asarray(self.max)), axis=1)

    def intersects(self, other: "Aabb") -> bool:
        """Vrai si les boîtes fermées partagent au moins un point (contact inclus)"""
        return all(a_lo <= b_hi and b_lo <= a_hi
                   for a_lo, a_hi, b_lo, b_hi in zip(self.min, self.max, other.min, other.max))


class FeatureMode(str, Enum):
    SIX = "six"
    NINE = "nine"

    @property
    def dimension(self) -> int:
        return 6 if self is FeatureMode.SIX else 9


DEFAULT_WEIGHTS = (0.4, 0.4, 0.2)
DEFAULT_VOXEL_GRID = 16


@dataclass(frozen=True)
class RoiSpec:
    """Région d'intérêt déclarée par l'utilisateur et ses paramètres de sélection"""
    roi_id: str
    box: Aabb
    select_count: int = 150
    feature_mode: FeatureMode = FeatureMode.NINE
    voxel_grid: int = DEFAULT_VOXEL_GRID
    weights: Tuple[float, float, float] = DEFAULT_WEIGHTS
    seed: int = 0

    def __post_init__(self):
        if not self.roi_id:
            raise ValueError("Identifiant de ROI vide")
        if self.select_count < 1:
            raise ValueError(f"ROI {self.roi_id}: K doit être >= 1")
        if self.voxel_grid < 2:
            raise ValueError(f"ROI {self.roi_id}: la grille de voxels doit être >= 2")
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != 3 or min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"ROI {self.roi_id}: poids {weights} négatifs ou de somme différente de 1")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "feature_mode", FeatureMode(self.feature_mode))


@dataclass(frozen=True, eq=False)
class ImagePolygon:
    """Polygone convexe en pixels, sommets dans le sens direct (aire de Gauss positive)"""
    vertices: np.ndarray
    area: float


def shoelace_area(vertices: np.ndarray) -> float:
    """Aire signée (formule de Gauss) ; positive pour un parcours direct"""
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def point_in_aabb(p: Sequence[float], box: Aabb) -> bool:
    return bool(box.contains(np.asarray(p, dtype=np.float64))[0])


def points_in_aabb(points: np.ndarray, box: Aabb) -> np.ndarray:
    return box.contains(points)


def to_camera_frame(pose: PosedImage, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points @ pose.rotation_matrix().T + np.asarray(pose.tvec)


def _camera_to_pixels(intrinsics: CameraIntrinsics, cam_points: np.ndarray) -> np.ndarray:
    # Suppose z > 0 ; applique la distorsion du modèle puis la calibration
    x = cam_points[:, 0] / cam_points[:, 2]
    y = cam_points[:, 1] / cam_points[:, 2]
    p = intrinsics.params
    if intrinsics.model == CameraModel.SIMPLE_RADIAL:
        radial = 1.0 + p[3] * (x * x + y * y)
        x, y = x * radial, y * radial
    elif intrinsics.model == CameraModel.OPENCV:
        k1, k2, p1, p2 = p[4:8]
        r2 = x * x + y * y
        radial = 1.0 + k1 * r2 + k2 * r2 * r2
        xy = x * y
        dx = 2.0 * p1 * xy + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * xy
        x, y = x * radial + dx, y * radial + dy
    fx, fy = intrinsics.focal_lengths()
    cx, cy = intrinsics.principal_point()
    return np.column_stack([fx * x + cx, fy * y + cy])


def project_points(intrinsics: CameraIntrinsics, pose: PosedImage,
                   points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Projette un tableau de points monde

    Returns:
        Tuple[np.ndarray, np.ndarray]: (pixels (N, 2), masque des points devant le plan proche)
            Les pixels des points invalides valent NaN.
    """
    cam = to_camera_frame(pose, points)
    valid = cam[:, 2] > NEAR_PLANE
    uv = np.full((len(cam), 2), np.nan)
    if valid.any():
        uv[valid] = _camera_to_pixels(intrinsics, cam[valid])
    return uv, valid


def project(intrinsics: CameraIntrinsics, pose: PosedImage,
            p_world: Sequence[float]) -> Optional[np.ndarray]:
    """
    Projette un point monde en pixels

    Returns:
        Optional[np.ndarray]: (u, v), ou None si la profondeur est <= au plan proche
    """
    uv, valid = project_points(intrinsics, pose, np.asarray(p_world, dtype=np.float64))
    return uv[0] if valid[0] else None


def _clip_box_to_near_plane(cam_corners: np.ndarray) -> np.ndarray:
    # Coins devant le plan proche + intersections des arêtes qui le traversent
    z = cam_corners[:, 2]
    kept = [cam_corners[i] for i in range(8) if z[i] > NEAR_PLANE]
    for i, j in BOX_EDGES:
        zi, zj = z[i], z[j]
        if (zi > NEAR_PLANE) != (zj > NEAR_PLANE):
            t = (NEAR_PLANE - zi) / (zj - zi)
            hit = cam_corners[i] + t * (cam_corners[j] - cam_corners[i])
            hit[2] = NEAR_PLANE
            kept.append(hit)
    return np.array(kept).reshape(-1, 3)


def clip_polygon_to_rect(vertices: np.ndarray, width: float, height: float) -> np.ndarray:
    """
    Découpe d'un polygone convexe par le rectangle [0, width] x [0, height]
    (Sutherland-Hodgman, une passe par bord)
    """
    bounds = (
        (0, 0.0, True),       # x >= 0
        (0, float(width), False),   # x <= width
        (1, 0.0, True),       # y >= 0
        (1, float(height), False),  # y <= height
    )
    poly = [np.asarray(v, dtype=np.float64) for v in vertices]
    for axis, limit, lower in bounds:
        if not poly:
            break
        inside = (lambda p: p[axis] >= limit) if lower else (lambda p: p[axis] <= limit)
        out = []
        for k, current in enumerate(poly):
            previous = poly[k - 1]
            if inside(current):
                if not inside(previous):
                    out.append(_intersect(previous, current, axis, limit))
                out.append(current)
            elif inside(previous):
                out.append(_intersect(previous, current, axis, limit))
        poly = out
    return np.array(poly).reshape(-1, 2)


def _intersect(a: np.ndarray, b: np.ndarray, axis: int, limit: float) -> np.ndarray:
    t = (limit - a[axis]) / (b[axis] - a[axis])
    hit = a + t * (b - a)
    hit[axis] = limit
    return hit


def convex_hull_2d(points: np.ndarray) -> Optional[np.ndarray]:
    """Enveloppe convexe dans le sens direct, ou None si dégénérée"""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 3:
        return None
    try:
        hull = ConvexHull(points)
    except QhullError:
        return None
    return points[hull.vertices]


def projected_aabb(intrinsics: CameraIntrinsics, pose: PosedImage,
                   box: Aabb) -> Optional[ImagePolygon]:
    """
    Polygone image d'une boîte : enveloppe convexe des coins projetés (arêtes
    découpées par le plan proche), intersectée avec le rectangle de l'image

    Returns:
        Optional[ImagePolygon]: None si la boîte est derrière la caméra ou hors image
    """
    cam = _clip_box_to_near_plane(to_camera_frame(pose, box.corners()))
    if len(cam) < 3:
        return None
    hull = convex_hull_2d(_camera_to_pixels(intrinsics, cam))
    if hull is None:
        return None
    clipped = clip_polygon_to_rect(hull, intrinsics.width, intrinsics.height)
    area = shoelace_area(clipped)
    if len(clipped) < 3 or area <= 0.0:
        return None
    return ImagePolygon(clipped, area)


def in_box_point_ids(model: SfmModel, box: Aabb) -> np.ndarray:
    if not model.points:
        return np.zeros(0, dtype=np.int64)
    return model.point_ids[box.contains(model.positions)]


def roi_visibility(model: SfmModel, box: Aabb) -> Dict[int, List[int]]:
    """
    Filtrage initial : images observant au moins un point SfM de la boîte

    Args:
        model: Le modèle SfM (validé)
        box: La boîte de la ROI

    Returns:
        Dict[int, List[int]]: image_id -> identifiants triés des points de la
            boîte dont la piste contient l'image ; images sans point omises
    """
    seen: Dict[int, set] = {}
    for pid in in_box_point_ids(model, box).tolist():
        for image_id in model.points[pid].image_ids.tolist():
            seen.setdefault(image_id, set()).add(pid)
    visibility = {iid: sorted(seen[iid]) for iid in sorted(seen)}
    logger.debug(f"{len(visibility)} images voient la boîte {box.min}..{box.max}")
    return visibility
