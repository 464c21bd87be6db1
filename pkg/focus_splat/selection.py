"""
Sélection des vues d'une ROI.

Chaque vue candidate est décrite par sa position, son axe optique et trois
critères statiques (distance, aire projetée de la boîte, nombre de points
clés dans la boîte). Le score d'un ensemble de vues combine la densité de
points couverts, l'occupation d'une grille de voxels et la couverture
angulaire, chacune normalisée par sa valeur sur tout le lot de candidats.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from focus_splat import streams
from focus_splat.colmap_io import CameraIntrinsics, PosedImage, SfmModel
from focus_splat.errors import DegenerateRoiError
from focus_splat.geometry import Aabb, FeatureMode, RoiSpec, projected_aabb, roi_visibility
from focus_splat.gp import argmax_by_id, gp_fit, gp_predict_many, ucb
from focus_splat.io_utils.textfiles import format_real

logger = logging.getLogger(__name__)

AZIMUTH_BINS = 12
ELEVATION_BINS = 6
DEFAULT_BETA = 1.0
TIE_TOLERANCE = 1e-12

MODES = ("static", "gp6", "gp9", "random")


@dataclass(frozen=True, eq=False)
class CandidateView:
    """Vue candidate et ses descripteurs bruts"""
    image_id: int
    name: str
    center: np.ndarray
    forward: np.ndarray
    distance: float
    proj_area: float
    keypoint_count: int
    point_ids: np.ndarray


def static_features(model: SfmModel, intrinsics: CameraIntrinsics, image: PosedImage, box: Aabb) -> np.ndarray:
    """
    Critères statiques bruts d'une vue

    Returns:
        np.ndarray: (distance en m, aire projetée / aire de l'image, nombre de
            points de la boîte observés par l'image)
    """
    distance = float(np.linalg.norm(image.center() - box.center))
    polygon = projected_aabb(intrinsics, image, box)
    proj_area = 0.0 if polygon is None else polygon.area / (intrinsics.width * intrinsics.height)
    ids = np.unique(image.observed_point_ids())
    if ids.size:
        xyz = np.array([model.points[int(i)].xyz for i in ids])
        count = int(box.contains(xyz).sum())
    else:
        count = 0
    return np.array([distance, proj_area, float(count)])


def build_candidates(model: SfmModel, box: Aabb, candidate_ids: Sequence[int],
                     visibility: Optional[Dict[int, List[int]]] = None,
                     workers: int = 1) -> List[CandidateView]:
    """
    Décrit les vues candidates d'une ROI, triées par identifiant

    Raises:
        ValueError: Si une vue n'observe aucun point de la boîte
    """
    if visibility is None:
        visibility = roi_visibility(model, box)
    ids = sorted(set(int(i) for i in candidate_ids))
    unknown = [i for i in ids if i not in visibility]
    if unknown:
        raise ValueError(f"Vues sans point de la ROI: {unknown[:10]}")

    def describe(image_id: int) -> CandidateView:
        image = model.images[image_id]
        distance, proj_area, count = static_features(model, model.intrinsics_of(image_id), image, box)
        return CandidateView(
            image_id=image_id, name=image.name, center=image.center(), forward=image.forward(),
            distance=float(distance), proj_area=float(proj_area), keypoint_count=int(count),
            point_ids=np.asarray(visibility[image_id], dtype=np.int64))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(describe, ids))
    return [describe(i) for i in ids]


def _min_max(values: np.ndarray) -> np.ndarray:
    span = values.max() - values.min()
    if span == 0.0:
        return np.zeros_like(values)
    return (values - values.min()) / span


def static_composite(candidates: Sequence[CandidateView]) -> np.ndarray:
    """Moyenne des trois critères normalisés min-max sur le lot, distance inversée"""
    distance = np.array([c.distance for c in candidates])
    area = np.array([c.proj_area for c in candidates])
    count = np.array([c.keypoint_count for c in candidates], dtype=np.float64)
    return (_min_max(-distance) + _min_max(area) + _min_max(count)) / 3.0


def static_rank(candidates: Sequence[CandidateView]) -> List[int]:
    """
    Classement par critères statiques seuls

    Returns:
        List[int]: Identifiants par composite décroissant, ex aequo par
            identifiant croissant
    """
    if not candidates:
        raise ValueError("Aucune vue candidate")
    composite = static_composite(candidates)
    order = sorted(range(len(candidates)), key=lambda i: (-composite[i], candidates[i].image_id))
    return [candidates[i].image_id for i in order]


@dataclass(frozen=True)
class ScoreNormalizers:
    """Totaux atteints par le lot complet de candidats"""
    points: int
    voxels: int
    bins: int

    def check(self) -> None:
        for name in ("points", "voxels", "bins"):
            if getattr(self, name) <= 0:
                raise DegenerateRoiError(f"ROI dégénérée: normaliseur '{name}' nul")


@dataclass(frozen=True)
class RoiScore:
    density: float
    occupancy: float
    angle_coverage: float
    total: float


def _score_from_counts(points: int, voxels: int, bins: int, normalizers: ScoreNormalizers,
                       weights: Tuple[float, float, float]) -> RoiScore:
    density = points / normalizers.points
    occupancy = voxels / normalizers.voxels
    angle = bins / normalizers.bins
    total = weights[0] * density + weights[1] * occupancy + weights[2] * angle
    return RoiScore(density, occupancy, angle, total)


def voxel_index(points: np.ndarray, box: Aabb, grid: int) -> np.ndarray:
    """Indice linéaire du voxel (grille grid³ sur la boîte fermée)"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cell = np.floor((points - np.asarray(box.min)) / box.extent * grid).astype(np.int64)
    cell = np.clip(cell, 0, grid - 1)
    return (cell[:, 0] * grid + cell[:, 1]) * grid + cell[:, 2]


def direction_bin(direction: np.ndarray) -> int:
    """Case azimut x élévation (12 x 6) d'une direction boîte -> caméra"""
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        return 0
    x, y, z = d / norm
    azimuth = math.atan2(y, x)
    elevation = math.asin(max(-1.0, min(1.0, z)))
    a = min(int((azimuth + math.pi) / (2 * math.pi) * AZIMUTH_BINS), AZIMUTH_BINS - 1)
    e = min(int((elevation + math.pi / 2) / math.pi * ELEVATION_BINS), ELEVATION_BINS - 1)
    return e * AZIMUTH_BINS + a


def roi_score(selected_points: np.ndarray, selected_view_dirs: np.ndarray, box: Aabb, grid: int,
              weights: Tuple[float, float, float], normalizers: ScoreNormalizers) -> RoiScore:
    """
    Score de couverture d'un ensemble de vues

    Args:
        selected_points: Positions (N, 3) des points distincts de la boîte vus
            par l'ensemble
        selected_view_dirs: Directions (M, 3) centre de la boîte -> caméra
        box: La boîte de la ROI
        grid: Nombre de voxels par axe
        weights: (w_densité, w_occupation, w_angle)
        normalizers: Les totaux du lot complet

    Raises:
        DegenerateRoiError: Si un normaliseur est nul
    """
    normalizers.check()
    points = np.asarray(selected_points, dtype=np.float64).reshape(-1, 3)
    voxels = len(np.unique(voxel_index(points, box, grid))) if len(points) else 0
    dirs = np.asarray(selected_view_dirs, dtype=np.float64).reshape(-1, 3)
    bins = len({direction_bin(d) for d in dirs})
    return _score_from_counts(len(points), voxels, bins, normalizers, weights)


class CoverageTracker:
    """
    État incrémental du score d'un ensemble de vues croissant

    Les points de la boîte visibles par le lot sont renumérotés de 0 à P-1 ;
    chaque candidat garde les indices de ses points, son voxel et sa case
    de direction.
    """

    def __init__(self, model: SfmModel, candidates: Sequence[CandidateView], box: Aabb,
                 grid: int, weights: Tuple[float, float, float]):
        if not candidates:
            raise ValueError("Aucune vue candidate")
        self.candidates = list(candidates)
        self.ids = np.array([c.image_id for c in self.candidates], dtype=np.int64)
        self.weights = weights

        pool_ids = np.unique(np.concatenate([c.point_ids for c in self.candidates]))
        rows = np.searchsorted(model.point_ids, pool_ids)
        self.point_voxel = voxel_index(model.positions[rows], box, grid)
        self.view_points = [np.searchsorted(pool_ids, c.point_ids) for c in self.candidates]
        self.view_bin = np.array([direction_bin(c.center - box.center) for c in self.candidates])

        self.normalizers = ScoreNormalizers(
            points=len(pool_ids), voxels=len(np.unique(self.point_voxel)), bins=len(np.unique(self.view_bin)))
        self.normalizers.check()

        self.covered = np.zeros(len(pool_ids), dtype=bool)
        self.voxel_seen = np.zeros(grid ** 3, dtype=bool)
        self.bin_seen = np.zeros(AZIMUTH_BINS * ELEVATION_BINS, dtype=bool)
        self.counts = (0, 0, 0)
        self.selected: List[int] = []

    def index_of(self, image_id: int) -> int:
        return int(np.searchsorted(self.ids, image_id))

    def score(self) -> RoiScore:
        return _score_from_counts(*self.counts, self.normalizers, self.weights)

    def _increments(self, index: int) -> Tuple[np.ndarray, np.ndarray, bool]:
        new_points = self.view_points[index][~self.covered[self.view_points[index]]]
        voxels = np.unique(self.point_voxel[new_points])
        new_voxels = voxels[~self.voxel_seen[voxels]]
        new_bin = not self.bin_seen[self.view_bin[index]]
        return new_points, new_voxels, new_bin

    def gain(self, index: int) -> float:
        """Gain exact du score si la vue d'indice `index` est ajoutée"""
        new_points, new_voxels, new_bin = self._increments(index)
        p, v, b = self.counts
        after = _score_from_counts(p + len(new_points), v + len(new_voxels), b + int(new_bin),
                                   self.normalizers, self.weights)
        return after.total - self.score().total

    def add(self, index: int) -> RoiScore:
        new_points, new_voxels, new_bin = self._increments(index)
        self.covered[new_points] = True
        self.voxel_seen[new_voxels] = True
        self.bin_seen[self.view_bin[index]] = True
        p, v, b = self.counts
        self.counts = (p + len(new_points), v + len(new_voxels), b + int(new_bin))
        self.selected.append(index)
        return self.score()

    def fresh(self) -> "CoverageTracker":
        """Copie remise à l'ensemble vide"""
        clone = object.__new__(CoverageTracker)
        clone.__dict__.update(self.__dict__)
        clone.covered = np.zeros_like(self.covered)
        clone.voxel_seen = np.zeros_like(self.voxel_seen)
        clone.bin_seen = np.zeros_like(self.bin_seen)
        clone.counts = (0, 0, 0)
        clone.selected = []
        return clone


@dataclass(frozen=True, eq=False)
class ViewFeature:
    image_id: int
    values: np.ndarray
    mode: FeatureMode


class FeaturePool:
    """
    Descripteurs standardisés (z-score) d'un lot de candidats

    Colonnes : centre (3), axe optique (3), distance, aire projetée, points
    clés ; le mode `six` ne garde que les 6 premières.
    """

    def __init__(self, candidates: Sequence[CandidateView], mode: FeatureMode):
        self.mode = FeatureMode(mode)
        raw = np.array([np.concatenate([c.center, c.forward, [c.distance, c.proj_area, c.keypoint_count]])
                        for c in candidates], dtype=np.float64)
        raw = raw[:, :self.mode.dimension]
        self.ids = [c.image_id for c in candidates]
        self.mean = raw.mean(axis=0)
        scale = raw.std(axis=0)
        self.scale = np.where(scale > 0.0, scale, 1.0)
        self.matrix = (raw - self.mean) / self.scale

    def feature(self, index: int) -> ViewFeature:
        return ViewFeature(self.ids[index], self.matrix[index], self.mode)


@dataclass(frozen=True)
class SelectionStep:
    step: int
    image_id: int
    predicted_gain: float
    realized_gain: float
    score: RoiScore


@dataclass(frozen=True)
class SelectionResult:
    """
    Attributes:
        ordered_ids: Vues dans l'ordre de sélection
        trace: Une entrée par étape
        truncated: Vrai si le lot était plus petit que K
    """
    roi_id: str
    mode: str
    ordered_ids: Tuple[int, ...]
    trace: Tuple[SelectionStep, ...]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.ordered_ids)


def _predict_chunked(gp, matrix: np.ndarray, workers: int) -> Tuple[np.ndarray, np.ndarray]:
    if workers <= 1 or len(matrix) < 2 * workers:
        return gp_predict_many(gp, matrix)
    chunks = np.array_split(matrix, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda m: gp_predict_many(gp, m), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _gp_order(tracker: CoverageTracker, pool: FeaturePool, k: int, beta: float,
              exhaustive: bool, workers: int) -> List[SelectionStep]:
    remaining = list(range(len(tracker.candidates)))
    chosen: List[int] = []
    gains: List[float] = []
    steps: List[SelectionStep] = []
    for step in range(1, k + 1):
        if exhaustive:
            # Processus ajusté sur la table exacte des gains restants
            table = np.array([tracker.gain(i) for i in remaining])
            ids = tracker.ids[remaining]
            gp = gp_fit(pool.matrix[remaining], table, noise_free=True, ids=ids)
            mean, variance = gp_predict_many(gp, pool.matrix[remaining], ids=ids)
            pick = argmax_by_id(ucb(mean, variance, beta), tracker.ids[remaining], TIE_TOLERANCE)
            index, predicted = remaining[pick], float(mean[pick])
        elif not chosen:
            index = tracker.index_of(static_rank(tracker.candidates)[0])
            predicted = math.nan
        else:
            gp = gp_fit(pool.matrix[chosen], gains)
            mean, variance = _predict_chunked(gp, pool.matrix[remaining], workers)
            pick = argmax_by_id(ucb(mean, variance, beta), tracker.ids[remaining], TIE_TOLERANCE)
            index, predicted = remaining[pick], float(mean[pick])
            if gp.clamp_count:
                logger.warning(f"Étape {step}: {gp.clamp_count} variance(s) négative(s) ramenée(s) à 0")

        realized = tracker.gain(index)
        score = tracker.add(index)
        remaining.remove(index)
        chosen.append(index)
        gains.append(realized)
        steps.append(SelectionStep(step, int(tracker.ids[index]), predicted, realized, score))
        logger.debug(f"Étape {step}: vue {tracker.ids[index]}, gain prédit {predicted:.4g}, "
                     f"réalisé {realized:.4g}, score {score.total:.4f}")
    return steps


def _replay(tracker: CoverageTracker, order: Sequence[int]) -> List[SelectionStep]:
    steps = []
    for step, image_id in enumerate(order, 1):
        index = tracker.index_of(image_id)
        realized = tracker.gain(index)
        steps.append(SelectionStep(step, int(image_id), math.nan, realized, tracker.add(index)))
    return steps


def greedy_select(model: SfmModel, roi: RoiSpec, candidate_ids: Sequence[int], beta: float = DEFAULT_BETA,
                  exhaustive: bool = False, workers: int = 1,
                  visibility: Optional[Dict[int, List[int]]] = None) -> SelectionResult:
    """
    Sélection gloutonne guidée par processus gaussien

    La première vue est la meilleure au classement statique. Ensuite, un
    processus gaussien ajusté sur les paires (descripteur, gain réalisé) des
    vues déjà choisies prédit le gain des vues restantes ; la vue qui
    maximise μ + β σ est retenue, son gain exact est calculé, et le modèle
    est réajusté.

    Args:
        model: Le modèle SfM
        roi: La ROI et ses paramètres (K, mode des descripteurs, grille, poids)
        candidate_ids: Les vues candidates (visibles, hors test)
        beta: Poids de l'écart-type dans l'acquisition
        exhaustive: Ajuste le processus, à chaque étape, sur la table exacte
            des gains de toutes les vues restantes (référence gloutonne exacte
            quand beta = 0)
        workers: Parallélisme de l'évaluation de l'acquisition
        visibility: Résultat précalculé de roi_visibility

    Raises:
        ValueError: Lot de candidats vide
        DegenerateRoiError: Normaliseur de score nul
        GpFactorizationError: Factorisation impossible
    """
    candidates = build_candidates(model, roi.box, candidate_ids, visibility, workers)
    if not candidates:
        raise ValueError(f"ROI {roi.roi_id}: aucune vue candidate")
    tracker = CoverageTracker(model, candidates, roi.box, roi.voxel_grid, roi.weights)
    pool = FeaturePool(candidates, roi.feature_mode)
    k = min(roi.select_count, len(candidates))
    if k < roi.select_count:
        logger.warning(f"ROI {roi.roi_id}: {len(candidates)} candidats pour K={roi.select_count}")

    steps = _gp_order(tracker, pool, k, beta, exhaustive, workers)
    mode = "gp6" if pool.mode is FeatureMode.SIX else "gp9"
    return SelectionResult(roi.roi_id, mode, tuple(s.image_id for s in steps), tuple(steps),
                           truncated=k < roi.select_count)


def brute_force_greedy(tracker: CoverageTracker, k: int) -> List[int]:
    """Glouton par gain exact : à chaque étape, la vue de plus grand gain marginal"""
    tracker = tracker.fresh()
    remaining = list(range(len(tracker.candidates)))
    order = []
    for _ in range(min(k, len(remaining))):
        gains = np.array([tracker.gain(i) for i in remaining])
        index = remaining[argmax_by_id(gains, tracker.ids[remaining], TIE_TOLERANCE)]
        tracker.add(index)
        remaining.remove(index)
        order.append(int(tracker.ids[index]))
    return order


def random_select(candidate_ids: Sequence[int], k: int, seed: int) -> List[int]:
    """Tirage uniforme sans remise de k vues, reproductible par graine"""
    ids = np.array(sorted(set(int(i) for i in candidate_ids)), dtype=np.int64)
    rng = streams.stream(seed, streams.SUBSETS)
    return rng.permutation(ids)[:min(k, len(ids))].tolist()


def select_first_k(result: SelectionResult, k: int) -> List[int]:
    """
    Raises:
        ValueError: Si k est négatif ou dépasse la longueur de la sélection
    """
    if k < 0 or k > len(result.ordered_ids):
        raise ValueError(f"k={k} hors de [0, {len(result.ordered_ids)}]")
    return list(result.ordered_ids[:k])


def select_views(model: SfmModel, roi: RoiSpec, candidate_ids: Sequence[int], mode: str,
                 beta: float = DEFAULT_BETA, workers: int = 1,
                 visibility: Optional[Dict[int, List[int]]] = None) -> SelectionResult:
    """
    Point d'entrée des quatre modes : `static` (critères statiques seuls),
    `gp6`, `gp9` (processus gaussien à 6 ou 9 descripteurs) et `random`
    """
    if mode not in MODES:
        raise ValueError(f"Mode de sélection inconnu: {mode}")
    if mode in ("gp6", "gp9"):
        feature_mode = FeatureMode.SIX if mode == "gp6" else FeatureMode.NINE
        roi = replace(roi, feature_mode=feature_mode)
        return greedy_select(model, roi, candidate_ids, beta, workers=workers, visibility=visibility)

    candidates = build_candidates(model, roi.box, candidate_ids, visibility, workers)
    if not candidates:
        raise ValueError(f"ROI {roi.roi_id}: aucune vue candidate")
    tracker = CoverageTracker(model, candidates, roi.box, roi.voxel_grid, roi.weights)
    k = min(roi.select_count, len(candidates))
    if mode == "static":
        order = static_rank(candidates)[:k]
    else:
        order = random_select([c.image_id for c in candidates], k, roi.seed)
    steps = _replay(tracker, order)
    return SelectionResult(roi.roi_id, mode, tuple(order), tuple(steps), truncated=k < roi.select_count)


TRACE_COLUMNS = ("step", "image_id", "predicted_gain", "realized_gain",
                 "density", "occupancy", "angle_coverage", "total")


def selection_names(result: SelectionResult, model: SfmModel) -> List[str]:
    return [model.images[i].name for i in result.ordered_ids]


def trace_table(result: SelectionResult) -> str:
    """Trace au format CSV, une ligne par étape"""
    lines = [",".join(TRACE_COLUMNS)]
    for s in result.trace:
        values = [s.predicted_gain, s.realized_gain, s.score.density, s.score.occupancy,
                  s.score.angle_coverage, s.score.total]
        lines.append(",".join([str(s.step), str(s.image_id)] + [format_real(v) for v in values]))
    return "\n".join(lines) + "\n"
