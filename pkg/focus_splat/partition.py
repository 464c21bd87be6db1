"""
Partition des images en ensembles de test et d'entraînement, et manifestes
décrivant les entraînements à lancer par un entraîneur 3DGS externe.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from focus_splat.geometry import Aabb, RoiSpec
from focus_splat.io_utils.textfiles import atomic_write, format_key_values, write_name_list

logger = logging.getLogger(__name__)

SCENE_ITERATIONS = 20000
OBJECT_ITERATIONS = 30000
OBJECT_DENSIFY_UNTIL = 15000
BASELINE_ITERATIONS = 50000
DEFAULT_RETAIN_RATIO = 0.5

SCENE_CHECKPOINT = "scene_checkpoint"
SFM_POINTS = "sfm_points"
INITIALIZATIONS = (SCENE_CHECKPOINT, SFM_POINTS)

_UNSAFE = re.compile(r"[^A-Za-z0-9_-]")


def hold_out_test(ids: Sequence[int], fraction: float) -> Tuple[List[int], List[int]]:
    """
    Réserve un ensemble de test par échantillonnage à pas régulier

    Pour N identifiants triés, n = ⌊N·fraction⌋ images sont réservées aux
    positions ⌊i·N/n⌋, i = 0..n-1.

    Args:
        ids: Les images visibles depuis la ROI
        fraction: La proportion réservée, dans ]0, 1[

    Returns:
        Tuple[List[int], List[int]]: (test, reste), triés

    Raises:
        ValueError: Fraction hors de ]0, 1[, test ou reste vide
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"Fraction de test hors de ]0, 1[: {fraction}")
    ordered = sorted(ids)
    total = len(ordered)
    count = math.floor(total * fraction + 1e-9)
    if count == 0:
        raise ValueError(f"Fraction {fraction} trop faible pour {total} images: test vide")
    if count >= total:
        raise ValueError(f"Fraction {fraction} trop forte pour {total} images: aucune image restante")
    positions = {(i * total) // count for i in range(count)}
    test = [ordered[p] for p in sorted(positions)]
    remaining = [x for p, x in enumerate(ordered) if p not in positions]
    return test, remaining


def retained_positions(length: int, ratio: float) -> List[int]:
    """
    Positions conservées dans une sélection ordonnée : i l'est si
    ⌈(i+1)·r⌉ > ⌈i·r⌉ (r = 1/2 donne les positions paires)
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"Taux de rétention hors de [0, 1]: {ratio}")
    r = Fraction(str(ratio))
    return [i for i in range(length) if math.ceil((i + 1) * r) > math.ceil(i * r)]


@dataclass(frozen=True)
class PartitionPlan:
    all_ids: Tuple[int, ...]
    test_ids: Tuple[int, ...]
    scene_train_ids: Tuple[int, ...]
    object_train_ids: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    retained_ids: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def check(self) -> None:
        """
        Raises:
            ValueError: Si l'algèbre d'ensembles du plan n'est pas respectée
        """
        test = set(self.test_ids)
        objects = set().union(*self.object_train_ids.values()) if self.object_train_ids else set()
        retained = set().union(*self.retained_ids.values()) if self.retained_ids else set()
        if test & (set(self.scene_train_ids) | objects):
            raise ValueError("Des images de test servent à l'entraînement")
        for roi_id, kept in self.retained_ids.items():
            if not set(kept) <= set(self.object_train_ids[roi_id]):
                raise ValueError(f"ROI {roi_id}: vues conservées hors de l'ensemble objet")
        if set(self.scene_train_ids) != set(self.all_ids) - test - (objects - retained):
            raise ValueError("Ensemble d'entraînement de la scène incohérent")


def build_partition(all_ids: Sequence[int], test_ids: Sequence[int],
                    selections: Mapping[str, Sequence[int]],
                    retain_ratio: float = DEFAULT_RETAIN_RATIO) -> PartitionPlan:
    """
    Construit le plan de partition

    Chaque sélection ordonnée devient l'ensemble d'entraînement de son objet ;
    une partie de ses vues (positions paires pour 0.5) reste dans
    l'entraînement de la scène, les autres en sont exclues. Une vue choisie
    par deux ROI reste dans la scène si l'une des deux la conserve.

    Args:
        all_ids: Toutes les images du modèle
        test_ids: Les images de test
        selections: roi_id -> vues sélectionnées, dans l'ordre de sélection
        retain_ratio: Proportion des vues sélectionnées gardées dans la scène

    Raises:
        ValueError: Sélection citant une image inconnue ou de test
    """
    known = set(all_ids)
    test = set(test_ids)
    unknown_test = test - known
    if unknown_test:
        raise ValueError(f"Images de test inconnues: {sorted(unknown_test)[:10]}")

    object_train: Dict[str, Tuple[int, ...]] = {}
    retained: Dict[str, Tuple[int, ...]] = {}
    for roi_id, selection in selections.items():
        selection = tuple(int(i) for i in selection)
        bad = [i for i in selection if i not in known]
        if bad:
            raise ValueError(f"ROI {roi_id}: images inconnues dans la sélection: {bad[:10]}")
        leaked = [i for i in selection if i in test]
        if leaked:
            raise ValueError(f"ROI {roi_id}: images de test dans la sélection: {leaked[:10]}")
        object_train[roi_id] = selection
        retained[roi_id] = tuple(selection[p] for p in retained_positions(len(selection), retain_ratio))

    excluded = set().union(*object_train.values()) - set().union(*retained.values()) if object_train else set()
    scene = tuple(sorted(known - test - excluded))
    plan = PartitionPlan(tuple(sorted(known)), tuple(sorted(test)), scene, object_train, retained)
    logger.info(f"Partition: {len(plan.test_ids)} test, {len(scene)} scène, "
                f"{sum(len(s) for s in object_train.values())} vues objet")
    return plan


@dataclass(frozen=True)
class TrainingManifest:
    """Un entraînement à lancer ; `image_ids` n'est pas sérialisé (liste à part)"""
    name: str
    model_role: str
    images_file: str
    iterations: int
    image_ids: Tuple[int, ...]
    shuffle: bool
    initialization: str
    roi_id: Optional[str] = None
    densify_region: Optional[Aabb] = None
    densify_until_iteration: Optional[int] = None

    def pairs(self) -> List[Tuple[str, object]]:
        pairs: List[Tuple[str, object]] = [("model_role", self.model_role)]
        if self.roi_id is not None:
            pairs.append(("roi_id", self.roi_id))
        pairs.append(("iterations", self.iterations))
        if self.densify_region is not None:
            box = self.densify_region
            pairs += [(f"densify_min_{a}", float(v)) for a, v in zip("xyz", box.min)]
            pairs += [(f"densify_max_{a}", float(v)) for a, v in zip("xyz", box.max)]
        if self.densify_until_iteration is not None:
            pairs.append(("densify_until_iteration", self.densify_until_iteration))
        pairs += [("initialization", self.initialization), ("shuffle", self.shuffle),
                  ("images_file", self.images_file)]
        return pairs

    def to_text(self) -> str:
        return format_key_values(self.pairs())


class ManifestPaths:
    """Noms des fichiers produits dans le dossier de sortie"""

    TEST_LIST = "test.txt"

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)

    @staticmethod
    def stem(role: str, roi_id: Optional[str] = None) -> str:
        return role if roi_id is None else f"{role}_{_UNSAFE.sub('_', roi_id)}"

    def manifest(self, stem: str) -> Path:
        return self.output_dir / f"{stem}.manifest"

    def images(self, stem: str) -> Path:
        return self.output_dir / f"{stem}_images.txt"


def _check_collisions(manifests: Sequence[TrainingManifest]) -> None:
    seen: Dict[str, str] = {}
    for m in manifests:
        owner = m.roi_id or m.model_role
        if m.name in seen:
            raise ValueError(f"Collision de chemins entre {seen[m.name]} et {owner}: {m.name}")
        seen[m.name] = owner


def emit_manifests(plan: PartitionPlan, rois: Sequence[RoiSpec], paths: ManifestPaths,
                   object_initialization: str = SCENE_CHECKPOINT) -> List[TrainingManifest]:
    """
    Un manifeste pour la scène puis un par ROI

    Raises:
        ValueError: ROI absente du plan, initialisation inconnue, ou deux
            manifestes visant le même fichier
    """
    if object_initialization not in INITIALIZATIONS:
        raise ValueError(f"Initialisation inconnue: {object_initialization}")
    plan.check()
    stem = paths.stem("scene")
    manifests = [TrainingManifest(
        name=stem, model_role="scene", images_file=paths.images(stem).name, iterations=SCENE_ITERATIONS,
        image_ids=plan.scene_train_ids, shuffle=True, initialization=SFM_POINTS)]
    for roi in rois:
        if roi.roi_id not in plan.object_train_ids:
            raise ValueError(f"ROI {roi.roi_id} absente du plan de partition")
        stem = paths.stem("object", roi.roi_id)
        manifests.append(TrainingManifest(
            name=stem, model_role="object", images_file=paths.images(stem).name,
            iterations=OBJECT_ITERATIONS, image_ids=plan.object_train_ids[roi.roi_id], shuffle=False,
            initialization=object_initialization, roi_id=roi.roi_id, densify_region=roi.box,
            densify_until_iteration=OBJECT_DENSIFY_UNTIL))
    _check_collisions(manifests)
    return manifests


def emit_baseline_manifests(all_ids: Sequence[int], test_ids: Sequence[int],
                            visible_ids: Mapping[str, Sequence[int]],
                            paths: ManifestPaths) -> List[TrainingManifest]:
    """
    Manifestes des deux références de comparaison : la scène entraînée sur
    toutes les images hors test, et chaque objet entraîné sur toutes ses
    images visibles hors test, sans sélection
    """
    test = set(test_ids)
    stem = paths.stem("full_scene")
    manifests = [TrainingManifest(
        name=stem, model_role="full_scene", images_file=paths.images(stem).name,
        iterations=BASELINE_ITERATIONS, image_ids=tuple(sorted(set(all_ids) - test)),
        shuffle=True, initialization=SFM_POINTS)]
    for roi_id, visible in visible_ids.items():
        stem = paths.stem("full_object", roi_id)
        manifests.append(TrainingManifest(
            name=stem, model_role="full_object", images_file=paths.images(stem).name,
            iterations=BASELINE_ITERATIONS, image_ids=tuple(sorted(set(visible) - test)),
            shuffle=True, initialization=SFM_POINTS, roi_id=roi_id))
    _check_collisions(manifests)
    return manifests


def write_manifests(paths: ManifestPaths, manifests: Sequence[TrainingManifest],
                    names: Mapping[int, str], test_ids: Sequence[int] = ()) -> None:
    """Écrit chaque manifeste, sa liste d'images et la liste de test"""
    _check_collisions(manifests)
    for m in manifests:
        write_name_list(paths.images(m.name), [names[i] for i in m.image_ids])
        atomic_write(paths.manifest(m.name), m.to_text())
    if test_ids:
        write_name_list(paths.output_dir / paths.TEST_LIST, [names[i] for i in test_ids])
    logger.info(f"{len(manifests)} manifeste(s) écrit(s) dans {paths.output_dir}")
