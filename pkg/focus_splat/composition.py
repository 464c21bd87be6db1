"""
Composition scène-objets : les gaussiennes de la scène dont le centre est
dans la boîte d'une ROI sont remplacées par les gaussiennes de l'objet
situées dans cette même boîte.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from focus_splat.errors import OverlapError
from focus_splat.geometry import Aabb
from focus_splat.io_utils.textfiles import format_key_values
from focus_splat.splat_io import SplatSet

logger = logging.getLogger(__name__)


class OverlapPolicy(str, Enum):
    REJECT = "reject"
    FIRST_WINS = "first_wins"


@dataclass(frozen=True)
class RoiCounts:
    roi_id: str
    scene_removed: int
    object_inserted: int
    scene_in_box: int
    merged_in_box: int


@dataclass(frozen=True)
class CompositionReport:
    scene_in: int
    merged_out: int
    rois: Tuple[RoiCounts, ...]

    def check(self) -> None:
        expected = self.scene_in - sum(r.scene_removed for r in self.rois) \
            + sum(r.object_inserted for r in self.rois)
        if expected != self.merged_out:
            raise ValueError(f"Bilan incohérent: {expected} attendues, {self.merged_out} produites")

    def to_text(self) -> str:
        pairs = [("scene_in", self.scene_in), ("merged_out", self.merged_out)]
        for r in self.rois:
            pairs += [(f"roi.{r.roi_id}.scene_in_box", r.scene_in_box),
                      (f"roi.{r.roi_id}.scene_removed", r.scene_removed),
                      (f"roi.{r.roi_id}.object_inserted", r.object_inserted),
                      (f"roi.{r.roi_id}.merged_in_box", r.merged_in_box)]
        return format_key_values(pairs)


def filter_in_box(splats: SplatSet, box: Aabb) -> Tuple[SplatSet, SplatSet]:
    """
    Returns:
        Tuple[SplatSet, SplatSet]: (centres dans la boîte fermée, les autres),
            ordre d'origine conservé
    """
    inside = box.contains(splats.positions())
    return splats.subset(inside), splats.subset(~inside)


def count_in_box(splats: SplatSet, box: Aabb) -> int:
    return int(box.contains(splats.positions()).sum())


def check_overlaps(boxes: Sequence[Tuple[str, Aabb]]) -> None:
    """
    Raises:
        OverlapError: Pour la première paire de boîtes qui se touchent
    """
    for i, (id_a, a) in enumerate(boxes):
        for id_b, b in boxes[i + 1:]:
            if a.intersects(b):
                raise OverlapError(f"Les boîtes des ROI {id_a} et {id_b} se chevauchent")


def compose(scene: SplatSet, objects: Sequence[Tuple[str, SplatSet, Aabb]],
            policy: OverlapPolicy = OverlapPolicy.REJECT,
            workers: int = 1) -> Tuple[SplatSet, CompositionReport]:
    """
    Remplace, boîte par boîte, les gaussiennes de la scène par celles des objets

    Sortie : gaussiennes de la scène hors de toutes les boîtes, puis pour
    chaque ROI dans l'ordre donné, celles de l'objet situées dans sa boîte.
    Avec `first_wins`, une région déjà revendiquée par une ROI précédente
    est retirée des suivantes.

    Args:
        scene: Les gaussiennes de la scène
        objects: (roi_id, gaussiennes de l'objet, boîte) par ROI
        policy: Traitement des boîtes qui se chevauchent
        workers: Parallélisme du filtrage de la scène par ROI

    Raises:
        OverlapError: Boîtes qui se chevauchent avec la politique `reject`
        ValueError: Degrés SH différents
    """
    policy = OverlapPolicy(policy)
    for roi_id, splats, _ in objects:
        if splats.sh_degree != scene.sh_degree:
            raise ValueError(f"ROI {roi_id}: degré SH {splats.sh_degree} différent de la scène ({scene.sh_degree})")
    if policy is OverlapPolicy.REJECT:
        check_overlaps([(roi_id, box) for roi_id, _, box in objects])

    positions = scene.positions()
    boxes = [box for _, _, box in objects]
    if workers > 1 and len(boxes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            in_box = list(pool.map(lambda b: b.contains(positions), boxes))
    else:
        in_box = [b.contains(positions) for b in boxes]

    claimed = np.zeros(len(scene), dtype=bool)
    parts: List[SplatSet] = []
    counts: List[Tuple[str, int, int, int]] = []
    for k, (roi_id, splats, box) in enumerate(objects):
        removed = in_box[k] & ~claimed
        claimed |= removed
        object_positions = splats.positions()
        keep = box.contains(object_positions)
        for earlier in boxes[:k]:
            keep &= ~earlier.contains(object_positions)
        parts.append(splats.subset(keep))
        counts.append((roi_id, int(removed.sum()), int(keep.sum()), int(in_box[k].sum())))

    merged = SplatSet.concatenate([scene.subset(~claimed)] + parts, scene.sh_degree)
    merged_positions = merged.positions()
    report = CompositionReport(len(scene), len(merged), tuple(
        RoiCounts(roi_id, removed, inserted, scene_in_box, int(box.contains(merged_positions).sum()))
        for (roi_id, removed, inserted, scene_in_box), box in zip(counts, boxes)))
    report.check()
    logger.info(f"Composition: {report.scene_in} -> {report.merged_out} gaussiennes "
                f"({len(objects)} ROI, politique {policy.value})")
    return merged, report
