"""
Métriques d'image restreintes à une ROI : masque du polygone projeté de la
boîte, PSNR et SSIM calculés sur les seuls pixels du masque.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import imageio.v2 as imageio
import numpy as np
from skimage.metrics import structural_similarity

from focus_splat.colmap_io import CameraIntrinsics, PosedImage, SfmModel
from focus_splat.geometry import Aabb, projected_aabb
from focus_splat.io_utils.textfiles import format_real

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11  # rayon 5 pour sigma 1.5 et une troncature à 3.5 sigma


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Image RVB, échantillons réels dans [0, 1], tableau (hauteur, largeur, 3)"""
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 3 or samples.shape[2] != 3:
            raise ValueError(f"Image RVB attendue, forme {samples.shape}")
        if not np.all(np.isfinite(samples)) or samples.min(initial=0.0) < 0.0 or samples.max(initial=0.0) > 1.0:
            raise ValueError("Échantillons non finis ou hors de [0, 1]")
        object.__setattr__(self, "samples", samples)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True, eq=False)
class RoiMask:
    bits: np.ndarray

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


def polygon_mask(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    """Pixels dont le centre (col + 0.5, ligne + 0.5) est dans le polygone convexe fermé"""
    bits = np.zeros((height, width), dtype=bool)
    v = np.asarray(vertices, dtype=np.float64)
    c0 = max(int(math.floor(v[:, 0].min() - 0.5)), 0)
    c1 = min(int(math.ceil(v[:, 0].max() - 0.5)), width - 1)
    r0 = max(int(math.floor(v[:, 1].min() - 0.5)), 0)
    r1 = min(int(math.ceil(v[:, 1].max() - 0.5)), height - 1)
    if c1 < c0 or r1 < r0:
        return bits
    x, y = np.meshgrid(np.arange(c0, c1 + 1) + 0.5, np.arange(r0, r1 + 1) + 0.5)
    inside = np.ones(x.shape, dtype=bool)
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0])
        inside &= cross >= -1e-9
    bits[r0:r1 + 1, c0:c1 + 1] = inside
    return bits


def mask_from_aabb(intrinsics: CameraIntrinsics, pose: PosedImage, box: Aabb,
                   width: int, height: int) -> RoiMask:
    """
    Masque du polygone projeté de la boîte ; vide si la boîte n'est pas vue
    ou si son polygone ne couvre aucun centre de pixel

    Si (width, height) diffère de la taille calibrée, les paramètres internes
    sont mis à l'échelle.
    """
    if (width, height) != (intrinsics.width, intrinsics.height):
        intrinsics = intrinsics.scaled(width, height)
    polygon = projected_aabb(intrinsics, pose, box)
    if polygon is None:
        return RoiMask(np.zeros((height, width), dtype=bool))
    bits = polygon_mask(polygon.vertices, width, height)
    if not bits.any():
        logger.debug(f"Image {pose.name}: boîte projetée sous le pixel, traitée comme non vue")
    return RoiMask(bits)


def _check_pair(a: RasterImage, b: RasterImage, mask: RoiMask) -> None:
    if a.samples.shape != b.samples.shape:
        raise ValueError(f"Dimensions différentes: {a.width}x{a.height} et {b.width}x{b.height}")
    if (mask.width, mask.height) != (a.width, a.height):
        raise ValueError("Le masque ne correspond pas aux images")
    if mask.count() == 0:
        raise ValueError("Masque vide")


def masked_psnr(a: RasterImage, b: RasterImage, mask: RoiMask) -> float:
    """
    PSNR (crête 1.0) sur les pixels du masque, plafonné à 100 dB

    Raises:
        ValueError: Masque vide ou dimensions différentes
    """
    _check_pair(a, b, mask)
    diff = a.samples[mask.bits] - b.samples[mask.bits]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def ssim_map(a: RasterImage, b: RasterImage) -> np.ndarray:
    """
    Carte SSIM (hauteur, largeur, 3) : fenêtre gaussienne centrée sur chaque
    pixel, moments filtrés avec bords réfléchis, C1 = 0.01², C2 = 0.03²
    """
    _, full = structural_similarity(
        a.samples, b.samples, gaussian_weights=True, sigma=SSIM_SIGMA, use_sample_covariance=False,
        data_range=1.0, channel_axis=-1, full=True,
    )
    return full


def masked_ssim(a: RasterImage, b: RasterImage, mask: RoiMask) -> float:
    """
    SSIM moyen sur les fenêtres dont le pixel central est masqué, moyenné
    sur les trois canaux

    Raises:
        ValueError: Masque vide, dimensions différentes, image plus petite
            que la fenêtre
    """
    _check_pair(a, b, mask)
    if a.width < SSIM_WINDOW or a.height < SSIM_WINDOW:
        raise ValueError(f"Image {a.width}x{a.height} plus petite que la fenêtre {SSIM_WINDOW}x{SSIM_WINDOW}")
    return float(np.mean(ssim_map(a, b)[mask.bits]))


def load_png(path: Union[str, Path]) -> RasterImage:
    """Lit une image 8 ou 16 bits (gris ou RVB(A)) ramenée dans [0, 1]"""
    data = imageio.imread(path)
    if np.issubdtype(data.dtype, np.integer):
        samples = data.astype(np.float64) / np.iinfo(data.dtype).max
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = np.repeat(samples[:, :, None], 3, axis=2)
    elif samples.shape[2] in (1, 2):
        samples = np.repeat(samples[:, :, :1], 3, axis=2)
    else:
        samples = samples[:, :, :3]
    return RasterImage(samples)


@dataclass(frozen=True)
class EvaluationRow:
    image: str
    psnr_db: float
    ssim: float
    masked_pixel_count: int


def _find_image(folder: Path, name: str) -> Path:
    for candidate in (folder / name, (folder / name).with_suffix(".png")):
        if candidate.is_file():
            return candidate
    raise ValueError(f"Image {name} absente de {folder}")


def evaluate_images(model: SfmModel, box: Aabb, names: Sequence[str], rendered_dir: Union[str, Path],
                    truth_dir: Union[str, Path], workers: int = 1) -> List[EvaluationRow]:
    """
    Évalue chaque paire (rendu, vérité terrain) sur le masque de la ROI

    Les images où la boîte ne couvre aucun pixel sont ignorées (journalisées).

    Raises:
        ValueError: Image absente ou inconnue du modèle, dimensions différentes
    """
    by_name = model.image_by_name()

    def evaluate(name: str) -> Optional[EvaluationRow]:
        if name not in by_name:
            raise ValueError(f"Image {name} inconnue du modèle")
        image_id = by_name[name]
        rendered = load_png(_find_image(Path(rendered_dir), name))
        truth = load_png(_find_image(Path(truth_dir), name))
        mask = mask_from_aabb(model.intrinsics_of(image_id), model.images[image_id], box,
                              truth.width, truth.height)
        if mask.count() == 0:
            logger.warning(f"{name}: ROI hors du champ, image ignorée")
            return None
        try:
            return EvaluationRow(name, masked_psnr(rendered, truth, mask), masked_ssim(rendered, truth, mask),
                                 mask.count())
        except ValueError as e:
            raise ValueError(f"{name}: {e}") from e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, names))
    else:
        rows = [evaluate(n) for n in names]
    rows = [r for r in rows if r is not None]
    logger.info(f"{len(rows)} paire(s) évaluée(s) sur {len(names)}")
    return rows


def mean_row(rows: Sequence[EvaluationRow], label: str = "mean") -> EvaluationRow:
    if not rows:
        raise ValueError("Aucune ligne à moyenner")
    return EvaluationRow(label, float(np.mean([r.psnr_db for r in rows])), float(np.mean([r.ssim for r in rows])),
                         sum(r.masked_pixel_count for r in rows))


def results_table(rows: Sequence[EvaluationRow]) -> str:
    """CSV (image, psnr_db, ssim, masked_pixel_count) suivi de la ligne moyenne"""
    lines = [f"# psnr_db plafonné à {PSNR_CAP_DB:g} dB", "image,psnr_db,ssim,masked_pixel_count"]
    for r in list(rows) + ([mean_row(rows)] if rows else []):
        lines.append(f"{r.image},{format_real(r.psnr_db)},{format_real(r.ssim)},{r.masked_pixel_count}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ImprovementSummary:
    mean_delta_db: float
    peak_delta_db: float
    peak_image: Optional[str]

    def to_text(self) -> str:
        return (f"mean_delta_db: {format_real(self.mean_delta_db)}\n"
                f"peak_delta_db: {format_real(self.peak_delta_db)}\n"
                f"peak_image: {self.peak_image}\n")


def improvement_summary(baseline: Sequence[EvaluationRow], method: Sequence[EvaluationRow]) -> ImprovementSummary:
    """
    Gain de PSNR de la méthode sur la référence : moyenne et pic par image

    Raises:
        ValueError: Ensembles d'images différents
    """
    base = {r.image: r.psnr_db for r in baseline}
    ours = {r.image: r.psnr_db for r in method}
    if set(base) != set(ours):
        raise ValueError(f"Images non appariées: {sorted(set(base) ^ set(ours))[:10]}")
    if not base:
        raise ValueError("Aucune image à comparer")
    deltas: List[Tuple[float, str]] = sorted(((ours[n] - base[n], n) for n in base), key=lambda d: (-d[0], d[1]))
    return ImprovementSummary(float(np.mean([d for d, _ in deltas])), deltas[0][0], deltas[0][1])
