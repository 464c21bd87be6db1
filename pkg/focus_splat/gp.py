"""
Régression par processus gaussien servant de substitut au gain de score
d'une vue : noyau exponentiel quadratique, factorisation de Cholesky et
acquisition par borne supérieure de confiance (UCB).
"""
import logging
import threading
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from focus_splat.errors import GpFactorizationError

logger = logging.getLogger(__name__)

LENGTHSCALE = 1.0
SIGNAL_VARIANCE_FLOOR = 1e-6
NOISE_RATIO = 1e-4
# Jitter ajouté à la diagonale, relatif à la variance du signal
JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def se_kernel(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray, signal_variance: float) -> np.ndarray:
    """k(a, b) = σ_f² exp(-½ Σ ((a_d - b_d) / ℓ_d)²)"""
    sq = cdist(a / lengthscales, b / lengthscales, "sqeuclidean")
    return signal_variance * np.exp(-0.5 * sq)


class GpPosterior:
    """
    État a posteriori d'un processus gaussien de moyenne a priori nulle

    Attributes:
        inputs: Entrées d'apprentissage (n, d), standardisées
        targets: Gains observés (n,)
        lengthscales: Longueurs de corrélation par dimension
        signal_variance: σ_f²
        noise_variance: σ_n²
        factor: Facteur de Cholesky de K + (σ_n² + jitter) I (format cho_factor)
        jitter: Jitter retenu lors de la factorisation
        noise_free: Si vrai, une entrée d'apprentissage renvoie exactement sa
            cible avec une variance nulle (interpolation exacte)
        clamp_count: Nombre de variances négatives ramenées à 0
    """

    def __init__(self, inputs: np.ndarray, targets: np.ndarray, lengthscales: np.ndarray,
                 signal_variance: float, noise_variance: float, factor, jitter: float,
                 noise_free: bool = False, ids: Optional[Sequence[int]] = None):
        self.inputs = inputs
        self.targets = targets
        self.lengthscales = lengthscales
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance
        self.factor = factor
        self.jitter = jitter
        self.noise_free = noise_free
        self.alpha = linalg.cho_solve(factor, targets)
        self.clamp_count = 0
        self._lock = threading.Lock()
        if ids is None:
            ids = range(len(targets))
        self.rows = {int(i): j for j, i in enumerate(ids)} if noise_free else {}
        if len(self.rows) != (len(targets) if noise_free else 0):
            raise ValueError("Identifiants d'apprentissage dupliqués ou en nombre incorrect")

    @property
    def dimension(self) -> int:
        return self.inputs.shape[1]

    def record_clamps(self, count: int) -> None:
        if count:
            with self._lock:
                self.clamp_count += count
            logger.debug(f"{count} variance(s) négative(s) ramenée(s) à 0")


def gp_fit(inputs: np.ndarray, targets: Sequence[float], lengthscale: float = LENGTHSCALE,
           noise_free: bool = False, ids: Optional[Sequence[int]] = None) -> GpPosterior:
    """
    Ajuste un processus gaussien aux paires (entrée, gain)

    σ_f² est la moyenne des carrés des cibles (plancher 1e-6) : c'est la
    variance empirique des gains sous l'a priori de moyenne nulle, et non leur
    variance centrée. σ_n² = 1e-4 σ_f².
    En cas d'échec de Cholesky, le jitter est augmenté de 1e-10 à 1e-4.

    Args:
        inputs: Les entrées (n, d), standardisées
        targets: Les cibles (n,)
        lengthscale: ℓ commun à toutes les dimensions
        noise_free: Interpolation exacte (pas de bruit d'observation)
        ids: Identifiants des entrées, clés de l'interpolation exacte
            (par défaut leurs positions)

    Returns:
        GpPosterior: L'état a posteriori

    Raises:
        ValueError: Aucune paire d'apprentissage
        GpFactorizationError: Matrice non définie positive au jitter maximal
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(y) == 0:
        raise ValueError("Au moins une paire d'apprentissage est requise")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} entrées pour {len(y)} cibles")

    lengthscales = np.full(x.shape[1], float(lengthscale))
    signal_variance = max(float(np.mean(y * y)), SIGNAL_VARIANCE_FLOOR)
    noise_variance = 0.0 if noise_free else NOISE_RATIO * signal_variance
    gram = se_kernel(x, x, lengthscales, signal_variance)
    gram[np.diag_indices_from(gram)] += noise_variance

    for level in JITTER_LEVELS:
        jitter = level * signal_variance
        try:
            factor = linalg.cho_factor(gram + jitter * np.eye(len(y)), lower=True)
        except linalg.LinAlgError:
            continue
        if level:
            logger.debug(f"Cholesky obtenu avec un jitter relatif de {level:g}")
        return GpPosterior(x, y, lengthscales, signal_variance, noise_variance, factor, jitter, noise_free, ids)

    condition = float(np.linalg.cond(gram))
    raise GpFactorizationError(
        f"Factorisation de Cholesky impossible malgré un jitter de {JITTER_LEVELS[-1]:g} "
        f"(conditionnement estimé {condition:.3e})", condition)


def gp_predict_many(gp: GpPosterior, points: np.ndarray,
                    ids: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Moyennes et variances a posteriori pour un lot de points (m, d)

    En mode sans bruit, un point dont l'identifiant est celui d'une entrée
    d'apprentissage reçoit exactement sa cible ; `ids` vaut par défaut les
    positions des points.

    Raises:
        ValueError: Dimension différente de celle de l'ajustement
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != gp.dimension:
        raise ValueError(f"Dimension {points.shape[1]} incompatible avec le modèle ajusté ({gp.dimension})")
    cross = se_kernel(points, gp.inputs, gp.lengthscales, gp.signal_variance)
    mean = cross @ gp.alpha
    variance = gp.signal_variance - np.einsum("ij,ji->i", cross, linalg.cho_solve(gp.factor, cross.T))
    negative = variance < 0.0
    gp.record_clamps(int(negative.sum()))
    variance = np.where(negative, 0.0, variance)

    if gp.noise_free:
        if ids is None:
            ids = range(len(points))
        for i, point_id in enumerate(ids):
            j = gp.rows.get(int(point_id))
            if j is not None:
                mean[i] = gp.targets[j]
                variance[i] = 0.0
    return mean, variance


def gp_predict(gp: GpPosterior, x: np.ndarray) -> Tuple[float, float]:
    """
    Returns:
        Tuple[float, float]: (moyenne, variance >= 0) en x
    """
    mean, variance = gp_predict_many(gp, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return float(mean[0]), float(variance[0])


def ucb(mean: np.ndarray, variance: np.ndarray, beta: float) -> np.ndarray:
    """a(v) = μ(v) + β σ(v)"""
    return mean + beta * np.sqrt(variance)


def argmax_by_id(values: np.ndarray, ids: Sequence[int], tolerance: float = 1e-12) -> int:
    """
    Position du maximum ; les valeurs à moins de `tolerance` du maximum sont
    ex aequo et le plus petit identifiant l'emporte
    """
    values = np.asarray(values, dtype=np.float64)
    best = np.nanmax(values)
    tied = np.flatnonzero(values >= best - tolerance)
    ids = np.asarray(ids)
    return int(tied[np.argmin(ids[tied])])

