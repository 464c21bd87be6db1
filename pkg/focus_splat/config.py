"""
Configuration du pipeline : fichier texte de lignes `section.clé: valeur`.

Exemple :
    model.path: sparse/0
    pipeline.seed: 7
    roi.coffret.min: -0.5 -0.5 0
    roi.coffret.max: 0.5 0.5 0.4
    roi.coffret.select_count: 150
"""
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from focus_splat.errors import ConfigError
from focus_splat.geometry import DEFAULT_VOXEL_GRID, DEFAULT_WEIGHTS, Aabb, FeatureMode, RoiSpec
from focus_splat.io_utils.textfiles import parse_bool, parse_key_values, parse_vector
from focus_splat.partition import DEFAULT_RETAIN_RATIO, INITIALIZATIONS, SCENE_CHECKPOINT

DEFAULT_TEST_FRACTION = 21 / 335
DEFAULT_SELECT_COUNT = 150
DEFAULT_OUTPUT = "output"
MODEL_FORMATS = ("auto", "binary", "text")
POLICIES = ("reject", "first_wins")

_ROI_KEY = re.compile(r"^roi\.([A-Za-z0-9_-]+)\.([a-z_]+)$")
_ROI_FIELDS = ("min", "max", "select_count", "train_count", "feature_mode", "voxel_grid", "weights", "seed")


@dataclass(frozen=True)
class PipelineConfig:
    model_path: Path
    model_format: str = "auto"
    output: Path = Path(DEFAULT_OUTPUT)
    seed: int = 0
    test_fraction: float = DEFAULT_TEST_FRACTION
    retain_ratio: float = DEFAULT_RETAIN_RATIO
    object_initialization: str = SCENE_CHECKPOINT
    baselines: bool = False
    beta: float = 1.0
    compose_policy: str = "reject"
    rois: Tuple[RoiSpec, ...] = ()
    train_counts: Dict[str, int] = field(default_factory=dict)

    def roi(self, roi_id: str) -> RoiSpec:
        for roi in self.rois:
            if roi.roi_id == roi_id:
                return roi
        raise ConfigError(f"ROI inconnue: {roi_id}")

    def train_count(self, roi_id: str) -> Optional[int]:
        return self.train_counts.get(roi_id)

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Remplace la graine du pipeline et celle de chaque ROI"""
        return replace(self, seed=seed, rois=tuple(replace(r, seed=seed) for r in self.rois))


def _number(conv, key: str, value: str, line: int):
    try:
        return conv(value)
    except ValueError:
        raise ConfigError(f"valeur invalide pour {key}: {value!r}", line) from None


def parse_config(text: str, base_dir: Union[str, Path] = ".") -> PipelineConfig:
    """
    Analyse le texte d'une configuration

    Les chemins relatifs sont résolus depuis `base_dir`.

    Raises:
        ConfigError: Clé inconnue ou dupliquée, valeur invalide, ROI
            incomplète, chemins confondus
    """
    base_dir = Path(base_dir)
    values: Dict[str, object] = {}
    rois: Dict[str, Dict[str, Tuple[int, str]]] = {}

    for line, key, value in parse_key_values(text):
        match = _ROI_KEY.match(key)
        if match:
            roi_id, name = match.groups()
            if name not in _ROI_FIELDS:
                raise ConfigError(f"clé de ROI inconnue {key!r}", line)
            rois.setdefault(roi_id, {})[name] = (line, value)
        elif key == "model.path":
            values["model_path"] = base_dir / value
        elif key == "model.format":
            if value not in MODEL_FORMATS:
                raise ConfigError(f"format de modèle inconnu {value!r}", line)
            values["model_format"] = value
        elif key == "pipeline.output":
            values["output"] = base_dir / value
        elif key == "pipeline.seed":
            values["seed"] = _number(int, key, value, line)
        elif key == "pipeline.test_fraction":
            values["test_fraction"] = _number(float, key, value, line)
            if not 0.0 < values["test_fraction"] < 1.0:
                raise ConfigError("pipeline.test_fraction doit être dans ]0, 1[", line)
        elif key == "pipeline.retain_ratio":
            values["retain_ratio"] = _number(float, key, value, line)
            if not 0.0 <= values["retain_ratio"] <= 1.0:
                raise ConfigError("pipeline.retain_ratio doit être dans [0, 1]", line)
        elif key == "pipeline.object_initialization":
            if value not in INITIALIZATIONS:
                raise ConfigError(f"initialisation inconnue {value!r}", line)
            values["object_initialization"] = value
        elif key == "pipeline.baselines":
            values["baselines"] = parse_bool(value, line)
        elif key == "selection.beta":
            values["beta"] = _number(float, key, value, line)
        elif key == "compose.policy":
            if value not in POLICIES:
                raise ConfigError(f"politique de composition inconnue {value!r}", line)
            values["compose_policy"] = value
        else:
            raise ConfigError(f"clé inconnue {key!r}", line)

    if "model_path" not in values:
        raise ConfigError("model.path manquant")
    values.setdefault("output", base_dir / DEFAULT_OUTPUT)
    if Path(values["model_path"]).resolve() == Path(values["output"]).resolve():
        raise ConfigError("model.path et pipeline.output désignent le même dossier")

    seed = values.get("seed", 0)
    specs = []
    train_counts = {}
    for roi_id, entries in rois.items():
        spec, train_count = _roi_from_entries(roi_id, entries, seed)
        specs.append(spec)
        if train_count is not None:
            train_counts[roi_id] = train_count
    return PipelineConfig(rois=tuple(specs), train_counts=train_counts, **values)


def _roi_from_entries(roi_id: str, entries: Dict[str, Tuple[int, str]], seed: int) -> Tuple[RoiSpec, Optional[int]]:
    for corner in ("min", "max"):
        if corner not in entries:
            raise ConfigError(f"ROI {roi_id}: roi.{roi_id}.{corner} manquant")

    def get(name: str, conv, default):
        if name not in entries:
            return default
        line, value = entries[name]
        return _number(conv, f"roi.{roi_id}.{name}", value, line)

    try:
        box = Aabb(parse_vector(entries["min"][1], 3, entries["min"][0]),
                   parse_vector(entries["max"][1], 3, entries["max"][0]))
        weights = DEFAULT_WEIGHTS
        if "weights" in entries:
            weights = parse_vector(entries["weights"][1], 3, entries["weights"][0])
        spec = RoiSpec(
            roi_id=roi_id, box=box,
            select_count=get("select_count", int, DEFAULT_SELECT_COUNT),
            feature_mode=FeatureMode(get("feature_mode", str, FeatureMode.NINE.value)),
            voxel_grid=get("voxel_grid", int, DEFAULT_VOXEL_GRID),
            weights=weights,
            seed=get("seed", int, seed))
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e

    train_count = get("train_count", int, None)
    if train_count is not None and not 0 <= train_count <= spec.select_count:
        raise ConfigError(f"ROI {roi_id}: train_count hors de [0, {spec.select_count}]")
    return spec, train_count


def load_config(path: Union[str, Path]) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"configuration illisible: {e}") from e
    return parse_config(text, path.parent)
