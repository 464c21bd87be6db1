"""
Interface en ligne de commande : `python -m focus_splat <commande>`.

Commandes : inspect, select, partition, compose, evaluate, synth.
Codes de sortie : 0 succès, 1 erreur de données, 2 erreur d'usage ou de
configuration. Chaque erreur est signalée par une ligne `error: ...`.
"""
import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from focus_splat import __version__
from focus_splat.colmap_io import SfmModel, read_model_dir, write_model_dir
from focus_splat.composition import OverlapPolicy, compose
from focus_splat.config import PipelineConfig, load_config
from focus_splat.errors import ConfigError, IntegrityError, format_errors
from focus_splat.evaluation import evaluate_images, improvement_summary, results_table
from focus_splat.geometry import RoiSpec, in_box_point_ids, roi_visibility
from focus_splat.io_utils.textfiles import atomic_write, read_name_list, write_name_list
from focus_splat.partition import (
    ManifestPaths, build_partition, emit_baseline_manifests, emit_manifests, hold_out_test, write_manifests,
)
from focus_splat.selection import (
    MODES, SelectionResult, select_first_k, select_views, selection_names, trace_table,
)
from focus_splat.splat_io import read_splats_file, write_splats_file
from focus_splat.synthetic_scene import generate, generate_splats, load_recipe

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


@dataclass
class RoiPool:
    """Images d'une ROI : visibles, réservées au test, candidates"""
    roi: RoiSpec
    visibility: Dict[int, List[int]]
    test_ids: List[int]
    candidates: List[int]


def roi_pools(model: SfmModel, config: PipelineConfig) -> List[RoiPool]:
    """
    Réserve le test de chaque ROI parmi ses images visibles ; les candidats
    d'une ROI excluent les images de test de toutes les ROI
    """
    visibilities = [roi_visibility(model, roi.box) for roi in config.rois]
    tests = []
    for roi, visibility in zip(config.rois, visibilities):
        if not visibility:
            logger.warning(f"ROI {roi.roi_id}: aucune image ne voit la boîte")
            tests.append([])
            continue
        test, _ = hold_out_test(list(visibility), config.test_fraction)
        tests.append(test)
    all_test = set().union(*tests) if tests else set()
    return [RoiPool(roi, vis, test, [i for i in sorted(vis) if i not in all_test])
            for roi, vis, test in zip(config.rois, visibilities, tests)]


def _load(config: PipelineConfig, workers: int) -> SfmModel:
    return read_model_dir(config.model_path, config.model_format, workers)


def _map_rois(func: Callable, items: Sequence, workers: int) -> List:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def _selection_file(out: Path, roi_id: str) -> Path:
    return out / f"selection_{ManifestPaths.stem('roi', roi_id)}.txt"


def cmd_inspect(args, config: PipelineConfig) -> int:
    model = _load(config, args.workers)
    print(f"images: {len(model.images)}")
    print(f"points: {len(model.points)}")
    for pool in roi_pools(model, config):
        roi_id = pool.roi.roi_id
        print(f"roi.{roi_id}.visible_images: {len(pool.visibility)}")
        print(f"roi.{roi_id}.points_in_box: {len(in_box_point_ids(model, pool.roi.box))}")
        print(f"roi.{roi_id}.test_images: {len(pool.test_ids)}")
        print(f"roi.{roi_id}.candidates: {len(pool.candidates)}")
    return EXIT_OK


def cmd_select(args, config: PipelineConfig) -> int:
    model = _load(config, args.workers)
    pools = roi_pools(model, config)

    def run(pool: RoiPool) -> SelectionResult:
        return select_views(model, pool.roi, pool.candidates, args.mode, config.beta,
                            workers=1, visibility=pool.visibility)

    for pool, result in zip(pools, _map_rois(run, pools, args.workers)):
        write_name_list(_selection_file(args.out, pool.roi.roi_id), selection_names(result, model))
        atomic_write(args.out / f"trace_{ManifestPaths.stem('roi', pool.roi.roi_id)}.csv", trace_table(result))
        final = result.trace[-1].score.total if result.trace else 0.0
        flag = " (lot tronqué)" if result.truncated else ""
        print(f"{pool.roi.roi_id}: {len(result)} vues ({args.mode}), score final {final:.4f}{flag}")
    return EXIT_OK


def cmd_partition(args, config: PipelineConfig) -> int:
    model = _load(config, args.workers)
    by_name = model.image_by_name()
    pools = roi_pools(model, config)
    selections = {}
    for pool in pools:
        path = _selection_file(args.out, pool.roi.roi_id)
        names = read_name_list(path)
        unknown = [n for n in names if n not in by_name]
        if unknown:
            raise ValueError(f"{path}: images inconnues {unknown[:10]}")
        ids = [by_name[n] for n in names]
        count = config.train_count(pool.roi.roi_id)
        if count is not None:
            stored = SelectionResult(pool.roi.roi_id, "file", tuple(ids), ())
            try:
                ids = select_first_k(stored, count)
            except ValueError as e:
                raise ValueError(f"{path}: train_count {count} pour {len(ids)} vues sélectionnées ({e})") from None
        selections[pool.roi.roi_id] = ids

    test_ids = sorted(set().union(*(p.test_ids for p in pools))) if pools else []
    plan = build_partition(sorted(model.images), test_ids, selections, config.retain_ratio)
    paths = ManifestPaths(args.out)
    manifests = emit_manifests(plan, config.rois, paths, config.object_initialization)
    if config.baselines:
        manifests += emit_baseline_manifests(plan.all_ids, plan.test_ids,
                                             {p.roi.roi_id: sorted(p.visibility) for p in pools}, paths)
    names = {i: img.name for i, img in model.images.items()}
    write_manifests(paths, manifests, names, plan.test_ids)
    for m in manifests:
        print(f"{m.name}: {len(m.image_ids)} images, {m.iterations} itérations")
    return EXIT_OK


def cmd_compose(args, config: PipelineConfig) -> int:
    scene = read_splats_file(args.scene)
    objects = []
    for spec in args.object:
        roi_id, sep, path = spec.partition("=")
        if not sep:
            raise ConfigError(f"--object attend ROI=FICHIER, reçu {spec!r}")
        objects.append((roi_id, read_splats_file(path), config.roi(roi_id).box))
    policy = OverlapPolicy.FIRST_WINS if args.allow_overlap else OverlapPolicy(config.compose_policy)
    merged, report = compose(scene, objects, policy, args.workers)
    write_splats_file(args.out / "composed.ply", merged)
    atomic_write(args.out / "composition.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def _rendered_dir(root: Path, roi_id: str) -> Path:
    sub = root / roi_id
    return sub if sub.is_dir() else root


def cmd_evaluate(args, config: PipelineConfig) -> int:
    model = _load(config, args.workers)
    for pool in roi_pools(model, config):
        roi_id = pool.roi.roi_id
        names = [model.images[i].name for i in pool.test_ids]
        rows = evaluate_images(model, pool.roi.box, names, _rendered_dir(args.rendered, roi_id),
                               args.truth, args.workers)
        stem = ManifestPaths.stem("roi", roi_id)
        atomic_write(args.out / f"evaluation_{stem}.csv", results_table(rows))
        print(f"{roi_id}:")
        print(results_table(rows), end="")
        if args.baseline is not None:
            baseline = evaluate_images(model, pool.roi.box, names, _rendered_dir(args.baseline, roi_id),
                                       args.truth, args.workers)
            summary = improvement_summary(baseline, rows)
            atomic_write(args.out / f"improvement_{stem}.txt", summary.to_text())
            print(summary.to_text(), end="")
    return EXIT_OK


def cmd_synth(args, config: Optional[PipelineConfig]) -> int:
    try:
        recipe = load_recipe(Path(args.recipe).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"recette illisible: {e}") from e
    if args.seed is not None:
        recipe = replace(recipe, seed=args.seed)
    model, truth = generate(recipe)
    write_model_dir(model, args.out, "binary")
    lines = [f"{model.images[i].name}: {' '.join(str(p) for p in truth[i])}" for i in sorted(truth)]
    atomic_write(args.out / "ground_truth.txt", "\n".join(lines) + "\n")
    print(f"{len(model.images)} images, {len(model.points)} points écrits dans {args.out}")
    if recipe.splats_in or recipe.splats_out:
        splats = generate_splats(recipe)
        write_splats_file(args.out / "scene.ply", splats)
        print(f"{len(splats)} gaussiennes ({recipe.splats_in} dans la boîte) écrites dans scene.ply")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="fichier de configuration")
    common.add_argument("--out", type=Path, help="dossier de sortie (remplace pipeline.output)")
    common.add_argument("--seed", type=int, help="graine (remplace celle de la configuration)")
    common.add_argument("--workers", type=int, default=1, help="nombre de fils de calcul")
    common.add_argument("-v", "--verbose", action="store_true", help="journalisation détaillée")

    parser = argparse.ArgumentParser(prog="focus_splat", description="Sélection de vues et composition 3DGS par ROI")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("inspect", parents=[common], help="résumé du modèle et des ROI")
    select = sub.add_parser("select", parents=[common], help="sélection des vues de chaque ROI")
    select.add_argument("--mode", choices=MODES, default="gp9")
    sub.add_parser("partition", parents=[common], help="listes d'images et manifestes d'entraînement")
    comp = sub.add_parser("compose", parents=[common], help="composition scène-objets")
    comp.add_argument("--scene", type=Path, required=True)
    comp.add_argument("--object", action="append", default=[], metavar="ROI=PLY")
    comp.add_argument("--allow-overlap", action="store_true", help="politique first_wins")
    ev = sub.add_parser("evaluate", parents=[common], help="PSNR et SSIM restreints aux ROI")
    ev.add_argument("--rendered", type=Path, required=True)
    ev.add_argument("--truth", type=Path, required=True)
    ev.add_argument("--baseline", type=Path, help="rendus de référence pour le gain de PSNR")
    synth = sub.add_parser("synth", parents=[common], help="scène synthétique")
    synth.add_argument("--recipe", type=Path, required=True)
    return parser


COMMANDS = {
    "inspect": cmd_inspect,
    "select": cmd_select,
    "partition": cmd_partition,
    "compose": cmd_compose,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers doit être >= 1", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = None
        if args.command == "synth":
            if args.out is None:
                raise ConfigError("synth exige --out")
        else:
            if args.config is None:
                raise ConfigError(f"{args.command} exige --config")
            config = load_config(args.config)
            if args.seed is not None:
                config = config.with_seed(args.seed)
            if args.out is None:
                args.out = config.output
        return COMMANDS[args.command](args, config)
    except ConfigError as e:
        print("\n".join(format_errors([e])), file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as e:
        print("\n".join(format_errors(e.violations)), file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as e:
        print("\n".join(format_errors([e])), file=sys.stderr)
        return EXIT_DATA
