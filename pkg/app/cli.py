"""
Ligne de commande : une configuration = une étude

    python -m app.cli counterterms --config configs/quadratic_d3.yaml --lambdas 10,100,1000,10000
    python -m app.cli schemes --n 3 --m 1
    python -m app.cli schemes --census 4
"""
from typing import List, Optional
import argparse
import asyncio
import json
import logging
import sys
import time

from app.config import settings
from app.exceptions import ConfigError, RenormalisationError
from app.models.run_record import RunStatus, StudyKind
from app.services.scheme_service import scheme_service
from app.services.study_service import study_service

logger = logging.getLogger(__name__)

# Études dont le fichier peut recevoir une liste de cutoffs en option
SWEEPS = (StudyKind.COUNTERTERMS, StudyKind.CONVERGE, StudyKind.BOUNDS)


def cutoff_list(text: str) -> List[float]:
    """'10,100,1000' → [10.0, 100.0, 1000.0]"""
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"liste de cutoffs invalide : {text}")
    if not values:
        raise argparse.ArgumentTypeError("liste de cutoffs vide")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app.cli",
                                     description="Études de renormalisation itérative")
    subparsers = parser.add_subparsers(dest="study", required=True)
    for kind in StudyKind:
        sub = subparsers.add_parser(kind.value, help=f"étude {kind.value}")
        sub.add_argument("--config", help="fichier YAML de l'étude")
        sub.add_argument("--out", help="dossier des artefacts")
        sub.add_argument("--seed", type=int, help="graine (remplace celle du fichier)")
        sub.add_argument("--threads", type=int, help="points de Λ évalués en parallèle")
        sub.add_argument("--no-registry", action="store_true",
                         help="ne pas inscrire l'exécution au registre")
        if kind == StudyKind.SCHEMES:
            level = sub.add_mutually_exclusive_group()
            level.add_argument("--n", type=int, help="n+1 du niveau θ_{n+1,m}")
            level.add_argument("--census", type=int, metavar="N",
                               help="nombre de schémas par m pour n+1 = N")
            sub.add_argument("--m", type=int, help="restreindre à un seul m")
        if kind in SWEEPS:
            sub.add_argument("--lambdas", type=cutoff_list, metavar="L1,L2,...",
                             help="cutoffs (remplacent ceux du fichier)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {"study": args.study, "output_path": args.out, "seed": args.seed,
                 "threads": args.threads, "lambdas": getattr(args, "lambdas", None)}
    if args.study == StudyKind.SCHEMES.value:
        overrides["n"] = args.census if args.census is not None else args.n
        overrides["m"] = args.m
    return overrides


def _print_schemes(result, census):
    """Schémas en lignes JSON, ou la table de recensement"""
    if census is not None:
        print(json.dumps(census.model_dump(mode="json"), ensure_ascii=False))
        return
    for row in result.tables["schemes"]:
        print(json.dumps(row, ensure_ascii=False))


def _record(config, status: RunStatus, wall_time: float, message: Optional[str] = None):
    try:
        asyncio.run(study_service.record_run(config, status, wall_time, message))
    except Exception as exc:
        logger.warning(f"Registre des exécutions indisponible : {exc}")


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=settings.LOG_LEVEL,
                        format="%(asctime)s %(levelname)s %(name)s : %(message)s")
    args = build_parser().parse_args(argv)
    config = None
    start = time.perf_counter()
    try:
        census = None
        if getattr(args, "census", None) is not None:
            if args.m is not None:
                raise ConfigError("--census et --m sont incompatibles", "m")
            census = scheme_service.census(args.census)
        config = study_service.load_config(args.config, _overrides(args))
        manifest, result = study_service.run_study(config)
        if config.study == StudyKind.SCHEMES:
            _print_schemes(result, census)
    except RenormalisationError as exc:
        logger.error(f"Échec de l'étude {args.study} : {exc}")
        print(json.dumps(exc.to_dict(), ensure_ascii=False))
        if config is not None and not args.no_registry:
            _record(config, RunStatus.FAILED, time.perf_counter() - start, str(exc))
        return 2
    except Exception as exc:
        logger.exception(f"Erreur inattendue dans l'étude {args.study}")
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, ensure_ascii=False))
        return 1

    if not args.no_registry:
        _record(config, RunStatus.SUCCEEDED, manifest.wall_time)
    if config.study != StudyKind.SCHEMES:
        print(manifest.model_dump_json(indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
