"""
Service des études : chargement des configurations, exécution, artefacts
CSV/JSON, manifeste et registre des exécutions
"""
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple
import csv
import hashlib
import io
import json
import logging
import os
import platform
import tempfile
import time

import yaml
from pydantic import ValidationError

from app.database import add_run
from app.exceptions import ConfigError
from app.models.run_record import RunRecord, RunStatus, StudyKind
from app.schemas.run import RunConfig, RunManifest
from app.services.counterterm_service import counterterm_service
from app.services.exponent_service import exponent_service
from app.services.fock_service import Grid, fock_service
from app.services.model_service import model_service
from app.services.scheme_service import scheme_service

logger = logging.getLogger(__name__)

PACKAGES = ("numpy", "scipy", "pydantic", "pydantic-settings", "pyyaml", "sqlalchemy", "fastapi")

# Champs sans effet sur les résultats
NON_SEMANTIC = {"output_path", "threads"}


def format_number(value: Any) -> Any:
    """Flottants à 17 chiffres significatifs, le reste tel quel"""
    if isinstance(value, float):
        return f"{value:.17g}"
    return value


def config_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or None
    return ConfigError(f"Configuration invalide ({key}) : {first['msg']}", key)


class StudyResult:
    """Artefacts d'une étude avant écriture"""

    def __init__(self):
        self.tables: Dict[str, List[Dict[str, Any]]] = {}
        self.documents: Dict[str, Any] = {}

    def table(self, name: str, rows: List[Dict[str, Any]]):
        self.tables[name] = rows

    def document(self, name: str, payload: Any):
        self.documents[name] = payload


class StudyService:
    """Service d'exécution des études"""

    # Configuration
    def parse_config(self, data: Dict[str, Any]) -> RunConfig:
        try:
            return RunConfig.model_validate(data)
        except ValidationError as exc:
            error = config_error(exc)
            logger.error(str(error))
            raise error from exc

    def load_config(self, path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Lire un fichier YAML, appliquer les options de la ligne de commande, valider"""
        data: Dict[str, Any] = {}
        if path:
            try:
                with open(path, "r", encoding="utf-8") as handle:
                    loaded = yaml.safe_load(handle)
            except OSError as exc:
                logger.error(f"Configuration illisible : {path}")
                raise ConfigError(f"Configuration illisible : {path}") from exc
            except yaml.YAMLError as exc:
                logger.error(f"YAML invalide : {path}")
                raise ConfigError(f"YAML invalide : {exc}") from exc
            if loaded is not None and not isinstance(loaded, dict):
                raise ConfigError("La configuration doit être une table clé/valeur")
            data = loaded or {}
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == "study" and "study" in data and data["study"] != value:
                raise ConfigError(f"Le fichier décrit l'étude {data['study']}, pas {value}", "study")
            data[key] = value
        return self.parse_config(data)

    def config_hash(self, config: RunConfig) -> str:
        """SHA-256 du JSON canonique de la configuration validée"""
        payload = config.model_dump(mode="json", exclude=NON_SEMANTIC)
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # Études
    def _classify(self, config: RunConfig, result: StudyResult):
        scaling = model_service.scaling_report(config.model)
        report = model_service.check_model(config.model)
        result.document("classify", {"scaling": scaling.model_dump(mode="json", by_alias=True),
                                     "validation": report.model_dump(mode="json")})

    def _schemes(self, config: RunConfig, result: StudyResult):
        levels = [config.m] if config.m is not None else range(config.n + 1)
        rows = []
        for m in levels:
            for scheme in scheme_service.enumerate_schemes(config.n, m):
                rows.append({
                    "target_n": scheme.target_n, "target_m": scheme.target_m, "nu": scheme.nu,
                    "J": " ".join(map(str, scheme.J)), "I": " ".join(map(str, scheme.I)),
                    "L": " ".join(map(str, scheme.L)),
                    "scheme_sign": scheme_service.scheme_sign(scheme),
                    "expansion_sign": scheme_service.expansion_sign(scheme),
                    "tau_arity": scheme_service.tau_arity(scheme),
                })
        result.table("schemes", rows)
        document = {"n_plus_1": config.n, "total": len(rows)}
        if config.m is None and config.n <= 6:
            document["census"] = scheme_service.census(config.n).model_dump(mode="json")
        result.document("schemes", document)

    def _counterterms(self, config: RunConfig, result: StudyResult):
        model = model_service.validate_model(config.model)
        table = counterterm_service.sweep(model, config.lambdas, config.quadrature, config.threads)
        result.table("counterterms", [{"lambda": row.cutoff, "n": row.n, "value": row.value,
                                       "abs_error_estimate": row.abs_error_estimate}
                                      for row in table.rows()])
        result.table("totals", [{"lambda": cutoff, "E_lambda": total}
                                for cutoff, total in zip(table.lambdas, table.totals)])
        result.document("counterterms", table.model_dump(mode="json"))

    def _converge(self, config: RunConfig, result: StudyResult):
        model = model_service.validate_model(config.model)
        grid = Grid.from_spec(config.grid, model.d)
        table = fock_service.convergence_study(model, grid, config.lambdas, config.N_max,
                                               seed=config.seed, method=config.method,
                                               threads=config.threads)
        rows = []
        for row in table.rows:
            data = row.model_dump()
            rows.append({"lambda": data.pop("cutoff"), **data})
        result.table("converge", rows)
        result.document("converge", table.model_dump(mode="json"))

    def _oracle(self, config: RunConfig, result: StudyResult):
        model = model_service.validate_model(config.model)
        grid = Grid.from_spec(config.grid, model.d)
        rig = fock_service.build_rig(grid, config.N_max, model)
        cutoff = min(config.working_cutoff(), grid.max_radius)
        oracle = fock_service.oracle_check(rig, cutoff)
        identities = fock_service.rig_identities(rig, cutoff)
        renormalised = fock_service.assemble_renormalized_H(rig, cutoff)
        domain = fock_service.domain_identity_residual(rig, renormalised, config.domain_samples,
                                                       config.seed)
        resolvent = fock_service.resolvent_expansion_check(rig, model.n_star, cutoff, config.L_order)
        checks = oracle.checks + identities
        result.table("checks", [check.model_dump() for check in checks])
        result.document("oracle", {
            "oracle": oracle.model_dump(mode="json"),
            "identities": [check.model_dump(mode="json") for check in identities],
            "renormalised": renormalised.summary(),
            "domain_identity_residual": domain,
            "resolvent": resolvent.model_dump(mode="json"),
        })

    def _bounds(self, config: RunConfig, result: StudyResult):
        model = model_service.validate_model(config.model)
        grid = Grid.from_spec(config.grid, model.d)
        rig = fock_service.build_rig(grid, config.N_max, model)
        cutoff = min(config.working_cutoff(), grid.max_radius)
        report = fock_service.verify_operator_bounds(rig, cutoff, config.s_values,
                                                     config.lambdas or None)
        result.table("escalation", [step.model_dump() for step in report.escalation_witness])
        result.document("bounds", report.model_dump(mode="json"))

    def _exponents(self, config: RunConfig, result: StudyResult):
        model = model_service.validate_model(config.model)
        lemma = [exponent_service.verify_integral_lemma(model, s, t, config.lemma_a, config.lemma_b)
                 for s, t in config.lemma_pairs]
        stars = [exponent_service.verify_star_exponents(model, case, config.quadrature)
                 for case in config.star_cases]
        rows = []
        for report in lemma:
            for fit in (report.a_exponent, report.b_exponent):
                rows.append({"check": f"lemma s={report.s:g} t={report.t:g}", "parameter": fit.name,
                             "predicted": fit.predicted, "fitted": fit.fitted, "passed": fit.passed})
        for report in stars:
            rows.append({"check": f"star {report.case.value}", "parameter": "gain",
                         "predicted": report.predicted_gain, "fitted": report.fitted_gain,
                         "passed": report.passed})
        result.table("exponents", rows)
        result.document("exponents", {"lemma": [r.model_dump(mode="json") for r in lemma],
                                      "star": [r.model_dump(mode="json") for r in stars]})

    STUDIES = {
        StudyKind.CLASSIFY: _classify,
        StudyKind.SCHEMES: _schemes,
        StudyKind.COUNTERTERMS: _counterterms,
        StudyKind.CONVERGE: _converge,
        StudyKind.ORACLE: _oracle,
        StudyKind.BOUNDS: _bounds,
        StudyKind.EXPONENTS: _exponents,
    }

    def execute(self, config: RunConfig) -> StudyResult:
        result = StudyResult()
        self.STUDIES[config.study](self, config, result)
        return result

    # Artefacts
    def atomic_write(self, path: Path, content: str):
        """Écrire dans un fichier temporaire du même dossier puis renommer"""
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(content)
            os.replace(temporary, path)
        except BaseException:
            if os.path.exists(temporary):
                os.remove(temporary)
            raise

    def render_csv(self, rows: Sequence[Dict[str, Any]]) -> str:
        buffer = io.StringIO()
        if rows:
            fields = list(rows[0].keys())
            writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: format_number(value) for key, value in row.items()})
        return buffer.getvalue()

    def versions(self) -> Dict[str, str]:
        versions = {"python": platform.python_version()}
        for package in PACKAGES:
            try:
                versions[package] = metadata.version(package)
            except metadata.PackageNotFoundError:
                versions[package] = "absent"
        return versions

    def write_artifacts(self, config: RunConfig, result: StudyResult, wall_time: float) -> RunManifest:
        out = Path(config.output_path)
        artifacts: List[str] = []
        for name, rows in result.tables.items():
            self.atomic_write(out / f"{name}.csv", self.render_csv(rows))
            artifacts.append(f"{name}.csv")
        for name, payload in result.documents.items():
            self.atomic_write(out / f"{name}.json", json.dumps(payload, indent=2, sort_keys=True))
            artifacts.append(f"{name}.json")
        manifest = RunManifest(study=config.study, config_hash=self.config_hash(config), seed=config.seed,
                               wall_time=wall_time, versions=self.versions(), artifacts=artifacts,
                               created_at=datetime.now(timezone.utc).isoformat())
        self.atomic_write(out / "manifest.json", manifest.model_dump_json(indent=2))
        return manifest

    # Registre
    async def record_run(self, config: RunConfig, status: RunStatus, wall_time: float,
                         message: Optional[str] = None) -> int:
        return await add_run(RunRecord(study=config.study, config_hash=self.config_hash(config),
                                       seed=config.seed, status=status, wall_time=wall_time,
                                       output_dir=config.output_path, message=message))

    def run_study(self, config: RunConfig) -> Tuple[RunManifest, StudyResult]:
        """Exécuter l'étude, écrire les artefacts et le manifeste"""
        logger.info(f"Étude {config.study.value} → {config.output_path}")
        start = time.perf_counter()
        result = self.execute(config)
        wall_time = time.perf_counter() - start
        manifest = self.write_artifacts(config, result, wall_time)
        logger.info(f"Étude {config.study.value} terminée en {wall_time:.2f} s")
        return manifest, result

    def run(self, config: RunConfig) -> RunManifest:
        return self.run_study(config)[0]


# Instance globale
study_service = StudyService()
