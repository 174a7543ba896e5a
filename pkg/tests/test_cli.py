"""
Tests de la ligne de commande
"""
import csv
import json
from pathlib import Path

from app.cli import main
from app.services.scheme_service import scheme_service

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_classify_from_file(tmp_path, capsys):
    out = tmp_path / "classify"
    code = main(["classify", "--config", str(CONFIGS / "classify_quadratic_d3.yaml"),
                 "--out", str(out), "--no-registry"])
    assert code == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["study"] == "classify"
    assert (out / "classify.json").exists()
    assert (out / "manifest.json").exists()


def test_critical_model_is_reported(tmp_path):
    out = tmp_path / "critical"
    code = main(["classify", "--config", str(CONFIGS / "classify_critical.yaml"),
                 "--out", str(out), "--no-registry"])
    assert code == 0
    document = json.loads((out / "classify.json").read_text(encoding="utf-8"))
    assert document["scaling"]["class"] == "critical"
    assert not document["validation"]["valid"]


def test_schemes_without_file(tmp_path):
    assert main(["schemes", "--out", str(tmp_path), "--no-registry"]) == 0
    assert (tmp_path / "schemes.csv").exists()


def test_malformed_configuration(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("study: classify\nmodle: {}\n", encoding="utf-8")
    code = main(["classify", "--config", str(path), "--out", str(tmp_path / "out"), "--no-registry"])
    assert code == 2
    error = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert error["error"] == "ConfigError"
    assert error["key"] == "modle"
    assert not (tmp_path / "out").exists()


def test_rejected_model_fails_the_study(tmp_path, capsys):
    path = tmp_path / "critical.yaml"
    path.write_text(
        "study: counterterms\n"
        "model:\n  d: 3\n  alpha: 0.5\n  gamma: 1\n  g: 1.0\n"
        "  Omega: {family: relativistic}\n  omega: {family: relativistic}\n"
        "lambdas: [10.0, 100.0, 1000.0, 10000.0]\n",
        encoding="utf-8",
    )
    code = main(["counterterms", "--config", str(path), "--out", str(tmp_path / "out"), "--no-registry"])
    assert code == 2
    error = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert error["error"] == "ModelValidationError"
    assert error["scaling_class"] == "critical"


def test_schemes_as_json_lines(tmp_path, capsys):
    code = main(["schemes", "--n", "3", "--m", "1", "--out", str(tmp_path), "--no-registry"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    rows = [json.loads(line) for line in lines]
    expected = scheme_service.enumerate_schemes(3, 1)
    assert len(rows) == len(expected)
    assert {row["target_m"] for row in rows} == {1}
    assert {row["target_n"] for row in rows} == {3}
    assert [row["J"] for row in rows] == [" ".join(map(str, s.J)) for s in expected]


def test_schemes_census(tmp_path, capsys):
    code = main(["schemes", "--census", "2", "--out", str(tmp_path), "--no-registry"])
    assert code == 0
    table = json.loads(capsys.readouterr().out.strip())
    assert table["counts"] == {"0": 2, "1": 3, "2": 1}
    assert table["total"] == 6


def test_census_out_of_range(tmp_path, capsys):
    code = main(["schemes", "--census", "9", "--out", str(tmp_path / "out"), "--no-registry"])
    assert code == 2
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["error"] == "DomainError"
    assert not (tmp_path / "out").exists()


def test_counterterm_cutoffs_from_command_line(tmp_path):
    out = tmp_path / "ct"
    code = main(["counterterms", "--config", str(CONFIGS / "counterterms_relativistic_d1.yaml"),
                 "--lambdas", "10,100,1000,10000,100000", "--out", str(out), "--no-registry"])
    assert code == 0
    with open(out / "counterterms.csv", newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert list(rows[0].keys()) == ["lambda", "n", "value", "abs_error_estimate"]
    assert [float(row["lambda"]) for row in rows] == [10.0, 100.0, 1000.0, 10000.0, 100000.0]
    assert (out / "counterterms.json").exists()
