import json

import pytest

from calmet import cli
from calmet.cli import (REGISTRY, SUITES, DetectionInput, RunConfig, dump_detections,
                        ingest_classification, ingest_detections, main, parse_metric,
                        run_suite)
from calmet.core import NONNEG, UNIT, ZERO_IS_PERFECT
from calmet.errors import ConfigError, ParseError
from calmet.objdet import Box


@pytest.fixture
def csv_file(tmp_path):
    p = tmp_path / "preds.csv"
    rows = ["label,p0,p1"]
    for i in range(200):
        c = (i % 97 + 1) / 99
        rows.append(f"{int(i % 3 == 0)},{1 - c!r},{c!r}")
    p.write_text("\n".join(rows) + "\n")
    return p


def test_ingest_row(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("label,p0,p1\n1,0.3,0.7\n")
    ds = ingest_classification(str(p))
    assert ds.n == 1 and ds.k == 2 and ds.labels[0] == 1
    assert ds.probs[0].tolist() == [0.3, 0.7]


def test_ingest_binary_shorthand(tmp_path):
    p = tmp_path / "short.csv"
    p.write_text("label,confidence\n1,0.7\n")
    ds = ingest_classification(str(p))
    assert ds.probs[0].tolist() == pytest.approx([0.3, 0.7])


def test_ingest_jsonl(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"label": 2, "probs": [0.1, 0.2, 0.7]}\n{"label": 0, "probs": [0.5, 0.25, 0.25]}\n')
    ds = ingest_classification(str(p), "jsonl")
    assert ds.k == 3 and ds.labels.tolist() == [2, 0]


def test_ingest_malformed_row_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("label,p0,p1\n1,0.3,0.7\n0,abc,0.5\n")
    with pytest.raises(ParseError) as exc:
        ingest_classification(str(p))
    assert exc.value.line == 3 and "line 3" in str(exc.value)


def test_detection_round_trip(tmp_path):
    inp = DetectionInput(
        [Box(1.0, 2.0, 3.0, 4.0, 0, 0.8, "a")],
        [Box(1.0, 2.0, 3.0, 4.0, 0, None, "a"), Box(5.0, 5.0, 1.0, 1.0, 1, None, "b")],
        {"a": (10.0, 10.0), "b": (20.0, 20.0)})
    p = tmp_path / "det.json"
    p.write_text(json.dumps(dump_detections(inp)))
    back = ingest_detections(str(p))
    assert back.detections == inp.detections and back.ground_truth == inp.ground_truth
    assert back.image_sizes == inp.image_sizes


def test_detection_empty_allowed(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text(json.dumps({"images": [{"id": "x", "width": 5, "height": 5,
                                         "detections": [], "ground_truth": []}]}))
    inp = ingest_detections(str(p))
    assert inp.detections == [] and inp.ground_truth == []


def test_parse_metric():
    assert parse_metric("ece(binning=equal-mass,bins=15)") == (
        "ece", {"binning": "equal-mass", "bins": 15})
    with pytest.raises(ConfigError):
        parse_metric("no_such_metric")
    with pytest.raises(ConfigError):
        parse_metric("ece(bins=3")


def test_classic_suite_contents():
    names = [parse_metric(m)[0] for m in SUITES["classic"]]
    assert names == ["brier", "nll", "ece", "ece", "mce", "ecce_mad"]


def test_registry_metadata():
    assert REGISTRY["brier"].range == UNIT
    assert REGISTRY["nll"].range == NONNEG
    assert REGISTRY["ece"].orientation == ZERO_IS_PERFECT
    assert REGISTRY["ece_db"].stochastic and not REGISTRY["ece"].stochastic


def test_stochastic_needs_seed(csv_file, monkeypatch, capsys):
    monkeypatch.delenv("CALMET_SEED", raising=False)
    assert main(["--input", str(csv_file), "--metrics", "ece_db"]) == 1
    assert "seed" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        run_suite(RunConfig(str(csv_file), metrics=["brier"], bootstrap=10))


def test_env_seed(csv_file, tmp_path, monkeypatch):
    monkeypatch.setenv("CALMET_SEED", "17")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["--input", str(csv_file), "--metrics", "ece_db", "--out", str(a)]) == 0
    monkeypatch.delenv("CALMET_SEED")
    assert main(["--input", str(csv_file), "--metrics", "ece_db", "--seed", "17",
                 "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_reports_byte_identical(csv_file, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        code = main(["--input", str(csv_file), "--suite", "classic", "--metrics", "skce_ul",
                     "--seed", "3", "--bootstrap", "25", "--out", str(out)])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    report = json.loads(outs[0])
    assert report["schema_version"] == 1
    assert all(m["ci"][0] <= m["ci"][1] for m in report["metrics"] if m.get("ci"))


def test_metric_error_exit_code(csv_file, capsys):
    assert main(["--input", str(csv_file), "--metrics", "brier,piece"]) == 2
    report = json.loads(capsys.readouterr().out)
    assert [m["name"] for m in report["metrics"]][0] == "brier"
    assert "error" in report["metrics"][1]


def test_csv_output_and_classwise(csv_file, capsys):
    assert main(["--input", str(csv_file), "--metrics", "ece", "--view", "classwise",
                 "--out-format", "csv"]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].startswith("name")
    assert "ece" in text


def test_missing_file_is_config_error(tmp_path):
    assert main(["--input", str(tmp_path / "nope.csv")]) == 1


def test_detection_suite(tmp_path, capsys):
    inp = DetectionInput(
        [Box(0.0, 0.0, 10.0, 10.0, 0, 0.8, "a"), Box(50.0, 50.0, 5.0, 5.0, 0, 0.3, "a")],
        [Box(0.0, 0.0, 10.0, 10.0, 0, None, "a")], {"a": (100.0, 100.0)})
    p = tmp_path / "det.json"
    p.write_text(json.dumps(dump_detections(inp)))
    assert main(["--input", str(p), "--task", "detect", "--metrics", "qgc"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["metrics"][0]["value"] == pytest.approx(0.13)


def test_nonfinite_values_as_strings():
    assert cli._jsonable(float("inf")) == "inf" and cli._jsonable(float("nan")) == "nan"
