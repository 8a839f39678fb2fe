import math
from pathlib import Path

import pytest

import tpc

ROOT = Path(__file__).resolve().parents[2]


def test_levenshtein_and_labels():
    assert tpc.levenshtein("kitten", "sitting") == 3
    assert tpc.levenshtein("é", "e") == 1
    assert tpc.map_label("Mod+Trans") == "ContainTransposition"
    with pytest.raises(tpc.TpcError):
        tpc.map_label("Metaphor")


def test_chance_and_metrics():
    assert math.isclose(tpc.stratified_chance([1, 1]), 0.5)
    m = tpc.compute_metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert math.isclose(m["accuracy"], 0.75)
    assert math.isclose(m["micro_f1"], 0.75)
    assert m["confusion"] == [[1, 1], [0, 2]]


def test_folds():
    folds = tpc.stratified_kfold([0] * 10 + [1] * 10, 5, 3)
    assert sorted(i for f in folds for i in f) == list(range(20))


def test_check_fixture_bundle():
    r = tpc.check_bundle(str(ROOT / "tests" / "fixtures" / "tiny.jsonl"))
    assert r["sentences"] == 3
    assert r["findings"] == []
    assert r["census"]["ContainTransposition"] == 2


def test_check_reports_findings():
    r = tpc.check_bundle_text("{}\n", "mem")
    assert r["sentences"] == 0
    assert r["findings"][0]["record"] == 1


def test_run_cli_in_process():
    code, out, err = tpc.run_cli(["--help"])
    assert code == 0
    assert "validate" in out
    code, _, _ = tpc.run_cli(["validate", "--config", "/nonexistent.json"])
    assert code == 1
