import json
import random

import pytest

import tpc
from tpc import preprocess as pp
from conftest import make_profiles


def test_three_sentence_fixture_validates(tmp_path, profiles, data_dir):
    out = pp.run_pipeline(data_dir / "raw3.tsv", data_dir / "spans3.tsv", profiles, tmp_path / "b.jsonl")
    check = tpc.check_bundle(str(out))
    assert check["findings"] == []
    assert check["sentences"] == 3
    record = json.loads(out.read_text(encoding="utf-8").splitlines()[0])
    assert record["meta"]["tools"]["src_dependency"] == {"name": "fake-dep-en", "version": "1.0"}
    assert record["src"]["tokens"][1] == {"surface": "cat", "lemma": "cat", "upos": "NOUN"}


def test_rerun_is_identical(tmp_path, profiles, data_dir):
    a = pp.run_pipeline(data_dir / "raw3.tsv", data_dir / "spans3.tsv", profiles, tmp_path / "a.jsonl", workers=3)
    b = pp.run_pipeline(data_dir / "raw3.tsv", data_dir / "spans3.tsv", profiles, tmp_path / "b.jsonl", workers=1)
    assert a.read_bytes() == b.read_bytes()


def test_unknown_tag_names_tag_and_tool(tmp_path, data_dir):
    with pytest.raises(pp.UnmappedTagError) as e:
        pp.run_pipeline(data_dir / "raw3.tsv", data_dir / "spans3.tsv", make_profiles("house"), tmp_path / "b.jsonl")
    assert e.value.tag == "XYZ"
    assert "fake-dep-en 1.0" in str(e.value)


def test_tool_failure_carries_output(tmp_path, data_dir):
    with pytest.raises(pp.ToolError) as e:
        pp.run_pipeline(data_dir / "raw3.tsv", data_dir / "spans3.tsv", make_profiles("fail"), tmp_path / "b.jsonl")
    assert "parser crashed" in str(e.value)


def test_fifty_sentences_validate_with_total_mapping(tmp_path, profiles):
    rng = random.Random(5)
    en = ["the", "cat", "dog", "sleeps", "runs", "big", "quickly", "house", "in"]
    fr = ["le", "chat", "chien", "dort", "court", "grand", "vite", "maison", "dans"]
    raw, spans = [], []
    for i in range(50):
        n = rng.randint(2, 7)
        words = [rng.randrange(len(en)) for _ in range(n)]
        raw.append(f"s{i}\t{' '.join(en[w] for w in words)}\t{' '.join(fr[w] for w in words)}")
        a = rng.randrange(n)
        b = rng.randint(a + 1, n)
        spans.append(f"s{i}\t{a}-{b}\t{a}-{b}\t{rng.choice(pp.RAW_LABELS)}")
    (tmp_path / "raw.tsv").write_text("\n".join(raw) + "\n", encoding="utf-8")
    (tmp_path / "spans.tsv").write_text("\n".join(spans) + "\n", encoding="utf-8")
    out = pp.run_pipeline(tmp_path / "raw.tsv", tmp_path / "spans.tsv", profiles, tmp_path / "b.jsonl")
    assert tpc.check_bundle(str(out))["findings"] == []
    observed = set()
    for line in out.read_text(encoding="utf-8").splitlines():
        for side in ("src", "tgt"):
            observed.update(t["upos"] for t in json.loads(line)[side]["tokens"])
    assert observed
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"bundle": str(out)}), encoding="utf-8")
    code, out_text, err = tpc.run_cli(["validate", "--config", str(config)])
    assert code == 0, err
    assert "sentences\t50" in out_text


def test_mapping_audit(profiles):
    assert profiles["src_dependency"].unmapped(["NN", "FOO", "DT", "BAR"]) == ["BAR", "FOO"]


def test_bad_inputs(tmp_path, profiles, data_dir):
    (tmp_path / "raw.tsv").write_text("p1\tonly two\n", encoding="utf-8")
    with pytest.raises(pp.InputFormatError) as e:
        pp.read_parallel(tmp_path / "raw.tsv")
    assert e.value.line == 1
    (tmp_path / "spans.tsv").write_text("p1\t0-2\t0-2\tLiteral\np1\t2-1\t0-1\tLiteral\n", encoding="utf-8")
    with pytest.raises(pp.InputFormatError) as e:
        pp.read_spans(tmp_path / "spans.tsv")
    assert e.value.line == 2
    (tmp_path / "spans.tsv").write_text("zz\t0-1\t0-1\tLiteral\n", encoding="utf-8")
    with pytest.raises(pp.AdapterError):
        pp.run_pipeline(data_dir / "raw3.tsv", tmp_path / "spans.tsv", profiles, tmp_path / "b.jsonl")
    partial = dict(profiles)
    del partial["aligner"]
    with pytest.raises(pp.AdapterError):
        pp.run_pipeline(data_dir / "raw3.tsv", data_dir / "spans3.tsv", partial, tmp_path / "b.jsonl")


def test_bracketed_parsing(profiles):
    tree, words = pp.parse_bracketed("(ROOT (S (XP (DT the) (NN cat))))", profiles["src_constituency"])
    assert words == ["the", "cat"]
    assert tree == {"label": "S", "span": [0, 2], "children": [
        {"label": "XP", "span": [0, 2], "children": [
            {"label": "DET", "span": [0, 1]}, {"label": "NOUN", "span": [1, 2]}]}]}
    with pytest.raises(pp.ToolError):
        pp.parse_bracketed("(S (DT the)", profiles["src_constituency"])


def test_build_lexicons(tmp_path):
    dump = tmp_path / "align.tsv"
    dump.write_text("".join(f"e{i}\tf{i}\t0.{i}\t0.5\n" for i in range(10)), encoding="utf-8")
    emb = tmp_path / "emb.txt"
    emb.write_text("2 3\n/c/en/cat 1 0 0\nfr/chat 0 1 0\n", encoding="utf-8")
    concepts = tmp_path / "assertions.csv"
    concepts.write_text(
        "/a/1\t/r/Synonym\t/c/en/cat\t/c/fr/chat\t{}\n"
        "/a/2\t/r/Synonym\t/c/en/cat\t/c/en/feline\t{}\n"
        "/a/3\t/r/DerivedFrom\t/c/fr/chaton\t/c/fr/chat\t{}\n",
        encoding="utf-8")
    files = pp.build_lexicons(dump, emb, concepts, tmp_path / "out")
    assert files.translation_rows == 10
    assert len(files.translation_ef.read_text().splitlines()) == 10
    assert files.translation_ef.read_text().splitlines()[3] == "f3\te3\t0.3"
    assert files.concept_rows == 2
    assert files.concepts_dropped == 1
    assert files.embeddings.read_text().splitlines()[0] == "2 3"
    config = tmp_path / "c.json"
    fixture = tmp_path / "empty.jsonl"
    fixture.write_text("", encoding="utf-8")
    config.write_text(json.dumps({"bundle": str(fixture), "resources": {
        "embeddings": str(files.embeddings), "translation_ef": str(files.translation_ef),
        "translation_fe": str(files.translation_fe), "concepts": str(files.concepts)}}), encoding="utf-8")
    code, _, err = tpc.run_cli(["validate", "--config", str(config), "--quiet"])
    assert code == 0, err


def test_lexicon_errors_name_lines(tmp_path):
    ok = tmp_path / "ok.tsv"
    ok.write_text("e\tf\t0.5\t0.5\n", encoding="utf-8")
    concepts = tmp_path / "c.tsv"
    concepts.write_text("", encoding="utf-8")
    emb = tmp_path / "emb.txt"
    emb.write_text("a 1 2\nb 1 2 3\n", encoding="utf-8")
    with pytest.raises(pp.InputFormatError) as e:
        pp.build_lexicons(ok, emb, concepts, tmp_path / "o")
    assert e.value.line == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("e\tf\t0.5\t0.5\ne\tg\t1.5\t0.1\n", encoding="utf-8")
    emb.write_text("a 1 2\n", encoding="utf-8")
    with pytest.raises(pp.InputFormatError) as e:
        pp.build_lexicons(bad, emb, concepts, tmp_path / "o")
    assert e.value.line == 2
