import filecmp
import json

import pytest

from searchonto.cli import main
from searchonto.synth import GeneratorConfig, generate

SMALL = dict(queries=800, products_per_category=8, brands_per_category=3, attributes=10, context_words=8)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    return generate(GeneratorConfig(**SMALL)).write(root)


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline_stages(data, tmp_path, capsys):
    d = {k: str(v) for k, v in data.items()}
    t = tmp_path
    assert run("ingest", "--log", d["click_log"], "--out", t / "g.json") == 0
    assert run("clean", "--graph", t / "g.json", "--config", d["clean_config"], "--out", t / "g2.json") == 0
    assert run("extract", "token-graph", "--graph", t / "g2.json", "--config", d["clean_config"],
               "--category", "baby", "--out", t / "tg.csv") == 0
    assert run("train", "cnn", "--data", d["labeled"], "--pos", d["pos_table"], "--graph", t / "g2.json",
               "--exclude-category", "baby", "--epochs", 2, "--filters", 4, "--hidden", 4,
               "--out", t / "cnn.json") == 0
    assert run("extract", "cnn", "--graph", t / "g2.json", "--category", "baby", "--model", t / "cnn.json",
               "--pos", d["pos_table"], "--out", t / "cnn.csv") == 0
    assert run("train", "lstm-crf", "--data", d["iob"], "--embeddings", d["embeddings"],
               "--exclude-category", "baby", "--epochs", 1, "--hidden", 4, "--out", t / "lstm.json") == 0
    assert run("extract", "lstm-crf", "--graph", t / "g2.json", "--category", "baby",
               "--model", t / "lstm.json", "--embeddings", d["embeddings"], "--out", t / "lstm.csv") == 0
    assert run("eval", "compare", "--method", f"token-graph={t / 'tg.csv'}", "--method", f"cnn={t / 'cnn.csv'}",
               "--method", f"lstm-crf={t / 'lstm.csv'}", "--annotations", d["ground_truth"],
               "--unlisted-negative", "--out", t / "compare.csv") == 0
    assert (t / "compare.csv").read_text().startswith("n,token-graph,cnn,lstm-crf\n")

    capsys.readouterr()
    assert run("eval", "precision", "--candidates", t / "tg.csv", "--annotations", d["ground_truth"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "n,precision" and out[1].startswith("1,")


def test_outputs_are_byte_identical(data, tmp_path):
    d = {k: str(v) for k, v in data.items()}
    for name in ("a", "b"):
        out = tmp_path / name
        out.mkdir()
        run("ingest", "--log", d["click_log"], "--out", out / "g.json")
        run("train", "lstm-crf", "--data", d["iob"], "--embeddings", d["embeddings"], "--epochs", 1,
            "--hidden", 4, "--seed", 5, "--out", out / "m.json")
    for f in ("g.json", "m.json"):
        assert filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False)


def test_inputs_not_mutated(data, tmp_path):
    before = {k: p.read_bytes() for k, p in data.items()}
    run("ingest", "--log", data["click_log"], "--out", tmp_path / "g.json")
    run("index", "--catalog", data["catalog"], "--ontology", data["ontology"], "--out", tmp_path / "i.json")
    assert {k: p.read_bytes() for k, p in data.items()} == before


def test_annotate_and_search(tmp_path, capsys):
    from conftest import retail_concepts, retail_skus
    from searchonto import ontology as onto
    from searchonto.ontology import Ontology
    from searchonto.retrieval import write_catalog

    o = Ontology.build(retail_concepts(), default_product={"kleenex": "tissue"})
    onto.save(o, tmp_path / "o.json")
    write_catalog(retail_skus(), tmp_path / "c.jsonl")
    assert run("annotate", "--ontology", tmp_path / "o.json", "--query", "45 inch tv") == 0
    ann = json.loads(capsys.readouterr().out)
    assert [t["label"] for t in ann["tokens"]] == ["NumericAttr", "NumericAttr", "Product"]
    assert ann["fallback"] is False

    assert run("index", "--catalog", tmp_path / "c.jsonl", "--ontology", tmp_path / "o.json",
               "--out", tmp_path / "idx.json") == 0
    capsys.readouterr()
    assert run("search", "--index", tmp_path / "idx.json", "--query", "stool", "-k", 10) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "rank,sku_id,score,matched_attrs,primary,brand"
    assert {r.split(",")[1] for r in rows[1:]} >= {"barstool-1", "barstool-2"}


def test_ontology_validate_cycle(tmp_path, capsys):
    concepts = [{"id": "a", "kind": "Product", "name": "a", "parent": "b"},
                {"id": "b", "kind": "Product", "name": "b", "parent": "a"}]
    (tmp_path / "o.json").write_text(json.dumps({"concepts": concepts}))
    assert run("ontology", "validate", tmp_path / "o.json") == 3
    err = capsys.readouterr().err
    assert "cycle: a -> b -> a" in err


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        run("bogus")
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        run("ingest", "--log", "x")
    assert e.value.code == 1
    assert run("ingest", "--log", tmp_path / "missing.tsv", "--out", tmp_path / "g.json") == 2
    (tmp_path / "bad.tsv").write_text("not a header\n")
    assert run("ingest", "--log", tmp_path / "bad.tsv", "--out", tmp_path / "g.json") == 4
    (tmp_path / "bad.json").write_text("{")
    assert run("ontology", "validate", tmp_path / "bad.json") == 4
    (tmp_path / "c.csv").write_text("rank,term,frequency\n1,cup,3\n")
    (tmp_path / "a.csv").write_text("term,label\n")
    assert run("eval", "precision", "--candidates", tmp_path / "c.csv", "--annotations", tmp_path / "a.csv") == 3
    assert run("eval", "precision", "--candidates", tmp_path / "c.csv", "--annotations", tmp_path / "a.csv",
               "--unlisted-negative") == 0
    assert run("eval", "compare", "--method", "oops", "--annotations", tmp_path / "a.csv") == 1
    err = capsys.readouterr().err
    assert "lack a P/N label: cup" in err


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as e:
        run("--help")
    assert e.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("ingest", "clean", "extract", "train", "annotate", "index", "search", "eval", "synth", "ontology"):
        assert cmd in out
