import json

import pytest

from conftest import retail_skus
from searchonto import retrieval as rt
from searchonto.nerc import annotate
from searchonto.ontology import UnknownConcept


def ids(results):
    return [r.sku_id for r in results]


def test_cotton_primary_beats_polyester(retail_index):
    res = rt.search_query("cotton shirt", retail_index)
    assert ids(res) == ["shirt-cotton", "shirt-poly"]
    assert res[0].score == 3.0 and res[1].score == 1.0
    assert res[0].matched.primary and not res[1].matched.primary


def test_numeric_boost(retail_index):
    res = rt.search_query("45 inch tv", retail_index)
    assert ids(res) == ["tv-43", "tv-49"]
    assert res[0].score == pytest.approx(1 / (1 + 5.08), abs=1e-12)
    assert res[1].score == pytest.approx(1 / (1 + 10.16), abs=1e-12)


def test_subclass_recall(retail_index):
    res = rt.search_query("stool", retail_index)
    assert set(ids(res)) == {"stool-step", "barstool-1", "barstool-2"}
    assert set(ids(rt.search_query("bar stool", retail_index))) == {"barstool-1", "barstool-2"}


def test_brand_default_product(retail_index):
    res = rt.search_query("kleenex", retail_index)
    assert ids(res)[0] == "tissue-kleenex"
    assert set(ids(res[1:])) == {"tissue-puffs", "tissue-generic"}
    assert all(r.score < res[0].score for r in res[1:])
    assert not any(r.fallback for r in res)


def test_fallback_title_overlap(retail_index):
    res = rt.search_query("swivel counter", retail_index)
    assert ids(res) == ["barstool-1", "barstool-2"]
    assert all(r.fallback for r in res)
    assert rt.search_query("nothing matches", retail_index) == []


def test_weights_and_k(retail_index):
    ann = annotate("cotton shirt", retail_index.ontology)
    flat = rt.ScoreWeights(w_primary=0.0)
    res = rt.search(ann, retail_index, weights=flat)
    assert [r.score for r in res] == [1.0, 1.0]
    assert ids(res) == ["shirt-cotton", "shirt-poly"]  # ties by sku_id
    assert len(rt.search(ann, retail_index, k=1)) == 1
    with pytest.raises(ValueError):
        rt.ScoreWeights(w_attr=-1)


def test_score_breakdown(retail_index, retail_ontology):
    ann = annotate("white sleeveless dkny dress", retail_ontology)
    score, br = rt.score_sku(retail_index.records["dress-dkny"], ann)
    assert score == 1 + 1 + 2 + 1.5
    assert br.matched_attrs == ("sleeveless", "white") and br.primary and br.brand


def test_index_validation(retail_ontology):
    skus = retail_skus()
    with pytest.raises(rt.CatalogError, match="duplicate"):
        rt.index_skus(skus + skus[:1], retail_ontology)
    with pytest.raises(UnknownConcept):
        rt.index_skus([rt.SkuRecord("x", "t", "sofa")], retail_ontology)
    with pytest.raises(rt.CatalogError, match="not a Product"):
        rt.index_skus([rt.SkuRecord("x", "t", "kleenex")], retail_ontology)
    with pytest.raises(rt.CatalogError, match="primary_attribute"):
        rt.index_skus([rt.SkuRecord("x", "t", "shirt", None, frozenset({"women"}), "women")], retail_ontology)
    with pytest.raises(rt.CatalogError, match="one of its attributes"):
        rt.index_skus([rt.SkuRecord("x", "t", "shirt", None, frozenset(), "cotton")], retail_ontology)


def test_catalog_round_trip(tmp_path, retail_ontology):
    rt.write_catalog(retail_skus(), tmp_path / "c.jsonl")
    back = rt.read_catalog(tmp_path / "c.jsonl", retail_ontology.units)
    assert [r.to_dict() for r in back] == [r.to_dict() for r in retail_skus()]
    tv = next(r for r in back if r.sku_id == "tv-43")
    assert tv.numeric_attributes["screen_size"].canonical_magnitude == pytest.approx(43 * 2.54)


def test_catalog_errors(tmp_path, retail_ontology):
    (tmp_path / "a.jsonl").write_text('{"sku_id": "x"}\n')
    with pytest.raises(rt.CatalogError, match=":1: missing field"):
        rt.read_catalog(tmp_path / "a.jsonl", retail_ontology.units)
    row = {"sku_id": "x", "product_class": "tv", "numeric_attributes": {"size": {"magnitude": 3, "unit": "cubits"}}}
    (tmp_path / "b.jsonl").write_text("\n" + json.dumps(row) + "\n")
    with pytest.raises(rt.CatalogError, match=":2: .*unknown unit"):
        rt.read_catalog(tmp_path / "b.jsonl", retail_ontology.units)
    (tmp_path / "c.jsonl").write_text("{nope\n")
    with pytest.raises(rt.CatalogError, match=":1:"):
        rt.read_catalog(tmp_path / "c.jsonl", retail_ontology.units)


def test_index_save_load(tmp_path, retail_index):
    retail_index.save(tmp_path / "idx.json")
    back = rt.SkuIndex.load(tmp_path / "idx.json")
    assert back.by_product == retail_index.by_product
    assert back.ontology == retail_index.ontology
    assert ids(rt.search_query("45 inch tv", back)) == ["tv-43", "tv-49"]


def test_results_csv(retail_index):
    text = rt.results_to_csv(rt.search_query("cotton shirt", retail_index))
    assert text.splitlines() == [
        "rank,sku_id,score,matched_attrs,primary,brand",
        "1,shirt-cotton,3.0,cotton,1,0",
        "2,shirt-poly,1.0,cotton,0,0",
    ]
