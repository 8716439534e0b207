import pytest

from conftest import click_rows
from searchonto import clickgraph as cg
from searchonto.text import normalize
from searchonto.token_graph import (
    EmptyComponent,
    RatioScore,
    TokenGraph,
    build_token_graph,
    component_token_graphs,
    extract_all,
    product_candidate,
    truncate_at_preposition,
)

DRESS_QUERIES = ["women dress", "white dress", "dkny sleeveless dress white"]


def test_dress_fixture():
    g = build_token_graph(normalize(q) for q in DRESS_QUERIES)
    assert (g.n_in("dress"), g.n_out("dress")) == (3, 1)
    token, score = product_candidate(g)
    assert token == "dress"
    assert score.ratio == 0.75
    assert g.score("white").ratio == 0.5
    assert g.score("women").ratio == 0.0


def test_preposition_truncation_failure_mode():
    tokens = "seven for all mankind skinny jeans".split()
    assert truncate_at_preposition(tokens, {"for", "with"}) == ["seven"]
    assert truncate_at_preposition(["for", "kids"], {"for"}) == []
    assert truncate_at_preposition(["cup"], {"for"}) == ["cup"]


def test_edge_weights_count_repeats():
    g = build_token_graph([["baby", "wipe"], ["baby", "wipe"], ["wipe"]])
    assert g.edges == {("baby", "wipe"): 2}
    assert g.n_in("wipe") == 2


def test_single_token_graph_ratio():
    g = build_token_graph([["bib"]])
    assert product_candidate(g) == ("bib", RatioScore("bib", 0, 0, 0.5))


def test_tie_breaks():
    # a->b and c->d: b and d both score 1.0 with equal weight -> alphabetical
    g = build_token_graph([["a", "b"], ["c", "d"]])
    assert product_candidate(g)[0] == "b"
    # d has more traffic than b at the same ratio
    g = build_token_graph([["a", "b"], ["c", "d"], ["e", "d"]])
    assert product_candidate(g)[0] == "d"


def test_empty_graph():
    with pytest.raises(EmptyComponent):
        product_candidate(TokenGraph())
    with pytest.raises(KeyError):
        TokenGraph().score("x")


def test_extract_all_counts_components():
    spec = [
        ("women dress", "d1", "c", 2), ("white dress", "d1", "c", 2),
        ("dkny sleeveless dress white", "d1", "c", 2),
        ("red dress", "d2", "c", 2),
        ("cup for baby", "c1", "c", 2), ("sippy cup", "c1", "c", 2),
    ]
    g = cg.ingest(click_rows(spec))
    assert len(cg.connected_components(g)) == 3
    cands = extract_all(g, ["for"])
    assert cands.as_tuples() == [("dress", 2), ("cup", 1)]


def test_untruncated_graphs():
    g = cg.ingest(click_rows([("cup for baby", "c1", "c", 2)]))
    [(qids, tg)] = component_token_graphs(g, ["for"], truncate=False)
    assert qids == [0]
    assert list(tg.nodes) == ["cup", "for", "babi"]
