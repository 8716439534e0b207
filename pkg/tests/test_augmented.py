import numpy as np
import pytest

from conftest import click_rows
from searchonto import augmented as ag
from searchonto import clickgraph as cg
from searchonto import nn
from searchonto.text import normalize
from searchonto.token_graph import build_token_graph


def onehot(tag):
    v = np.zeros(12)
    v[ag.POS_INDEX[tag]] = 1.0
    return v


POS = ag.PosTable({
    "women": onehot("NOUN"), "white": onehot("ADJ"), "dress": onehot("NOUN"),
    "dkny": onehot("NOUN"), "sleeveless": onehot("ADJ"), "for": onehot("ADP"),
})


def test_feature_layout():
    assert ag.FEATURE_DIM == 16 and len(ag.POS_TAGS) == 12
    g = build_token_graph(normalize(q) for q in ["women dress", "white dress", "dkny sleeveless dress white"])
    feats = ag.query_features(["white", "dress"], POS, g)
    assert feats.shape == (2, 16)
    assert feats[1, :12].tolist() == onehot("NOUN").tolist()
    assert feats[1, 12:].tolist() == [3.0, 1.0, 0.75, 0.0]
    assert feats[0, 12:].tolist() == [1.0, 1.0, 0.5, 1.0]


def test_single_token_and_oov():
    feats = ag.query_features(["zzz"], POS, None)
    assert feats[0, :12].tolist() == onehot("X").tolist()
    assert feats[0, 12:].tolist() == [1.0, 1.0, 0.5, 0.0]


def test_position_value():
    assert [ag.position_value(i, 3) for i in (1, 2, 3)] == [2.0, 1.0, 0.0]
    with pytest.raises(IndexError):
        ag.position_value(0, 3)
    with pytest.raises(KeyError):
        ag.graph_vector("nope", build_token_graph([["a", "b"]]))


def test_pos_table_io(tmp_path):
    (tmp_path / "pos.tsv").write_text("Dresses\tNOUN:0.9,VERB:0.1\ndress\tNOUN:1\n")
    table = ag.read_pos_table(tmp_path / "pos.tsv")
    assert set(table) == {"dress"}
    assert table["dress"][ag.POS_INDEX["NOUN"]] == pytest.approx(0.95)
    ag.write_pos_table(table, tmp_path / "out.tsv")
    assert np.allclose(ag.read_pos_table(tmp_path / "out.tsv")["dress"], table["dress"])
    (tmp_path / "bad.tsv").write_text("a\tNOUN:0.5\n")
    with pytest.raises(ag.DataFormatError, match=":1:"):
        ag.read_pos_table(tmp_path / "bad.tsv")
    (tmp_path / "bad2.tsv").write_text("a\tFOO:1\n")
    with pytest.raises(ag.DataFormatError):
        ag.read_pos_table(tmp_path / "bad2.tsv")


def test_from_counts():
    t = ag.PosTable.from_counts({"run": {"VERB": 3, "NOUN": 1}})
    assert t["run"][ag.POS_INDEX["VERB"]] == 0.75


def test_labeled_io(tmp_path):
    qs = [ag.LabeledQuery(["white", "dress"], [0, 1], "womens")]
    ag.write_labeled_queries(qs, tmp_path / "l.tsv")
    assert ag.read_labeled_queries(tmp_path / "l.tsv") == qs
    (tmp_path / "bad.tsv").write_text("c\ta b\t1\n")
    with pytest.raises(ag.DataFormatError, match=":1:"):
        ag.read_labeled_queries(tmp_path / "bad.tsv")


def tiny_config(**kw):
    return ag.CnnConfig(**{"widths": (3, 3, 1), "filters": 3, "hidden": 4, "max_len": 5, **kw})


def test_padding_is_invisible():
    model = ag.CnnModel(ag.CnnConfig(seed=1))
    rng = np.random.default_rng(0)
    rows = np.abs(rng.normal(size=(3, 16)))
    seq = ag.FeatureSequence.pad(rows, 16)
    padded = model.probabilities(seq.features[None], seq.mask[None])[0, :3]
    exact = model.probabilities(rows[None], np.ones((1, 3)))[0]
    assert np.allclose(padded, exact, atol=1e-12)


def test_gradient_check():
    model = ag.CnnModel(tiny_config(seed=2))
    rng = np.random.default_rng(3)
    # zero biases put dead-unit positions exactly on a ReLU kink
    for p in model.params.values():
        p += rng.normal(scale=0.1, size=p.shape)
    x = np.abs(rng.normal(size=(2, 5, 16)))
    y = (rng.random((2, 5)) < 0.5).astype(float)
    mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], float)
    x[0, 3:] = 0.0
    assert nn.gradient_check(model, (x, y, mask)) < 1e-4


def test_config_checks():
    with pytest.raises(ValueError):
        ag.CnnConfig(widths=(4,))
    with pytest.raises(ValueError):
        ag.CnnConfig(filters=0)
    with pytest.raises(nn.ShapeError):
        ag.predict(ag.CnnModel(tiny_config()), ag.FeatureSequence.pad(np.zeros((2, 16)), 4))


def toy_data(rng, n):
    """[adj]* noun [for noun]?; the noun before 'for' is the product."""
    adjs = [f"a{k}" for k in range(8)]
    nouns = [f"n{k}" for k in range(8)]
    table = ag.PosTable({**{a: onehot("ADJ") for a in adjs}, **{w: onehot("NOUN") for w in nouns},
                         "for": onehot("ADP")})
    data = []
    for _ in range(n):
        toks = [adjs[rng.integers(8)] for _ in range(rng.integers(0, 3))] + [nouns[rng.integers(8)]]
        labels = [0] * (len(toks) - 1) + [1]
        if rng.random() < 0.4:
            toks += ["for", nouns[rng.integers(8)]]
            labels += [0, 0]
        data.append(ag.LabeledQuery(toks, labels))
    return table, data


def test_training_learns_toy_task():
    rng = np.random.default_rng(0)
    table, data = toy_data(rng, 300)
    cfg = ag.CnnConfig(filters=8, hidden=8, max_len=8, epochs=20, seed=0)
    result = ag.train(data[:250], table, None, cfg)
    assert result.history[-1] < result.history[0]
    probs = ag.tag_queries(result.model, [q.tokens for q in data[250:]], table)
    hits = sum([int(p >= 0.5) for p in ps] == q.labels for ps, q in zip(probs, data[250:]))
    assert hits >= 45


def test_training_is_deterministic():
    table, data = toy_data(np.random.default_rng(1), 40)
    cfg = tiny_config(max_len=6, epochs=2, seed=5)
    a = ag.train(data, table, None, cfg).model
    b = ag.train(data, table, None, cfg).model
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_extract_counts_once_per_query():
    model = ag.CnnModel(tiny_config())
    model.out.params["b"][...] = 10.0  # every token fires
    cands = ag.extract_candidates(model, [["a", "a"], ["a", "b"]], POS, threshold=0.5)
    assert cands.as_tuples() == [("a", 2), ("b", 1)]
    assert len(ag.extract_candidates(model, [["a"]], POS, threshold=1.01)) == 0


def test_graphs_by_query_untruncated():
    g = cg.ingest(click_rows([("cup for baby", "s", "baby", 2), ("sippy cup", "s", "baby", 2)]))
    graphs = ag.graphs_by_query(g)
    tg = graphs[("cup", "for", "babi")]
    assert tg is graphs[("sippi", "cup")]
    assert tg.n_in("cup") == 1 and tg.n_out("cup") == 1


def test_checkpoint_round_trip(tmp_path):
    model = ag.CnnModel(tiny_config(seed=9))
    model.save(tmp_path / "m.json")
    back = ag.CnnModel.load(tmp_path / "m.json")
    assert back.config == model.config
    assert all(back.params[k].tobytes() == v.tobytes() for k, v in model.params.items())
