"""Augmented graph tagger: per-token POS, token-graph and position
features fed to a three-layer same-padded CNN with a per-token sigmoid.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .clickgraph import ClickGraph
from .evaluation import CandidateList
from .nn import checkpoint
from .text import normalize, stem_token
from .token_graph import TokenGraph, component_token_graphs

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "NUM", "CONJ", "PRT", "PUNCT", "X")
POS_INDEX = {t: i for i, t in enumerate(POS_TAGS)}
FEATURE_DIM = len(POS_TAGS) + 3 + 1


class DataFormatError(ValueError):
    pass


# POS table --------------------------------------------------------------------

class PosTable(dict):
    """term -> probability vector over the 12 universal POS tags."""

    @classmethod
    def from_counts(cls, counts: dict[str, dict[str, float]]) -> "PosTable":
        table = cls()
        for term, tag_counts in counts.items():
            vec = np.zeros(len(POS_TAGS))
            for tag, c in tag_counts.items():
                vec[POS_INDEX[tag]] += c
            table[term] = vec / vec.sum()
        return table


def read_pos_table(path: str | Path) -> PosTable:
    """TSV ``term<TAB>TAG:prob[,TAG:prob...]``. Terms are stemmed on load;
    terms that collapse to one stem are averaged."""
    rows: dict[str, list[np.ndarray]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                term, spec = line.split("\t")
                vec = np.zeros(len(POS_TAGS))
                for part in spec.split(","):
                    tag, prob = part.split(":")
                    vec[POS_INDEX[tag.strip().upper()]] += float(prob)
            except (ValueError, KeyError) as e:
                raise DataFormatError(f"{path}:{lineno}: bad POS row ({e})") from None
            if (vec < 0).any() or abs(vec.sum() - 1.0) > 1e-9:
                raise DataFormatError(f"{path}:{lineno}: probabilities must be >= 0 and sum to 1")
            key = " ".join(normalize(term))
            rows.setdefault(key, []).append(vec)
    return PosTable({k: np.mean(v, axis=0) for k, v in rows.items()})


def write_pos_table(table: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in sorted(table):
            parts = [f"{tag}:{p!r}" for tag, p in zip(POS_TAGS, map(float, table[term])) if p > 0]
            fh.write(f"{term}\t{','.join(parts)}\n")


def pos_vector(table: dict[str, np.ndarray], term: str) -> np.ndarray:
    row = table.get(term)
    if row is None:
        row = np.zeros(len(POS_TAGS))
        row[POS_INDEX["X"]] = 1.0
    return np.asarray(row, dtype=np.float64)


# features -----------------------------------------------------------------------

def graph_vector(token: str, graph: TokenGraph, single_token_query: bool = False) -> np.ndarray:
    if single_token_query:
        return np.array([1.0, 1.0, 0.5])
    if token not in graph.nodes:
        raise KeyError(f"token {token!r} is not in the component's token graph")
    s = graph.score(token)
    return np.array([float(s.n_in), float(s.n_out), s.ratio])


def position_value(i: int, n: int) -> float:
    """Distance from the end for the 1-based position ``i`` of ``n`` tokens."""
    if not 1 <= i <= n:
        raise IndexError(f"position {i} outside 1..{n}")
    return float(n - i)


def query_features(tokens: Sequence[str], pos_table, graph: TokenGraph | None) -> np.ndarray:
    """[len(tokens), 16] feature rows; a missing graph means the query alone."""
    if graph is None:
        graph = TokenGraph()
        graph.add_query(list(tokens))
    n = len(tokens)
    rows = [
        np.concatenate([
            pos_vector(pos_table, tok),
            graph_vector(tok, graph, single_token_query=(n == 1)),
            [position_value(i, n)],
        ])
        for i, tok in enumerate(tokens, start=1)
    ]
    return np.array(rows).reshape(n, FEATURE_DIM)


@dataclass
class FeatureSequence:
    features: np.ndarray  # [L, 16]
    mask: np.ndarray  # [L] bool

    @classmethod
    def pad(cls, rows: np.ndarray, length: int) -> "FeatureSequence":
        feats = np.zeros((length, FEATURE_DIM))
        mask = np.zeros(length, dtype=bool)
        k = min(len(rows), length)
        feats[:k] = rows[:k]
        mask[:k] = True
        return cls(feats, mask)


@dataclass
class LabeledQuery:
    tokens: list[str]
    labels: list[int]
    category: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise DataFormatError(f"{len(self.tokens)} tokens but {len(self.labels)} labels")


def read_labeled_queries(path: str | Path) -> list[LabeledQuery]:
    """TSV ``category<TAB>tok tok ...<TAB>0 1 ...``; tokens are stemmed."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            cat, toks, labs = parts
            tokens = [stem_token(t) for t in toks.split()]
            try:
                labels = [int(x) for x in labs.split()]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: labels must be 0/1") from None
            if any(x not in (0, 1) for x in labels) or len(labels) != len(tokens):
                raise DataFormatError(f"{path}:{lineno}: need one 0/1 label per token")
            out.append(LabeledQuery(tokens, labels, cat))
    return out


def write_labeled_queries(queries: Iterable[LabeledQuery], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(f"{q.category}\t{' '.join(q.tokens)}\t{' '.join(map(str, q.labels))}\n")


def graphs_by_query(graph: ClickGraph | None) -> dict[tuple[str, ...], TokenGraph]:
    """Stemmed query tokens -> untruncated token graph of its component."""
    if graph is None:
        return {}
    out = {}
    for qids, tg in component_token_graphs(graph, (), truncate=False):
        for q in qids:
            out.setdefault(graph.queries[q].tokens, tg)
    return out


# model --------------------------------------------------------------------------

@dataclass
class CnnConfig:
    widths: tuple[int, ...] = (7, 5, 3)
    filters: int = 32
    max_len: int = 16
    hidden: int = 32
    seed: int = 0
    epochs: int = 30
    batch_size: int = 32
    lr: float = 3e-3
    threshold: float = 0.5

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if any(w < 1 or w % 2 == 0 for w in self.widths):
            raise ValueError("filter widths must be odd and positive")
        if self.filters < 1 or self.hidden < 1 or self.max_len < 1:
            raise ValueError("filters, hidden and max_len must be >= 1")


class CnnModel:
    """conv(7) -> conv(5) -> conv(3) -> dense -> dense(1), ReLU between,
    sigmoid per token. Hidden activations are re-masked after every
    convolution so padding beyond the query behaves like zero padding."""

    def __init__(self, config: CnnConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.convs = []
        channels = FEATURE_DIM
        for w in config.widths:
            self.convs.append(nn.Conv1d(channels, config.filters, w, rng))
            channels = config.filters
        self.relus = [nn.ReLU() for _ in self.convs]
        self.hidden = nn.Dense(channels, config.hidden, rng)
        self.hidden_act = nn.ReLU()
        self.out = nn.Dense(config.hidden, 1, rng)

    @property
    def layers(self) -> dict[str, nn.layers.Layer]:
        named = {f"conv{i}": c for i, c in enumerate(self.convs)}
        named["hidden"] = self.hidden
        named["out"] = self.out
        return named

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": p for ln, layer in self.layers.items() for pn, p in layer.params.items()}

    @staticmethod
    def scale_inputs(x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=np.float64)
        x[..., 12:14] = np.log1p(x[..., 12:14])
        x[..., 15] = np.log1p(x[..., 15])
        return x

    def logits(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """x [B, L, 16], mask [B, L] -> logits [B, L]."""
        m = np.asarray(mask, np.float64)[..., None]
        h = self.scale_inputs(x)
        self._mask = m
        for conv, act in zip(self.convs, self.relus):
            h = act(conv(h)) * m
        h = self.hidden_act(self.hidden(h))
        return self.out(h)[..., 0]

    def backward(self, dlogits: np.ndarray) -> None:
        dh = self.out.backward(dlogits[..., None])
        dh = self.hidden.backward(self.hidden_act.backward(dh))
        for conv, act in zip(reversed(self.convs), reversed(self.relus)):
            dh = conv.backward(act.backward(dh * self._mask))

    def zero_grad(self):
        for layer in self.layers.values():
            layer.zero_grad()

    def loss_and_grads(self, batch) -> tuple[float, dict[str, np.ndarray]]:
        x, y, mask = batch
        self.zero_grad()
        loss, dlogits = nn.bce_with_logits(self.logits(x, mask), y, mask)
        self.backward(dlogits)
        grads = {f"{ln}.{pn}": g for ln, layer in self.layers.items() for pn, g in layer.grads.items()}
        return loss, grads

    def probabilities(self, x, mask) -> np.ndarray:
        return nn.sigmoid(self.logits(x, mask))

    # persistence
    def state(self) -> tuple[dict, dict]:
        cfg = asdict(self.config)
        cfg["widths"] = list(cfg["widths"])
        return {k: v.copy() for k, v in self.params.items()}, {"model": "cnn", **cfg}

    @classmethod
    def from_state(cls, params: dict, config: dict) -> "CnnModel":
        config = dict(config)
        if config.pop("model", "cnn") != "cnn":
            raise checkpoint.CheckpointError("checkpoint is not a CNN tagger")
        model = cls(CnnConfig(**config))
        own = model.params
        if set(own) != set(params):
            raise checkpoint.CheckpointError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
        for name, arr in params.items():
            if own[name].shape != arr.shape:
                raise checkpoint.CheckpointError(f"{name}: shape {arr.shape} != {own[name].shape}")
            own[name][...] = arr
        return model

    def save(self, path):
        checkpoint.save(path, *self.state())

    @classmethod
    def load(cls, path) -> "CnnModel":
        return cls.from_state(*checkpoint.load(path))


@dataclass
class TrainResult:
    model: CnnModel
    loss: float
    history: list[float] = field(default_factory=list)


def encode_batch(sequences: Sequence[FeatureSequence]):
    x = np.stack([s.features for s in sequences])
    mask = np.stack([s.mask for s in sequences])
    return x, mask


def build_training_arrays(dataset, pos_table, click_graph: ClickGraph | None, max_len: int):
    graphs = graphs_by_query(click_graph)
    seqs, ys = [], []
    for q in dataset:
        feats = query_features(q.tokens, pos_table, graphs.get(tuple(q.tokens)))
        seq = FeatureSequence.pad(feats, max_len)
        y = np.zeros(max_len)
        k = min(len(q.labels), max_len)
        y[:k] = q.labels[:k]
        seqs.append(seq)
        ys.append(y)
    x, mask = encode_batch(seqs)
    return x, np.stack(ys), mask


def train(
    dataset: Sequence[LabeledQuery],
    pos_table,
    click_graph: ClickGraph | None = None,
    config: CnnConfig | None = None,
    log=None,
) -> TrainResult:
    """Mini-batch Adam on masked per-token binary cross-entropy."""
    if not dataset:
        raise ValueError("empty training set")
    config = config or CnnConfig()
    x, y, mask = build_training_arrays(dataset, pos_table, click_graph, config.max_len)
    model = CnnModel(config)
    opt = nn.Adam(lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = model.loss_and_grads((x[idx], y[idx], mask[idx]))
            opt.step(model.params, grads)
            total += loss
            batches += 1
        history.append(total / batches)
        if log:
            log(f"cnn epoch {epoch + 1}/{config.epochs} loss {history[-1]:.4f}")
    final, _ = model.loss_and_grads((x, y, mask))
    return TrainResult(model, final, history)


def predict(model: CnnModel, features: FeatureSequence) -> list[float]:
    """Product probability for each real (unmasked) token."""
    if features.features.shape != (model.config.max_len, FEATURE_DIM):
        raise nn.ShapeError(
            f"expected features [{model.config.max_len}, {FEATURE_DIM}], got {features.features.shape}"
        )
    probs = model.probabilities(features.features[None], features.mask[None])[0]
    return [float(p) for p, m in zip(probs, features.mask) if m]


def tag_queries(model: CnnModel, queries: Sequence[Sequence[str]], pos_table, graphs=None) -> list[list[float]]:
    graphs = graphs or {}
    L = model.config.max_len
    out: list[list[float]] = []
    for start in range(0, len(queries), 256):
        chunk = queries[start:start + 256]
        seqs = [
            FeatureSequence.pad(query_features(list(q), pos_table, graphs.get(tuple(q))), L)
            for q in chunk
        ]
        x, mask = encode_batch(seqs)
        probs = model.probabilities(x, mask)
        for q, p in zip(chunk, probs):
            out.append([float(v) for v in p[: min(len(q), L)]])
    return out


def extract_candidates(
    model: CnnModel,
    queries: Sequence[Sequence[str]],
    pos_table,
    graphs: dict | None = None,
    threshold: float | None = None,
) -> CandidateList:
    """Tokens at or above the threshold, counted once per contributing query."""
    threshold = model.config.threshold if threshold is None else threshold
    counts: Counter[str] = Counter()
    for q, probs in zip(queries, tag_queries(model, queries, pos_table, graphs)):
        counts.update({tok for tok, p in zip(q, probs) if p >= threshold})
    return CandidateList.from_counts(counts)


def extract_from_graph(model: CnnModel, graph: ClickGraph, pos_table, threshold=None) -> CandidateList:
    queries = [list(graph.queries[q].tokens) for q in sorted(graph.queries)]
    return extract_candidates(model, queries, pos_table, graphs_by_query(graph), threshold)
