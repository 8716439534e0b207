"""Bipartite query -> SKU click graph: ingestion, cleaning and components."""
from __future__ import annotations

import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .text import normalize, normalize_phrase, phrase_key, stem_token

__all__ = [
    "ClickGraph",
    "CleanConfig",
    "Component",
    "QueryNode",
    "SkuNode",
    "category_entropy",
    "clean",
    "connected_components",
    "ingest",
    "read_click_log",
    "stem_token",
]

LOG_HEADER = ["query", "sku_id", "sku_title", "category", "clicks"]


class ClickLogError(ValueError):
    pass


class IsolatedNode(ValueError):
    pass


@dataclass(frozen=True)
class QueryNode:
    id: int
    raw: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class SkuNode:
    id: int
    sku_id: str
    title: str
    category: str


@dataclass
class ClickGraph:
    queries: dict[int, QueryNode] = field(default_factory=dict)
    skus: dict[int, SkuNode] = field(default_factory=dict)
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    def query_edges(self) -> dict[int, dict[int, float]]:
        out: dict[int, dict[int, float]] = defaultdict(dict)
        for (q, s), w in self.edges.items():
            out[q][s] = w
        return out

    def edge_multiset(self) -> list[tuple[str, str, float]]:
        """Edges keyed by raw strings, independent of node-id assignment."""
        return sorted(
            (self.queries[q].raw, self.skus[s].sku_id, w) for (q, s), w in self.edges.items()
        )

    def __eq__(self, other):
        if not isinstance(other, ClickGraph):
            return NotImplemented
        return (self.queries, self.skus, self.edges) == (other.queries, other.skus, other.edges)


@dataclass(frozen=True)
class CleanConfig:
    weight_threshold: float = 2.0
    entropy_max: float = 1.5
    brand_lexicon: frozenset[str] = frozenset()
    prepositions: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.weight_threshold < 0 or self.entropy_max < 0:
            raise ValueError("weight_threshold and entropy_max must be >= 0")
        object.__setattr__(self, "brand_lexicon", frozenset(self.brand_lexicon))
        object.__setattr__(self, "prepositions", frozenset(self.prepositions))

    @classmethod
    def from_dict(cls, d: dict) -> "CleanConfig":
        return cls(
            weight_threshold=float(d.get("weight_threshold", 2.0)),
            entropy_max=float(d.get("entropy_max", 1.5)),
            brand_lexicon=frozenset(normalize_phrase(b) for b in d.get("brand_lexicon", [])),
            prepositions=frozenset(p.lower() for p in d.get("prepositions", [])),
        )

    def to_dict(self) -> dict:
        return {
            "weight_threshold": self.weight_threshold,
            "entropy_max": self.entropy_max,
            "brand_lexicon": sorted(self.brand_lexicon),
            "prepositions": sorted(self.prepositions),
        }


@dataclass(frozen=True)
class Component:
    queries: tuple[int, ...]
    skus: tuple[int, ...]


def ingest(records: Iterable[tuple]) -> ClickGraph:
    """Aggregate (query, sku_id, sku_title, category, clicks) rows.

    Duplicate pairs are summed, zero-click rows dropped. Queries that
    normalize to no tokens are skipped. Node ids follow first-seen order.
    """
    graph = ClickGraph()
    query_ids: dict[str, int] = {}
    sku_ids: dict[str, int] = {}
    for rowno, rec in enumerate(records, start=1):
        try:
            query, sku_id, title, category, clicks = rec
            clicks = float(clicks)
        except (TypeError, ValueError) as e:
            raise ClickLogError(f"row {rowno}: malformed record {rec!r} ({e})") from None
        if not math.isfinite(clicks) or clicks < 0:
            raise ClickLogError(f"row {rowno}: clicks must be a finite number >= 0, got {clicks}")
        if not sku_id:
            raise ClickLogError(f"row {rowno}: empty sku_id")
        if clicks == 0:
            continue
        key = normalize_phrase(query)
        tokens = tuple(normalize(query))
        if not tokens:
            continue
        qid = query_ids.get(key)
        if qid is None:
            qid = query_ids[key] = len(query_ids)
            graph.queries[qid] = QueryNode(qid, query, tokens)
        sid = sku_ids.get(sku_id)
        if sid is None:
            sid = sku_ids[sku_id] = len(sku_ids)
            graph.skus[sid] = SkuNode(sid, sku_id, title, category)
        graph.edges[qid, sid] = graph.edges.get((qid, sid), 0.0) + clicks
    return graph


def read_click_log(path: str | Path) -> Iterator[tuple[str, str, str, str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        yield from parse_click_log(fh, source=str(path))


def parse_click_log(fh: io.TextIOBase, source: str = "<log>") -> Iterator[tuple]:
    header = fh.readline().rstrip("\r\n").split("\t")
    if header != LOG_HEADER:
        raise ClickLogError(f"{source}:1: expected tab-separated header {' '.join(LOG_HEADER)!r}")
    for lineno, line in enumerate(fh, start=2):
        line = line.rstrip("\r\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ClickLogError(f"{source}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
        try:
            float(parts[4])
        except ValueError:
            raise ClickLogError(f"{source}:{lineno}: clicks is not a number: {parts[4]!r}") from None
        yield tuple(parts)


def write_click_log(rows: Iterable[tuple], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(LOG_HEADER) + "\n")
        for row in rows:
            fields = [str(x) for x in row]
            if any("\t" in f or "\n" in f for f in fields):
                raise ClickLogError(f"tab or newline inside field: {row!r}")
            fh.write("\t".join(fields) + "\n")


def category_entropy(graph: ClickGraph, query: int, _edges=None) -> float:
    """Shannon entropy (bits) of the query's click weight over SKU categories."""
    edges = (_edges if _edges is not None else graph.query_edges()).get(query)
    if not edges:
        raise IsolatedNode(f"query {query} has no edges")
    by_cat: dict[str, float] = defaultdict(float)
    for sid, w in edges.items():
        by_cat[graph.skus[sid].category] += w
    total = sum(by_cat.values())
    h = 0.0
    for w in by_cat.values():
        p = w / total
        if p > 0:
            h -= p * math.log2(p)
    return h + 0.0  # normalize -0.0


def clean(graph: ClickGraph, config: CleanConfig) -> ClickGraph:
    """Threshold edges, drop broad and brand-only queries, drop isolated nodes."""
    edges = {k: w for k, w in graph.edges.items() if w >= config.weight_threshold}
    by_query: dict[int, dict[int, float]] = defaultdict(dict)
    for (q, s), w in edges.items():
        by_query[q][s] = w

    brands = {phrase_key(b) for b in config.brand_lexicon}
    drop = set()
    for q in by_query:
        if category_entropy(graph, q, by_query) > config.entropy_max:
            drop.add(q)
        elif graph.queries[q].tokens in brands:
            drop.add(q)
    edges = {k: w for k, w in edges.items() if k[0] not in drop}

    live_q = {q for q, _ in edges}
    live_s = {s for _, s in edges}
    return ClickGraph(
        queries={q: n for q, n in graph.queries.items() if q in live_q},
        skus={s: n for s, n in graph.skus.items() if s in live_s},
        edges=edges,
    )


def restrict_to_category(graph: ClickGraph, category: str) -> ClickGraph:
    """Subgraph of edges into SKUs of one category, isolated nodes dropped."""
    edges = {k: w for k, w in graph.edges.items() if graph.skus[k[1]].category == category}
    live_q = {q for q, _ in edges}
    live_s = {s for _, s in edges}
    return ClickGraph(
        queries={q: n for q, n in graph.queries.items() if q in live_q},
        skus={s: n for s, n in graph.skus.items() if s in live_s},
        edges=edges,
    )


class _DisjointSet:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        root = self.parent.setdefault(x, x)
        while root != self.parent[root]:
            root = self.parent[root]
        while x != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def connected_components(graph: ClickGraph) -> list[Component]:
    """Components of the non-isolated nodes, ordered by smallest query id."""
    ds = _DisjointSet()
    for q, s in graph.edges:
        ds.union(("q", q), ("s", s))
    groups: dict = defaultdict(lambda: ([], []))
    for node in list(ds.parent):
        qs, ss = groups[ds.find(node)]
        (qs if node[0] == "q" else ss).append(node[1])
    comps = [Component(tuple(sorted(qs)), tuple(sorted(ss))) for qs, ss in groups.values()]
    comps.sort(key=lambda c: c.queries[0])
    return comps


# graph files ----------------------------------------------------------------

def graph_to_dict(graph: ClickGraph) -> dict:
    return {
        "queries": [
            {"id": n.id, "raw": n.raw, "tokens": list(n.tokens)}
            for _, n in sorted(graph.queries.items())
        ],
        "skus": [
            {"id": n.id, "sku_id": n.sku_id, "title": n.title, "category": n.category}
            for _, n in sorted(graph.skus.items())
        ],
        "edges": [[q, s, w] for (q, s), w in sorted(graph.edges.items())],
    }


def graph_from_dict(d: dict) -> ClickGraph:
    try:
        return ClickGraph(
            queries={q["id"]: QueryNode(q["id"], q["raw"], tuple(q["tokens"])) for q in d["queries"]},
            skus={
                s["id"]: SkuNode(s["id"], s["sku_id"], s["title"], s["category"]) for s in d["skus"]
            },
            edges={(int(q), int(s)): float(w) for q, s, w in d["edges"]},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ClickLogError(f"malformed graph file: {e!r}") from None


def save_graph(graph: ClickGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph), sort_keys=True) + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> ClickGraph:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ClickLogError(f"{path}: line {e.lineno}: {e.msg}") from None
    return graph_from_dict(data)
