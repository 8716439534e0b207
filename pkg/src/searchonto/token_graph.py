"""Unsupervised product extraction from per-component token graphs.

Queries in a click-graph component are truncated at their first
preposition, adjacent tokens are linked, and the token with the largest
share of incoming edge weight is taken as the component's product.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .clickgraph import ClickGraph, connected_components
from .evaluation import CandidateList
from .text import stem_token


class EmptyComponent(ValueError):
    pass


@dataclass
class TokenGraph:
    nodes: dict[str, None] = field(default_factory=dict)  # insertion-ordered set
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        self._in: dict[str, int] = defaultdict(int)
        self._out: dict[str, int] = defaultdict(int)
        for (a, b), w in self.edges.items():
            self._out[a] += w
            self._in[b] += w

    def add_query(self, tokens: Sequence[str]) -> None:
        for tok in tokens:
            self.nodes.setdefault(tok)
        for a, b in zip(tokens, tokens[1:]):
            self.edges[a, b] = self.edges.get((a, b), 0) + 1
            self._out[a] += 1
            self._in[b] += 1

    def n_in(self, token: str) -> int:
        return self._in.get(token, 0)

    def n_out(self, token: str) -> int:
        return self._out.get(token, 0)

    def score(self, token: str) -> "RatioScore":
        if token not in self.nodes:
            raise KeyError(token)
        return RatioScore.of(token, self.n_in(token), self.n_out(token))


@dataclass(frozen=True)
class RatioScore:
    token: str
    n_in: float
    n_out: float
    ratio: float

    @classmethod
    def of(cls, token: str, n_in: float, n_out: float) -> "RatioScore":
        total = n_in + n_out
        return cls(token, n_in, n_out, n_in / total if total else 0.5)


def truncate_at_preposition(tokens: Sequence[str], prepositions: Iterable[str]) -> list[str]:
    """Prefix of ``tokens`` before the first preposition."""
    preps = set(prepositions)
    out = []
    for tok in tokens:
        if tok in preps:
            break
        out.append(tok)
    return out


def build_token_graph(queries: Iterable[Sequence[str]]) -> TokenGraph:
    graph = TokenGraph()
    for q in queries:
        graph.add_query(list(q))
    return graph


def product_candidate(graph: TokenGraph) -> tuple[str, RatioScore]:
    """Max incoming ratio; ties go to the busier node, then alphabetical."""
    if not graph.nodes:
        raise EmptyComponent("token graph has no nodes")
    best = min(
        (graph.score(t) for t in graph.nodes),
        key=lambda s: (-s.ratio, -(s.n_in + s.n_out), s.token),
    )
    return best.token, best


def component_token_graphs(
    graph: ClickGraph, prepositions: Iterable[str], truncate: bool = True
) -> list[tuple[list[int], TokenGraph]]:
    """(query ids, token graph) per connected component of ``graph``."""
    preps = {stem_token(p) for p in prepositions}
    out = []
    for comp in connected_components(graph):
        tg = TokenGraph()
        for qid in comp.queries:
            tokens = list(graph.queries[qid].tokens)
            if truncate:
                tokens = truncate_at_preposition(tokens, preps)
            if tokens:
                tg.add_query(tokens)
        out.append((list(comp.queries), tg))
    return out


def extract_all(graph: ClickGraph, prepositions: Iterable[str] = ()) -> CandidateList:
    """One candidate per component, counted across components."""
    counts: Counter[str] = Counter()
    for _, tg in component_token_graphs(graph, prepositions):
        if tg.nodes:
            token, _ = product_candidate(tg)
            counts[token] += 1
    return CandidateList.from_counts(counts)
