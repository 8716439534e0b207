"""Query annotation: label each token Product / Brand / Attribute /
NumericAttr / Other against the ontology lexicon, with an optional
tagger to fill product gaps and brand -> default product expansion."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .ontology import Kind, Ontology
from .text import stem_token, tokenize

PRODUCT, BRAND, ATTRIBUTE, NUMERIC, OTHER = "Product", "Brand", "Attribute", "NumericAttr", "Other"
_KIND_LABEL = {Kind.PRODUCT: PRODUCT, Kind.BRAND: BRAND, Kind.ATTRIBUTE: ATTRIBUTE}
_KIND_PRIORITY = {Kind.PRODUCT: 0, Kind.BRAND: 1, Kind.ATTRIBUTE: 2}

_NUMBER = re.compile(r"\d+(?:\.\d+)?")
_NUMBER_UNIT = re.compile(r"(\d+(?:\.\d+)?)([a-z]+)")

# A span tagger maps stemmed tokens to product spans as (start, end) pairs.
SpanTagger = Callable[[Sequence[str]], Sequence[tuple[int, int]]]


@dataclass(frozen=True)
class NumericValue:
    magnitude: float
    unit: str
    canonical_magnitude: float
    attribute_hint: str | None = None

    def to_dict(self) -> dict:
        return {
            "magnitude": self.magnitude,
            "unit": self.unit,
            "canonical_magnitude": self.canonical_magnitude,
            "attribute_hint": self.attribute_hint,
        }


@dataclass(frozen=True)
class TokenAssignment:
    text: str
    label: str
    concept: str | None = None
    subclass: str | None = None


@dataclass(frozen=True)
class QueryAnnotation:
    query: str
    tokens: tuple[str, ...]
    assignments: tuple[TokenAssignment, ...]
    product_ids: tuple[str, ...] = ()
    brand_ids: tuple[str, ...] = ()
    attribute_ids: tuple[str, ...] = ()
    numeric_values: tuple[NumericValue, ...] = ()
    unresolved_products: tuple[str, ...] = ()
    default_products: tuple[str, ...] = ()

    @property
    def fallback(self) -> bool:
        return not self.product_ids

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "tokens": [
                {"text": a.text, "label": a.label, "concept": a.concept, "subclass": a.subclass}
                for a in self.assignments
            ],
            "products": list(self.product_ids),
            "brands": list(self.brand_ids),
            "attributes": list(self.attribute_ids),
            "numeric": [v.to_dict() for v in self.numeric_values],
            "unresolved_products": list(self.unresolved_products),
            "default_products": list(self.default_products),
            "fallback": self.fallback,
        }


def unit_lookup(unit_table: Mapping[str, float]) -> dict[str, tuple[str, float]]:
    """Stemmed unit spelling -> (unit name, factor to canonical)."""
    return {stem_token(u.lower()): (u, f) for u, f in unit_table.items()}


def _numeric_spans(tokens: Sequence[str], unit_table: Mapping[str, float]):
    units = unit_lookup(unit_table)
    spans = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if _NUMBER.fullmatch(tok) and i + 1 < len(tokens) and stem_token(tokens[i + 1]) in units:
            name, factor = units[stem_token(tokens[i + 1])]
            spans.append((i, i + 2, _value(float(tok), name, factor)))
            i += 2
            continue
        m = _NUMBER_UNIT.fullmatch(tok)
        if m and stem_token(m.group(2)) in units:
            name, factor = units[stem_token(m.group(2))]
            spans.append((i, i + 1, _value(float(m.group(1)), name, factor)))
        i += 1
    return spans


def _value(magnitude: float, unit: str, factor: float) -> NumericValue:
    return NumericValue(magnitude, unit, magnitude * factor)


def parse_numeric(tokens: Sequence[str], unit_table: Mapping[str, float]) -> list[NumericValue]:
    """``<number> <unit>`` and ``<number><unit>`` mentions, converted to the
    canonical unit. Unknown units are ignored."""
    return [v for _, _, v in _numeric_spans([t.lower() for t in tokens], unit_table)]


def annotate(query: str, ontology: Ontology, tagger: SpanTagger | None = None) -> QueryAnnotation:
    surface = tokenize(query)
    stems = [stem_token(t) for t in surface]
    labels: list[TokenAssignment | None] = [None] * len(surface)

    numeric = []
    for start, end, value in _numeric_spans(surface, ontology.units):
        numeric.append(value)
        for k in range(start, end):
            labels[k] = TokenAssignment(surface[k], NUMERIC)

    i = 0
    while i < len(stems):
        if labels[i] is not None:
            i += 1
            continue
        best = None
        for n in range(min(ontology.max_phrase_len, len(stems) - i), 0, -1):
            if any(labels[k] is not None for k in range(i, i + n)):
                continue
            ids = ontology.lexicon.get(tuple(stems[i:i + n]))
            if ids:
                best = (n, min(ids, key=lambda c: (_KIND_PRIORITY[ontology[c].kind], c)))
                break
        if best is None:
            i += 1
            continue
        n, cid = best
        concept = ontology[cid]
        for k in range(i, i + n):
            labels[k] = TokenAssignment(
                surface[k], _KIND_LABEL[concept.kind], cid, concept.attribute_subclass
            )
        i += n

    unresolved = []
    if tagger is not None and not any(a and a.label == PRODUCT for a in labels):
        for start, end in tagger(stems):
            key = tuple(stems[start:end])
            ids = [c for c in ontology.lexicon.get(key, ()) if ontology[c].kind == Kind.PRODUCT]
            free = all(labels[k] is None for k in range(start, end))
            if ids and free:
                for k in range(start, end):
                    labels[k] = TokenAssignment(surface[k], PRODUCT, ids[0])
            else:
                unresolved.append(" ".join(key))

    assignments = tuple(a or TokenAssignment(surface[k], OTHER) for k, a in enumerate(labels))

    def ids_of(label):
        out = []
        for a in assignments:
            if a.label == label and a.concept not in out:
                out.append(a.concept)
        return tuple(out)

    return QueryAnnotation(
        query=query,
        tokens=tuple(surface),
        assignments=assignments,
        product_ids=ids_of(PRODUCT),
        brand_ids=ids_of(BRAND),
        attribute_ids=ids_of(ATTRIBUTE),
        numeric_values=tuple(numeric),
        unresolved_products=tuple(unresolved),
    )


def apply_default_product(annotation: QueryAnnotation, ontology: Ontology) -> QueryAnnotation:
    """Inject brands' default products when the query names no product."""
    if annotation.product_ids:
        return annotation
    injected = []
    for bid in annotation.brand_ids:
        pid = ontology.default_product.get(bid)
        if pid is not None and pid not in injected:
            injected.append(pid)
    if not injected:
        return annotation
    return replace(annotation, product_ids=tuple(injected), default_products=tuple(injected))


def lstm_span_tagger(model, embeddings) -> SpanTagger:
    """Adapt a trained LSTM-CRF model to the span-tagger interface."""

    def tag(stems):
        tags = model.tag(list(stems), embeddings)
        spans, start = [], None
        for k, t in enumerate(tags + ["O"]):
            if t != "I-PRODUCT" and start is not None:
                spans.append((start, k))
                start = None
            if t == "B-PRODUCT":
                start = k
        return spans

    return tag
