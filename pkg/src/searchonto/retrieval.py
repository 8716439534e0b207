"""Filter-then-boost SKU retrieval over a product-class inverted index."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import ontology as onto
from .nerc import NumericValue, QueryAnnotation, annotate, apply_default_product, unit_lookup
from .ontology import Kind, Ontology, UnknownConcept, descendants_or_self
from .text import normalize, stem_token

PRIMARY_SUBCLASSES = frozenset({"Color", "Material"})


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class SkuRecord:
    sku_id: str
    title: str
    product_class: str
    brand: str | None = None
    attributes: frozenset[str] = frozenset()
    primary_attribute: str | None = None
    numeric_attributes: Mapping[str, NumericValue] = field(default_factory=dict)
    category: str = ""

    def to_dict(self) -> dict:
        return {
            "sku_id": self.sku_id,
            "title": self.title,
            "product_class": self.product_class,
            "brand": self.brand,
            "attributes": sorted(self.attributes),
            "primary_attribute": self.primary_attribute,
            "numeric_attributes": {
                k: {"magnitude": v.magnitude, "unit": v.unit} for k, v in sorted(self.numeric_attributes.items())
            },
            "category": self.category,
        }


def sku_from_dict(d: dict, units: Mapping[str, float], where: str = "") -> SkuRecord:
    try:
        numeric = {}
        lookup = unit_lookup(units)
        for label, v in (d.get("numeric_attributes") or {}).items():
            unit = str(v["unit"])
            hit = lookup.get(stem_token(unit.lower()))
            if hit is None:
                raise CatalogError(f"{where}numeric attribute {label!r}: unknown unit {unit!r}")
            name, factor = hit
            mag = float(v["magnitude"])
            numeric[label] = NumericValue(mag, name, mag * factor, label)
        return SkuRecord(
            sku_id=str(d["sku_id"]),
            title=str(d.get("title", "")),
            product_class=str(d["product_class"]),
            brand=d.get("brand"),
            attributes=frozenset(d.get("attributes") or ()),
            primary_attribute=d.get("primary_attribute"),
            numeric_attributes=numeric,
            category=str(d.get("category", "")),
        )
    except KeyError as e:
        raise CatalogError(f"{where}missing field {e}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, CatalogError):
            raise
        raise CatalogError(f"{where}bad value ({e})") from None


def read_catalog(path: str | Path, units: Mapping[str, float]) -> list[SkuRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise CatalogError(f"{path}:{lineno}: {e.msg}") from None
            out.append(sku_from_dict(d, units, f"{path}:{lineno}: "))
    return out


def write_catalog(records: Iterable[SkuRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


@dataclass
class SkuIndex:
    by_product: dict[str, list[str]]
    records: dict[str, SkuRecord]
    ontology: Ontology

    def to_dict(self) -> dict:
        return {
            "ontology": onto.to_json_dict(self.ontology),
            "skus": [self.records[s].to_dict() for s in sorted(self.records)],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SkuIndex":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CatalogError(f"{path}: line {e.lineno}: {e.msg}") from None
        ontology = onto.from_json_dict(data["ontology"])
        violations = onto.validate(ontology)
        if violations:
            raise onto.OntologyValidationError(violations)
        return index_skus([sku_from_dict(d, ontology.units) for d in data["skus"]], ontology)


def _check_ref(ontology: Ontology, cid: str, kind: Kind, what: str, sku: str) -> None:
    if cid not in ontology:
        raise UnknownConcept(cid)
    if ontology[cid].kind != kind:
        raise CatalogError(f"sku {sku}: {what} {cid!r} is not a {kind.value}")


def index_skus(records: Iterable[SkuRecord], ontology: Ontology) -> SkuIndex:
    by_product: dict[str, list[str]] = defaultdict(list)
    store: dict[str, SkuRecord] = {}
    for r in records:
        if r.sku_id in store:
            raise CatalogError(f"duplicate sku_id {r.sku_id!r}")
        _check_ref(ontology, r.product_class, Kind.PRODUCT, "product_class", r.sku_id)
        if r.brand is not None:
            _check_ref(ontology, r.brand, Kind.BRAND, "brand", r.sku_id)
        for a in r.attributes:
            _check_ref(ontology, a, Kind.ATTRIBUTE, "attribute", r.sku_id)
        if r.primary_attribute is not None:
            if r.primary_attribute not in r.attributes:
                raise CatalogError(f"sku {r.sku_id}: primary_attribute must be one of its attributes")
            if ontology[r.primary_attribute].attribute_subclass not in PRIMARY_SUBCLASSES:
                raise CatalogError(f"sku {r.sku_id}: primary_attribute must be a Color or Material")
        store[r.sku_id] = r
        by_product[r.product_class].append(r.sku_id)
    return SkuIndex({k: sorted(v) for k, v in by_product.items()}, store, ontology)


@dataclass(frozen=True)
class ScoreWeights:
    w_attr: float = 1.0
    w_primary: float = 2.0
    w_brand: float = 1.5
    w_numeric: float = 1.0

    def __post_init__(self):
        if min(self.w_attr, self.w_primary, self.w_brand, self.w_numeric) < 0:
            raise ValueError("score weights must be >= 0")


@dataclass(frozen=True)
class Breakdown:
    matched_attrs: tuple[str, ...] = ()
    primary: bool = False
    brand: bool = False
    numeric_deltas: tuple[float, ...] = ()
    title_overlap: int = 0


@dataclass(frozen=True)
class RankedResult:
    sku_id: str
    score: float
    matched: Breakdown
    fallback: bool = False


def _pair_numeric(query_values, sku: SkuRecord) -> list[float]:
    deltas = []
    for qv in query_values:
        if qv.attribute_hint and qv.attribute_hint in sku.numeric_attributes:
            sv = sku.numeric_attributes[qv.attribute_hint]
            deltas.append(abs(qv.canonical_magnitude - sv.canonical_magnitude))
        elif sku.numeric_attributes:
            deltas.append(min(abs(qv.canonical_magnitude - sv.canonical_magnitude)
                              for sv in sku.numeric_attributes.values()))
    return deltas


def score_sku(sku: SkuRecord, annotation: QueryAnnotation, ontology: Ontology | None = None,
              weights: ScoreWeights = ScoreWeights()) -> tuple[float, Breakdown]:
    """Fixed boosts for matched attributes, primary attribute and brand,
    plus w_numeric / (1 + |delta|) per numeric value (canonical units)."""
    query_attrs = set(annotation.attribute_ids)
    matched = tuple(sorted(query_attrs & sku.attributes))
    primary = sku.primary_attribute is not None and sku.primary_attribute in query_attrs
    brand = sku.brand is not None and sku.brand in annotation.brand_ids
    deltas = tuple(_pair_numeric(annotation.numeric_values, sku))
    score = (
        weights.w_attr * len(matched)
        + weights.w_primary * primary
        + weights.w_brand * brand
        + sum(weights.w_numeric / (1.0 + d) for d in deltas)
    )
    return float(score), Breakdown(matched, primary, brand, deltas)


def search(annotation: QueryAnnotation, index: SkuIndex, ontology: Ontology | None = None,
           weights: ScoreWeights = ScoreWeights(), k: int | None = 10) -> list[RankedResult]:
    """Recall SKUs of the query products and their subclasses, then rank.

    Without a recognized product, SKUs are ranked by title-token overlap
    (plus the same boosts) and every result is flagged as fallback.
    """
    ontology = ontology or index.ontology
    results = []
    if annotation.product_ids:
        allowed = set()
        for pid in annotation.product_ids:
            allowed |= descendants_or_self(ontology, pid)
        for pid in sorted(allowed):
            for sid in index.by_product.get(pid, ()):
                score, br = score_sku(index.records[sid], annotation, ontology, weights)
                results.append(RankedResult(sid, score, br))
    else:
        query_terms = set(normalize(" ".join(annotation.tokens)))
        for sid, sku in index.records.items():
            overlap = len(query_terms & set(normalize(sku.title)))
            score, br = score_sku(sku, annotation, ontology, weights)
            if overlap or score > 0:
                br = Breakdown(br.matched_attrs, br.primary, br.brand, br.numeric_deltas, overlap)
                results.append(RankedResult(sid, overlap + score, br, fallback=True))
    results.sort(key=lambda r: (-r.score, r.sku_id))
    return results if k is None else results[:k]


def search_query(query: str, index: SkuIndex, weights: ScoreWeights = ScoreWeights(),
                 k: int | None = 10, tagger=None) -> list[RankedResult]:
    annotation = apply_default_product(annotate(query, index.ontology, tagger), index.ontology)
    return search(annotation, index, index.ontology, weights, k)


def results_to_csv(results: Iterable[RankedResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "sku_id", "score", "matched_attrs", "primary", "brand"])
    for rank, r in enumerate(results, start=1):
        w.writerow([
            rank, r.sku_id, repr(round(r.score, 12)), ";".join(r.matched.matched_attrs),
            int(r.matched.primary), int(r.matched.brand),
        ])
    return buf.getvalue()
