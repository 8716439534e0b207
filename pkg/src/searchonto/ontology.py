"""Search-side product ontology: Product/Brand/Attribute concepts, is-a
links, slots, validation and JSON persistence."""
from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .text import normalize_phrase, phrase_key

ID_PATTERN = re.compile(r"[a-z0-9_\-]+")
REQUIRED_UNITS = {"inch": 2.54, "cm": 1.0}


class Kind(str, Enum):
    PRODUCT = "Product"
    BRAND = "Brand"
    ATTRIBUTE = "Attribute"


class OntologyError(Exception):
    pass


class UnknownConcept(OntologyError, KeyError):
    def __str__(self):
        return f"unknown concept: {self.args[0]!r}"


class OntologyParseError(OntologyError, ValueError):
    pass


class OntologyValidationError(OntologyError):
    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        lines = "; ".join(f"{v.concept_id}: {v.reason}" for v in violations)
        super().__init__(f"ontology invalid: {lines}")


@dataclass(frozen=True, order=True)
class Violation:
    concept_id: str
    reason: str


@dataclass(frozen=True)
class Concept:
    id: str
    kind: Kind
    name: str
    synonyms: frozenset[str] = frozenset()
    parent: str | None = None
    attribute_subclass: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "name", normalize_phrase(self.name))
        object.__setattr__(
            self, "synonyms", frozenset(normalize_phrase(s) for s in self.synonyms)
        )

    def surface_forms(self) -> list[str]:
        return [self.name, *sorted(self.synonyms)]


@dataclass(frozen=True)
class Ontology:
    """Immutable after construction; lookups are built lazily and cached."""

    concepts: Mapping[str, Concept] = field(default_factory=dict)
    attributes_slot: Mapping[str, frozenset[str]] = field(default_factory=dict)
    default_product: Mapping[str, str] = field(default_factory=dict)
    prepositions: frozenset[str] = frozenset()
    units: Mapping[str, float] = field(default_factory=lambda: dict(REQUIRED_UNITS))

    @classmethod
    def build(
        cls,
        concepts: Iterable[Concept],
        attributes_slot: Mapping[str, Iterable[str]] | None = None,
        default_product: Mapping[str, str] | None = None,
        prepositions: Iterable[str] = (),
        units: Mapping[str, float] | None = None,
    ) -> "Ontology":
        return cls(
            concepts={c.id: c for c in concepts},
            attributes_slot={
                k: frozenset(v) for k, v in (attributes_slot or {}).items()
            },
            default_product=dict(default_product or {}),
            prepositions=frozenset(prepositions),
            units=dict(REQUIRED_UNITS if units is None else units),
        )

    def __getitem__(self, cid: str) -> Concept:
        try:
            return self.concepts[cid]
        except KeyError:
            raise UnknownConcept(cid) from None

    def __contains__(self, cid: str) -> bool:
        return cid in self.concepts

    def of_kind(self, kind: Kind) -> list[Concept]:
        return [c for _, c in sorted(self.concepts.items()) if c.kind == kind]

    @cached_property
    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for cid in sorted(self.concepts):
            parent = self.concepts[cid].parent
            if parent is not None:
                out[parent].append(cid)
        return dict(out)

    @cached_property
    def lexicon(self) -> dict[tuple[str, ...], list[str]]:
        """Stemmed surface form -> concept ids carrying it."""
        out: dict[tuple[str, ...], set[str]] = defaultdict(set)
        for cid, c in self.concepts.items():
            for form in c.surface_forms():
                key = phrase_key(form)
                if key:
                    out[key].add(cid)
        return {k: sorted(v) for k, v in out.items()}

    @cached_property
    def max_phrase_len(self) -> int:
        return max((len(k) for k in self.lexicon), default=0)


def validate(ontology: Ontology) -> list[Violation]:
    """Every invariant violation, sorted by concept id then reason."""
    found: set[Violation] = set()
    concepts = ontology.concepts

    for cid, c in concepts.items():
        if cid != c.id:
            found.add(Violation(cid, f"key does not match concept id {c.id!r}"))
        if not ID_PATTERN.fullmatch(cid):
            found.add(Violation(cid, "id must match [a-z0-9_-]+"))
        if not c.name:
            found.add(Violation(cid, "empty name"))
        if c.name in c.synonyms:
            found.add(Violation(cid, "name listed among synonyms"))
        if (c.kind == Kind.ATTRIBUTE) != (c.attribute_subclass is not None):
            found.add(Violation(cid, "attribute_subclass present iff kind is Attribute"))
        if c.parent is not None:
            if c.parent not in concepts:
                found.add(Violation(cid, f"parent {c.parent!r} does not exist"))
            elif concepts[c.parent].kind != c.kind:
                found.add(Violation(cid, f"parent {c.parent!r} has a different kind"))

    found.update(_cycle_violations(concepts))

    for pid, aids in ontology.attributes_slot.items():
        if pid not in concepts:
            found.add(Violation(pid, "attributes slot: unknown concept"))
        elif concepts[pid].kind != Kind.PRODUCT:
            found.add(Violation(pid, "attributes slot: domain must be Product"))
        for aid in aids:
            if aid not in concepts:
                found.add(Violation(pid, f"attributes slot: unknown concept {aid!r}"))
            elif concepts[aid].kind != Kind.ATTRIBUTE:
                found.add(Violation(pid, f"attributes slot: range must be Attribute ({aid!r})"))

    for bid, pid in ontology.default_product.items():
        if bid not in concepts:
            found.add(Violation(bid, "default_product: unknown concept"))
        elif concepts[bid].kind != Kind.BRAND:
            found.add(Violation(bid, "default_product: domain must be Brand"))
        if pid not in concepts:
            found.add(Violation(bid, f"default_product: unknown concept {pid!r}"))
        elif concepts[pid].kind != Kind.PRODUCT:
            found.add(Violation(bid, f"default_product: range must be Product ({pid!r})"))

    for unit, factor in REQUIRED_UNITS.items():
        if ontology.units.get(unit) != factor:
            found.add(Violation("", f"units: {unit} must map to {factor}"))
    for unit, factor in ontology.units.items():
        if not factor > 0:
            found.add(Violation("", f"units: factor for {unit} must be positive"))

    return sorted(found)


def _cycle_violations(concepts: Mapping[str, Concept]) -> list[Violation]:
    out = []
    state: dict[str, int] = {}  # 1 = on current walk, 2 = done
    for start in sorted(concepts):
        path = []
        cid: str | None = start
        while cid is not None and cid in concepts and state.get(cid) is None:
            state[cid] = 1
            path.append(cid)
            cid = concepts[cid].parent
        if cid is not None and state.get(cid) == 1:
            cycle = path[path.index(cid):]
            out.append(Violation(min(cycle), "cycle: " + " -> ".join(cycle + [cid])))
        for p in path:
            state[p] = 2
    return out


def descendants_or_self(ontology: Ontology, cid: str) -> set[str]:
    ontology[cid]  # raises UnknownConcept
    seen = {cid}
    stack = [cid]
    while stack:
        for child in ontology.children.get(stack.pop(), ()):
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return seen


def resolve_term(ontology: Ontology, phrase: list[str] | tuple[str, ...]) -> list[tuple[str, Kind, int]]:
    """Concepts whose name or synonym equals a prefix of the stemmed phrase.

    Longest matches first, then by id.
    """
    phrase = tuple(phrase)
    hits = []
    for n in range(1, min(len(phrase), ontology.max_phrase_len) + 1):
        for cid in ontology.lexicon.get(phrase[:n], ()):
            hits.append((cid, ontology.concepts[cid].kind, n))
    hits.sort(key=lambda h: (-h[2], h[0]))
    return hits


# persistence ---------------------------------------------------------------

_CONCEPT_FIELDS = ("id", "kind", "name", "synonyms", "parent", "attribute_subclass")


def to_json_dict(ontology: Ontology) -> dict:
    return {
        "concepts": [
            {
                "attribute_subclass": c.attribute_subclass,
                "id": c.id,
                "kind": c.kind.value,
                "name": c.name,
                "parent": c.parent,
                "synonyms": sorted(c.synonyms),
            }
            for _, c in sorted(ontology.concepts.items())
        ],
        "attributes_slot": {k: sorted(v) for k, v in sorted(ontology.attributes_slot.items())},
        "default_product": dict(sorted(ontology.default_product.items())),
        "prepositions": sorted(ontology.prepositions),
        "units": dict(sorted(ontology.units.items())),
    }


def dumps(ontology: Ontology) -> str:
    return json.dumps(to_json_dict(ontology), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def from_json_dict(data: dict) -> Ontology:
    """Parse without validating. Raises OntologyParseError naming the field."""
    if not isinstance(data, dict):
        raise OntologyParseError("top level must be a JSON object")
    raw_concepts = data.get("concepts", [])
    if not isinstance(raw_concepts, list):
        raise OntologyParseError("field 'concepts' must be an array")
    concepts = []
    seen_ids = set()
    for i, raw in enumerate(raw_concepts):
        where = f"concepts[{i}]"
        if not isinstance(raw, dict):
            raise OntologyParseError(f"{where}: must be an object")
        for key in ("id", "kind", "name"):
            if key not in raw:
                raise OntologyParseError(f"{where}: missing field '{key}'")
            if not isinstance(raw[key], str):
                raise OntologyParseError(f"{where}.{key}: must be a string")
        unknown = set(raw) - set(_CONCEPT_FIELDS)
        if unknown:
            raise OntologyParseError(f"{where}: unknown field(s) {sorted(unknown)}")
        try:
            kind = Kind(raw["kind"])
        except ValueError:
            raise OntologyParseError(
                f"{where}.kind: expected one of Product/Brand/Attribute, got {raw['kind']!r}"
            ) from None
        synonyms = raw.get("synonyms", [])
        if not isinstance(synonyms, list) or not all(isinstance(s, str) for s in synonyms):
            raise OntologyParseError(f"{where}.synonyms: must be an array of strings")
        normed = [normalize_phrase(s) for s in synonyms]
        if len(set(normed)) != len(normed):
            raise OntologyParseError(f"{where}.synonyms: duplicate entries")
        for key in ("parent", "attribute_subclass"):
            if raw.get(key) is not None and not isinstance(raw[key], str):
                raise OntologyParseError(f"{where}.{key}: must be a string or null")
        if raw["id"] in seen_ids:
            raise OntologyParseError(f"{where}.id: duplicate id {raw['id']!r}")
        seen_ids.add(raw["id"])
        concepts.append(
            Concept(
                id=raw["id"],
                kind=kind,
                name=raw["name"],
                synonyms=frozenset(normed),
                parent=raw.get("parent"),
                attribute_subclass=raw.get("attribute_subclass"),
            )
        )

    def mapping(key, value_check, desc):
        value = data.get(key, {})
        if not isinstance(value, dict) or not all(value_check(v) for v in value.values()):
            raise OntologyParseError(f"field '{key}' must be an object of {desc}")
        return value

    attrs = mapping(
        "attributes_slot",
        lambda v: isinstance(v, list) and all(isinstance(a, str) for a in v),
        "string arrays",
    )
    defaults = mapping("default_product", lambda v: isinstance(v, str), "strings")
    units = mapping(
        "units",
        lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        "numbers",
    ) if "units" in data else dict(REQUIRED_UNITS)
    preps = data.get("prepositions", [])
    if not isinstance(preps, list) or not all(isinstance(p, str) for p in preps):
        raise OntologyParseError("field 'prepositions' must be an array of strings")

    return Ontology.build(
        concepts,
        attributes_slot=attrs,
        default_product=defaults,
        prepositions=[p.lower() for p in preps],
        units={k: float(v) for k, v in units.items()},
    )


def loads(text: str) -> Ontology:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise OntologyParseError(f"line {e.lineno} column {e.colno}: {e.msg}") from None
    ontology = from_json_dict(data)
    violations = validate(ontology)
    if violations:
        raise OntologyValidationError(violations)
    return ontology


def load(path: str | Path) -> Ontology:
    return loads(Path(path).read_text(encoding="utf-8"))


def save(ontology: Ontology, path: str | Path) -> None:
    Path(path).write_text(dumps(ontology), encoding="utf-8")
