import pytest

from searchonto.nerc import NumericValue
from searchonto.ontology import Concept, Kind, Ontology
from searchonto.retrieval import SkuRecord, index_skus


def P(cid, name, synonyms=(), parent=None):
    return Concept(cid, Kind.PRODUCT, name, frozenset(synonyms), parent)


def B(cid, name, synonyms=()):
    return Concept(cid, Kind.BRAND, name, frozenset(synonyms))


def A(cid, name, subclass, synonyms=()):
    return Concept(cid, Kind.ATTRIBUTE, name, frozenset(synonyms), None, subclass)


def retail_concepts():
    return [
        P("tv", "tv", ["television"]),
        P("shirt", "shirt", ["tee"]),
        P("stool", "stool"),
        P("barstool", "barstool", ["bar stool"], parent="stool"),
        P("tissue", "tissue", ["facial tissue"]),
        P("dress", "dress"),
        B("kleenex", "kleenex"),
        B("puffs", "puffs"),
        B("dkny", "dkny"),
        A("cotton", "cotton", "Material"),
        A("polyester", "polyester", "Material"),
        A("white", "white", "Color"),
        A("women", "women", "Gender", ["womens"]),
        A("sleeveless", "sleeveless", "Style"),
    ]


@pytest.fixture
def retail_ontology():
    return Ontology.build(
        retail_concepts(),
        attributes_slot={"shirt": ["cotton", "polyester", "white"], "dress": ["white", "sleeveless"]},
        default_product={"kleenex": "tissue", "puffs": "tissue"},
        prepositions=["for", "with"],
    )


def _inch(x):
    return {"screen_size": NumericValue(x, "inch", x * 2.54)}


def retail_skus():
    return [
        SkuRecord("shirt-cotton", "cotton crew shirt", "shirt", None, frozenset({"cotton"}), "cotton"),
        SkuRecord("shirt-poly", "poly cotton blend shirt", "shirt", None,
                  frozenset({"polyester", "cotton"}), "polyester"),
        SkuRecord("tv-43", "43 inch led tv", "tv", numeric_attributes=_inch(43.0)),
        SkuRecord("tv-49", "49 inch led tv", "tv", numeric_attributes=_inch(49.0)),
        SkuRecord("stool-step", "wooden step stool", "stool"),
        SkuRecord("barstool-1", "counter height bar stool", "barstool"),
        SkuRecord("barstool-2", "swivel barstool", "barstool"),
        SkuRecord("tissue-kleenex", "kleenex facial tissue", "tissue", "kleenex"),
        SkuRecord("tissue-puffs", "puffs facial tissue", "tissue", "puffs"),
        SkuRecord("tissue-generic", "facial tissue 6 pack", "tissue"),
        SkuRecord("dress-dkny", "dkny sleeveless dress", "dress", "dkny",
                  frozenset({"sleeveless", "white"}), "white"),
    ]


@pytest.fixture
def retail_index(retail_ontology):
    return index_skus(retail_skus(), retail_ontology)


def click_rows(spec):
    """[(query, sku, category, clicks)] -> ingest records with titles."""
    return [(q, s, f"title {s}", cat, n) for q, s, cat, n in spec]


_SUBCLASSES = ["Color", "Material", "Gender", "Style", "Size"]


def random_ontology(rng):
    """Valid ontology: a forest per kind with random synonyms and slots."""
    n = int(rng.integers(1, 25))
    letters = list("abcdefghijklmnopqrstuvwxyz")
    concepts = []
    by_kind = {k: [] for k in Kind}
    for i in range(n):
        kind = list(Kind)[int(rng.integers(0, 3))]
        cid = f"c{i}"
        same = by_kind[kind]
        parent = same[int(rng.integers(0, len(same)))] if same and rng.random() < 0.6 else None
        word = "".join(rng.choice(letters, size=int(rng.integers(3, 8))))
        syns = {f"{word} {s}" for s in rng.choice(letters, size=int(rng.integers(0, 3)))}
        sub = _SUBCLASSES[int(rng.integers(0, 5))] if kind == Kind.ATTRIBUTE else None
        concepts.append(Concept(cid, kind, f"{word}{i}", frozenset(syns), parent, sub))
        same.append(cid)
    products, attrs, brands = by_kind[Kind.PRODUCT], by_kind[Kind.ATTRIBUTE], by_kind[Kind.BRAND]
    slots = {p: list(rng.choice(attrs, size=min(len(attrs), 2), replace=False)) for p in products if attrs}
    defaults = {b: products[int(rng.integers(0, len(products)))] for b in brands if products}
    units = {"inch": 2.54, "cm": 1.0}
    if rng.random() < 0.5:
        units["mm"] = 0.1
    return Ontology.build(concepts, slots, defaults, ["for", "with"][: int(rng.integers(0, 3))], units)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion, then assert it."""

    def record(number, description, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {description}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
