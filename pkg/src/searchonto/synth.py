"""Seeded synthetic click logs with planted ground truth.

Queries follow ``[brand] [attribute]* product [attribute] [qty] [prep tail]``
over invented vocabulary, so every product, attribute and brand is known
exactly. Each product owns a few SKU groups; a query string always clicks
within one group, which yields several click-graph components per
product. Noise adds broad queries (spread over categories), brand-only
queries and stray clicks into other products.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ontology as onto
from .augmented import POS_TAGS, LabeledQuery, write_labeled_queries, write_pos_table
from .clickgraph import write_click_log
from .evaluation import annotations_to_csv
from .lstm_crf import EmbeddingTable, IobSequence, write_embeddings, write_iob
from .ontology import Concept, Kind
from .retrieval import SkuRecord, write_catalog
from .text import stem_token

CATEGORIES = ("electronics", "womens", "mens", "kids", "furniture", "home", "baby")
PREPOSITIONS = ("for", "with", "by", "in", "to")
ATTRIBUTE_SUBCLASSES = ("Color", "Material", "Style", "Gender", "Size")
QUANTITY_WORDS = ("ct", "pack", "count")
BROAD_WORDS = ("cheap", "sale", "gift", "deal", "new", "best", "clearance", "top")
_RESERVED = set(PREPOSITIONS) | set(QUANTITY_WORDS) | set(BROAD_WORDS) | {"inch", "cm", "all"}
_CONS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class GeneratorConfig:
    seed: int = 7
    categories: tuple[str, ...] = CATEGORIES
    test_category: str = "baby"
    products_per_category: int = 50
    multiword_fraction: float = 0.3
    attributes: int = 60
    brands_per_category: int = 15
    preposition_brand_fraction: float = 0.1
    context_words: int = 30
    queries: int = 5000
    product_final_prob: float = 0.95
    preposition_tail_prob: float = 0.2
    quantity_prob: float = 0.03
    brand_prob: float = 0.35
    noise_rate: float = 0.1
    sku_groups: int = 3
    skus_per_group: int = 3
    embedding_dim: int = 32
    embedding_noise: float = 0.6

    def __post_init__(self):
        self.categories = tuple(self.categories)
        for name in ("multiword_fraction", "preposition_brand_fraction", "product_final_prob",
                     "preposition_tail_prob", "quantity_prob", "brand_prob", "noise_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.test_category not in self.categories:
            raise ValueError("test_category must be one of categories")

    @property
    def train_categories(self) -> tuple[str, ...]:
        return tuple(c for c in self.categories if c != self.test_category)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator settings: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PlantedProduct:
    id: str
    words: tuple[str, ...]  # raw words; the last one is the head
    category: str

    @property
    def phrase(self) -> str:
        return " ".join(self.words)

    @property
    def stemmed(self) -> str:
        return " ".join(stem_token(w) for w in self.words)

    @property
    def head(self) -> str:
        return stem_token(self.words[-1])


@dataclass
class GeneratedQuery:
    tokens: list[str]
    category: str
    product_span: tuple[int, int] | None  # [start, end) of the product phrase
    product: str | None  # product id
    kind: str = "regular"  # regular | broad | brand

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass
class SynthDataset:
    config: GeneratorConfig
    products: list[PlantedProduct]
    attributes: dict[str, str]  # word -> subclass
    brands: dict[str, list[tuple[str, ...]]]  # category -> brand word tuples
    context_words: list[str]
    queries: list[GeneratedQuery]
    log_rows: list[tuple]
    skus: list[SkuRecord]
    pos_table: dict[str, np.ndarray]
    embeddings: EmbeddingTable
    ontology: onto.Ontology
    _vocab_roles: dict[str, str] = field(default_factory=dict)

    # ground truth
    def product_terms(self, category: str | None = None) -> set[str]:
        """Stemmed product phrases and head tokens (both count as P)."""
        out = set()
        for p in self.products:
            if category is None or p.category == category:
                out.add(p.stemmed)
                out.add(p.head)
        return out

    def annotations(self) -> dict[str, str]:
        labels = {stem_token(w): "N" for w in self._vocab_roles}
        for w in (*PREPOSITIONS, *QUANTITY_WORDS, *BROAD_WORDS):
            labels[stem_token(w)] = "N"
        for term in self.product_terms():
            labels[term] = "P"
        return labels

    def regular_queries(self, categories=None) -> list[GeneratedQuery]:
        cats = set(categories or self.config.categories)
        return [q for q in self.queries if q.kind == "regular" and q.category in cats]

    def distinct_regular(self, categories=None) -> list[GeneratedQuery]:
        seen = {}
        for q in self.regular_queries(categories):
            seen.setdefault(q.text, q)
        return list(seen.values())

    def labeled_queries(self, categories=None) -> list[LabeledQuery]:
        """Binary labels with the product head token marked."""
        out = []
        for q in self.distinct_regular(categories):
            labels = [0] * len(q.tokens)
            labels[q.product_span[1] - 1] = 1
            out.append(LabeledQuery([stem_token(t) for t in q.tokens], labels, q.category))
        return out

    def iob_queries(self, categories=None) -> list[IobSequence]:
        out = []
        for q in self.distinct_regular(categories):
            tags = ["O"] * len(q.tokens)
            s, e = q.product_span
            tags[s] = "B-PRODUCT"
            for k in range(s + 1, e):
                tags[k] = "I-PRODUCT"
            out.append(IobSequence([stem_token(t) for t in q.tokens], tags, q.category))
        return out

    def clean_config(self) -> dict:
        lexicon = sorted({" ".join(b) for bs in self.brands.values() for b in bs})
        return {
            "weight_threshold": 2.0,
            "entropy_max": 1.5,
            "brand_lexicon": lexicon,
            "prepositions": list(PREPOSITIONS),
        }

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "click_log": out / "clicks.tsv",
            "ground_truth": out / "ground_truth.csv",
            "ontology": out / "ontology.json",
            "catalog": out / "catalog.jsonl",
            "pos_table": out / "pos.tsv",
            "embeddings": out / "embeddings.txt",
            "labeled": out / "labeled.tsv",
            "iob": out / "iob.txt",
            "clean_config": out / "clean.json",
            "config": out / "generator.json",
        }
        write_click_log(self.log_rows, paths["click_log"])
        paths["ground_truth"].write_text(annotations_to_csv(self.annotations()), encoding="utf-8")
        onto.save(self.ontology, paths["ontology"])
        write_catalog(self.skus, paths["catalog"])
        write_pos_table(self.pos_table, paths["pos_table"])
        write_embeddings(self.embeddings, paths["embeddings"])
        write_labeled_queries(self.labeled_queries(), paths["labeled"])
        write_iob(self.iob_queries(), paths["iob"])
        paths["clean_config"].write_text(json.dumps(self.clean_config(), indent=2, sort_keys=True) + "\n")
        cfg = asdict(self.config)
        cfg["categories"] = list(cfg["categories"])
        paths["config"].write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        return paths


class _Words:
    """Unique pronounceable pseudo-words whose stems are also unique."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used_stems = {stem_token(w) for w in _RESERVED}

    def new(self) -> str:
        while True:
            n = int(self.rng.integers(2, 4))
            word = "".join(
                self.rng.choice(list(_CONS)) + self.rng.choice(list(_VOWELS)) for _ in range(n)
            )
            if self.rng.random() < 0.5:
                word += self.rng.choice(list("lmnrt"))
            stem = stem_token(word)
            if stem not in self.used_stems and stem == word:
                self.used_stems.add(stem)
                return word


def _pos_vector(rng, role: str) -> np.ndarray:
    weights = {
        "product": {"NOUN": 0.85, "VERB": 0.1, "ADJ": 0.05},
        "modifier": {"NOUN": 0.55, "ADJ": 0.4, "VERB": 0.05},
        "attribute": {"ADJ": 0.75, "NOUN": 0.2, "VERB": 0.05},
        "material": {"NOUN": 0.6, "ADJ": 0.4},
        "brand": {"NOUN": 0.6, "X": 0.4},
        "context": {"NOUN": 0.9, "VERB": 0.1},
        "prep": {"ADP": 0.95, "PRT": 0.05},
        "qty": {"NOUN": 0.5, "X": 0.3, "VERB": 0.2},
        "broad": {"ADJ": 0.6, "NOUN": 0.4},
    }[role]
    vec = np.zeros(len(POS_TAGS))
    for tag, w in weights.items():
        vec[POS_TAGS.index(tag)] = w * rng.uniform(0.6, 1.4)
    return vec / vec.sum()


def generate(config: GeneratorConfig | None = None) -> SynthDataset:
    config = config or GeneratorConfig()
    rng = np.random.default_rng(config.seed)
    words = _Words(rng)
    roles: dict[str, str] = {}

    products: list[PlantedProduct] = []
    for cat in config.categories:
        for k in range(config.products_per_category):
            head = words.new()
            roles[head] = "product"
            if rng.random() < config.multiword_fraction:
                mod = words.new()
                roles[mod] = "modifier"
                wds = (mod, head)
            else:
                wds = (head,)
            products.append(PlantedProduct(f"{cat}-p{k:03d}", wds, cat))

    attributes: dict[str, str] = {}
    for k in range(config.attributes):
        w = words.new()
        sub = ATTRIBUTE_SUBCLASSES[k % len(ATTRIBUTE_SUBCLASSES)]
        attributes[w] = sub
        roles[w] = "material" if sub == "Material" else "attribute"
    attr_words = sorted(attributes)

    brands: dict[str, list[tuple[str, ...]]] = {}
    for cat in config.categories:
        brands[cat] = []
        for _ in range(config.brands_per_category):
            r = rng.random()
            if r < config.preposition_brand_fraction:
                a, b = words.new(), words.new()
                brand = (a, str(rng.choice(["for", "by"])), b)
            elif r < 0.35:
                brand = (words.new(), words.new())
            else:
                brand = (words.new(),)
            for w in brand:
                if w not in PREPOSITIONS:
                    roles[w] = "brand"
            brands[cat].append(brand)

    context = [words.new() for _ in range(config.context_words)]
    for w in context:
        roles[w] = "context"

    by_cat = {c: [p for p in products if p.category == c] for c in config.categories}

    # SKUs: groups per product, each group tied to a brand
    skus: list[SkuRecord] = []
    groups: dict[str, list[list[str]]] = {}
    for p in products:
        groups[p.id] = []
        for g in range(config.sku_groups):
            brand = brands[p.category][int(rng.integers(len(brands[p.category])))]
            ids = []
            for s in range(config.skus_per_group):
                sid = f"{p.id}-g{g}-s{s}"
                attrs = sorted({str(a) for a in rng.choice(attr_words, size=2, replace=False)})
                title = " ".join([*brand, *attrs, *p.words])
                skus.append(SkuRecord(
                    sku_id=sid, title=title, product_class=p.id,
                    brand=_brand_id(brand), attributes=frozenset(_attr_id(a) for a in attrs),
                    category=p.category,
                ))
                ids.append(sid)
            groups[p.id].append(ids)
    sku_by_id = {s.sku_id: s for s in skus}

    queries: list[GeneratedQuery] = []
    log_rows: list[tuple] = []
    query_group: dict[str, int] = {}

    def click(query_text, sid, n):
        s = sku_by_id[sid]
        log_rows.append((query_text, sid, s.title, s.category, int(n)))

    for qi in range(config.queries):
        cat = config.categories[qi % len(config.categories)]
        if rng.random() < config.noise_rate:
            if rng.random() < 0.5:
                word = str(rng.choice([*BROAD_WORDS, *context]))
                q = GeneratedQuery([word], cat, None, None, "broad")
                for c in rng.choice(config.categories, size=4, replace=False):
                    p = by_cat[str(c)][int(rng.integers(len(by_cat[str(c)])))]
                    grp = groups[p.id][int(rng.integers(config.sku_groups))]
                    click(q.text, grp[int(rng.integers(len(grp)))], int(rng.integers(2, 5)))
            else:
                brand = brands[cat][int(rng.integers(len(brands[cat])))]
                q = GeneratedQuery(list(brand), cat, None, None, "brand")
                bid = _brand_id(brand)
                owned = [s.sku_id for s in skus if s.brand == bid] or [skus[0].sku_id]
                click(q.text, owned[int(rng.integers(len(owned)))], int(rng.integers(2, 6)))
            queries.append(q)
            continue

        p = by_cat[cat][int(rng.integers(len(by_cat[cat])))]
        tokens: list[str] = []
        if rng.random() < config.brand_prob:
            tokens += list(brands[cat][int(rng.integers(len(brands[cat])))])
        n_attr = int(rng.choice([0, 1, 1, 2]))
        tokens += [str(a) for a in rng.choice(attr_words, size=n_attr, replace=False)]
        start = len(tokens)
        tokens += list(p.words)
        span = (start, len(tokens))
        if rng.random() > config.product_final_prob:
            tokens.append(str(rng.choice(attr_words)))
        if rng.random() < config.quantity_prob:
            tokens += [str(rng.integers(2, 49)), str(rng.choice(QUANTITY_WORDS))]
        if rng.random() < config.preposition_tail_prob:
            tokens.append(str(rng.choice(PREPOSITIONS)))
            if rng.random() < 0.4:
                tokens.append(str(rng.choice(attr_words)))
            tokens.append(str(rng.choice(context)))
        q = GeneratedQuery(tokens, cat, span, p.id)
        queries.append(q)

        g = query_group.setdefault(q.text, int(rng.integers(config.sku_groups)))
        grp = groups[p.id][g]
        for sid in rng.choice(grp, size=int(rng.integers(1, 3)), replace=False):
            click(q.text, str(sid), int(rng.integers(1, 6)))
        if rng.random() < config.noise_rate:
            other = by_cat[cat][int(rng.integers(len(by_cat[cat])))]
            ogrp = groups[other.id][int(rng.integers(config.sku_groups))]
            click(q.text, ogrp[int(rng.integers(len(ogrp)))], int(rng.integers(1, 3)))

    # POS table and embeddings from each word's role
    pos_table = {w: _pos_vector(rng, r) for w, r in sorted(roles.items())}
    for w in PREPOSITIONS:
        pos_table[w] = _pos_vector(rng, "prep")
    for w in QUANTITY_WORDS:
        pos_table[w] = _pos_vector(rng, "qty")
    for w in BROAD_WORDS:
        pos_table[w] = _pos_vector(rng, "broad")
    num = np.zeros(len(POS_TAGS))
    num[POS_TAGS.index("NUM")] = 1.0
    for n in range(2, 49):
        pos_table[str(n)] = num

    D = config.embedding_dim
    role_names = ("product", "modifier", "attribute", "material", "brand", "context", "prep", "qty", "broad", "num")
    centroids = {r: rng.normal(size=D) / np.sqrt(D) * 3.0 for r in role_names}
    vectors = {}
    all_roles = dict(roles)
    all_roles.update({w: "prep" for w in PREPOSITIONS})
    all_roles.update({w: "qty" for w in QUANTITY_WORDS})
    all_roles.update({w: "broad" for w in BROAD_WORDS})
    all_roles.update({str(n): "num" for n in range(2, 49)})
    for w, r in sorted(all_roles.items()):
        vectors[stem_token(w)] = centroids[r] + rng.normal(size=D) * config.embedding_noise / np.sqrt(D) * 3.0
    embeddings = EmbeddingTable(vectors, D)

    ontology = _build_ontology(products, attributes, brands)
    return SynthDataset(
        config=config, products=products, attributes=attributes, brands=brands,
        context_words=context, queries=queries, log_rows=log_rows, skus=skus,
        pos_table=pos_table, embeddings=embeddings, ontology=ontology, _vocab_roles=roles,
    )


def _brand_id(brand: tuple[str, ...]) -> str:
    return "brand-" + "-".join(brand)


def _attr_id(word: str) -> str:
    return "attr-" + word


def _build_ontology(products, attributes, brands) -> onto.Ontology:
    concepts = [Concept(p.id, Kind.PRODUCT, p.phrase) for p in products]
    concepts += [Concept(_attr_id(w), Kind.ATTRIBUTE, w, attribute_subclass=s) for w, s in attributes.items()]
    seen = set()
    for bs in brands.values():
        for b in bs:
            if _brand_id(b) not in seen:
                seen.add(_brand_id(b))
                concepts.append(Concept(_brand_id(b), Kind.BRAND, " ".join(b)))
    return onto.Ontology.build(concepts, prepositions=PREPOSITIONS, units={"inch": 2.54, "cm": 1.0})
