"""End-to-end runs of the three extraction methods on one click log."""
from __future__ import annotations

import json
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import augmented, lstm_crf
from . import clickgraph as cg
from . import evaluation as ev
from .synth import GeneratorConfig, SynthDataset, generate
from .token_graph import extract_all

METHODS = ("token-graph", "cnn", "lstm-crf")


def split_holdout(items: Sequence, fraction: float, seed: int) -> tuple[list, list]:
    """Seeded (train, holdout) split."""
    order = np.random.default_rng(seed).permutation(len(items))
    cut = int(round(len(items) * (1.0 - fraction)))
    return [items[i] for i in order[:cut]], [items[i] for i in order[cut:]]


def span_recovery(model, holdout: Sequence[lstm_crf.IobSequence], embeddings, products: set[str]) -> tuple[float, int]:
    """Share of multi-word products that the tagger extracts as an exact
    span in at least half of the held-out queries containing them."""
    tally: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for seq in holdout:
        for gold in lstm_crf.extract_product_spans(seq.tokens, seq.tags):
            if gold in products:
                predicted = lstm_crf.extract_product_spans(seq.tokens, model.tag(seq.tokens, embeddings))
                tally[gold][1] += 1
                tally[gold][0] += gold in predicted
    if not tally:
        return float("nan"), 0
    recovered = [hits * 2 >= total for hits, total in tally.values()]
    return float(np.mean(recovered)), len(recovered)


@dataclass
class ExperimentReport:
    candidates: dict[str, ev.CandidateList]
    curves: dict[str, list[tuple[int, float]]]
    lstm_span_recovery: float
    lstm_products_evaluated: int
    timings: dict[str, float] = field(default_factory=dict)
    graph_stats: dict[str, int] = field(default_factory=dict)

    def precision(self, method: str, n: int) -> float | None:
        return ev.precision_at(self.curves[method], n)

    def common_depth(self, methods: Sequence[str], n: int) -> int:
        """Deepest rank <= n reached by every listed method."""
        return min([n, *(len(self.curves[m]) for m in methods)])

    def summary(self) -> dict:
        return {
            "lengths": {m: len(c) for m, c in self.candidates.items()},
            "precision@50": {m: self.precision(m, 50) for m in self.curves},
            "precision@100": {m: self.precision(m, 100) for m in self.curves},
            "lstm_span_recovery": self.lstm_span_recovery,
            "lstm_products_evaluated": self.lstm_products_evaluated,
            "timings": self.timings,
            "graph": self.graph_stats,
        }


def run_synthetic(
    dataset: SynthDataset | GeneratorConfig | None = None,
    cnn_config: augmented.CnnConfig | None = None,
    lstm_config: lstm_crf.LstmCrfConfig | None = None,
    out_dir: str | Path | None = None,
    holdout_fraction: float = 0.2,
    log: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Clean the log, run all three methods on the held-out category and
    score their candidate lists against the planted products."""
    if not isinstance(dataset, SynthDataset):
        dataset = generate(dataset)
    cfg = dataset.config
    log = log or (lambda msg: None)
    timings = {}

    t = time.perf_counter()
    clean_cfg = cg.CleanConfig.from_dict(dataset.clean_config())
    raw = cg.ingest(dataset.log_rows)
    graph = cg.clean(raw, clean_cfg)
    test_graph = cg.restrict_to_category(graph, cfg.test_category)
    test_queries = [list(test_graph.queries[q].tokens) for q in sorted(test_graph.queries)]
    timings["graph"] = time.perf_counter() - t

    t = time.perf_counter()
    candidates = {"token-graph": extract_all(test_graph, clean_cfg.prepositions)}
    timings["token-graph"] = time.perf_counter() - t

    t = time.perf_counter()
    cnn_config = cnn_config or augmented.CnnConfig(seed=cfg.seed)
    labeled = dataset.labeled_queries(cfg.train_categories)
    cnn = augmented.train(labeled, dataset.pos_table, graph, cnn_config, log=log).model
    candidates["cnn"] = augmented.extract_from_graph(cnn, test_graph, dataset.pos_table)
    timings["cnn"] = time.perf_counter() - t

    t = time.perf_counter()
    lstm_config = lstm_config or lstm_crf.LstmCrfConfig(embedding_dim=dataset.embeddings.dim, seed=cfg.seed)
    iob_train, iob_holdout = split_holdout(dataset.iob_queries(cfg.train_categories), holdout_fraction, cfg.seed)
    lstm = lstm_crf.train(iob_train, dataset.embeddings, lstm_config, log=log).model
    candidates["lstm-crf"] = lstm_crf.extract_candidates(lstm, test_queries, dataset.embeddings)
    multiword = {p.stemmed for p in dataset.products if len(p.words) > 1 and p.category != cfg.test_category}
    recovery, evaluated = span_recovery(lstm, iob_holdout, dataset.embeddings, multiword)
    timings["lstm-crf"] = time.perf_counter() - t

    truth = dataset.product_terms()
    curves = {m: ev.precision_at_n(c, ev.label_from_truth(c, truth)) for m, c in candidates.items()}
    report = ExperimentReport(
        candidates, curves, recovery, evaluated, timings,
        {
            "queries": len(raw.queries), "edges": len(raw.edges),
            "clean_queries": len(graph.queries), "clean_edges": len(graph.edges),
            "test_queries": len(test_graph.queries),
            "test_components": len(cg.connected_components(test_graph)),
        },
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dataset.write(out / "data")
        for m, c in candidates.items():
            ev.write_candidates(c, out / f"candidates_{m}.csv")
        (out / "compare.csv").write_text(ev.compare(curves), encoding="utf-8")
        # wall-clock timings stay out of the file so reruns are byte-identical
        summary = {k: v for k, v in report.summary().items() if k != "timings"}
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        cnn.save(out / "cnn.json")
        lstm.save(out / "lstm_crf.json")
    return report
