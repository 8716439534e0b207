"""searchonto command line: file-based stages from click log to search."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import augmented, lstm_crf, nerc, retrieval
from . import clickgraph as cg
from . import evaluation as ev
from . import ontology as onto
from .nn.checkpoint import CheckpointError
from .token_graph import extract_all

log = logging.getLogger("searchonto")

EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_FORMAT = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _require(*paths) -> None:
    """Check every input path up front so no stage starts on a missing file."""
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}:{e.lineno}: {e.msg}") from None


def _graph_for(args) -> cg.ClickGraph:
    graph = cg.load_graph(args.graph)
    if args.category:
        graph = cg.restrict_to_category(graph, args.category)
    return graph


def _tagger(args):
    if not args.model:
        return None
    if not args.embeddings:
        raise UsageError("--model requires --embeddings")
    _require(args.model, args.embeddings)
    return nerc.lstm_span_tagger(lstm_crf.LstmCrfModel.load(args.model), lstm_crf.read_embeddings(args.embeddings))


# commands -------------------------------------------------------------------

def cmd_ingest(args):
    _require(args.log)
    graph = cg.ingest(cg.read_click_log(args.log))
    cg.save_graph(graph, args.out)
    log.info("ingested %d queries, %d skus, %d edges", len(graph.queries), len(graph.skus), len(graph.edges))


def cmd_clean(args):
    _require(args.graph, args.config)
    config = cg.CleanConfig.from_dict(_load_json(args.config))
    graph = cg.clean(cg.load_graph(args.graph), config)
    cg.save_graph(graph, args.out)
    log.info("clean graph: %d queries, %d edges", len(graph.queries), len(graph.edges))


def cmd_extract(args):
    _require(args.graph, args.config, getattr(args, "model", None), getattr(args, "pos", None),
             getattr(args, "embeddings", None))
    graph = _graph_for(args)
    if args.method == "token-graph":
        prepositions = cg.CleanConfig.from_dict(_load_json(args.config)).prepositions if args.config else ()
        candidates = extract_all(graph, prepositions)
    elif args.method == "cnn":
        model = augmented.CnnModel.load(args.model)
        candidates = augmented.extract_from_graph(model, graph, augmented.read_pos_table(args.pos), args.threshold)
    else:
        model = lstm_crf.LstmCrfModel.load(args.model)
        queries = [list(graph.queries[q].tokens) for q in sorted(graph.queries)]
        candidates = lstm_crf.extract_candidates(model, queries, lstm_crf.read_embeddings(args.embeddings))
    _emit(candidates.to_csv(), args.out)
    log.info("%s: %d candidates", args.method, len(candidates))


def cmd_train(args):
    if args.method == "cnn":
        _require(args.data, args.pos, args.graph)
        data = augmented.read_labeled_queries(args.data)
        if args.exclude_category:
            data = [q for q in data if q.category not in args.exclude_category]
        config = augmented.CnnConfig(
            filters=args.filters, hidden=args.hidden, max_len=args.max_len, seed=args.seed,
            epochs=args.epochs or augmented.CnnConfig.epochs, batch_size=args.batch_size or 32,
            lr=args.lr or augmented.CnnConfig.lr,
        )
        graph = cg.load_graph(args.graph) if args.graph else None
        result = augmented.train(data, augmented.read_pos_table(args.pos), graph, config, log=log.info)
    else:
        _require(args.data, args.embeddings)
        data = lstm_crf.read_iob(args.data)
        if args.exclude_category:
            data = [q for q in data if q.category not in args.exclude_category]
        embeddings = lstm_crf.read_embeddings(args.embeddings)
        config = lstm_crf.LstmCrfConfig(
            hidden=args.hidden, embedding_dim=embeddings.dim, seed=args.seed,
            epochs=args.epochs or lstm_crf.LstmCrfConfig.epochs, batch_size=args.batch_size or 16,
            lr=args.lr or lstm_crf.LstmCrfConfig.lr,
        )
        result = lstm_crf.train(data, embeddings, config, log=log.info)
    result.model.save(args.out)
    log.info("trained %s on %d queries, final loss %.4f", args.method, len(data), result.loss)


def cmd_annotate(args):
    _require(args.ontology)
    ontology = onto.load(args.ontology)
    annotation = nerc.annotate(args.query, ontology, _tagger(args))
    if not args.no_default_product:
        annotation = nerc.apply_default_product(annotation, ontology)
    _emit(json.dumps(annotation.to_dict(), sort_keys=True) + "\n", args.out)


def cmd_index(args):
    _require(args.catalog, args.ontology)
    ontology = onto.load(args.ontology)
    index = retrieval.index_skus(retrieval.read_catalog(args.catalog, ontology.units), ontology)
    index.save(args.out)
    log.info("indexed %d skus under %d product classes", len(index.records), len(index.by_product))


def cmd_search(args):
    _require(args.index)
    index = retrieval.SkuIndex.load(args.index)
    weights = retrieval.ScoreWeights(args.w_attr, args.w_primary, args.w_brand, args.w_numeric)
    results = retrieval.search_query(args.query, index, weights, args.k, _tagger(args))
    if results and results[0].fallback:
        log.warning("no product recognized in %r; ranked by title overlap", args.query)
    _emit(retrieval.results_to_csv(results), args.out)


def _labels_for(candidates, annotations, unlisted_negative):
    if not unlisted_negative:
        return annotations
    return {**{c.term: "N" for c in candidates}, **annotations}


def cmd_eval_precision(args):
    _require(args.candidates, args.annotations)
    cands = ev.read_candidates(args.candidates)
    labels = _labels_for(cands, ev.read_annotations(args.annotations), args.unlisted_negative)
    curve = ev.precision_at_n(cands, labels, args.max_n)
    lines = ["n,precision"] + [f"{n},{round(p, 12)!r}" for n, p in curve]
    _emit("\n".join(lines) + "\n", args.out)


def cmd_eval_compare(args):
    methods = []
    for spec in args.method:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--method expects NAME=FILE, got {spec!r}")
        methods.append((name, path))
    _require(args.annotations, *(p for _, p in methods))
    annotations = ev.read_annotations(args.annotations)
    curves = {}
    for name, path in methods:
        cands = ev.read_candidates(path)
        curves[name] = ev.precision_at_n(cands, _labels_for(cands, annotations, args.unlisted_negative), args.max_n)
    _emit(ev.compare(curves, args.max_n), args.out)


def cmd_synth_gen(args):
    from .synth import GeneratorConfig, generate

    _require(args.config)
    config = GeneratorConfig.from_dict(_load_json(args.config)) if args.config else GeneratorConfig()
    if args.seed is not None:
        config = GeneratorConfig.from_dict({**_config_dict(config), "seed": args.seed})
    paths = generate(config).write(args.out)
    for name, path in sorted(paths.items()):
        log.info("%s -> %s", name, path)


def cmd_synth_run(args):
    from .pipeline import run_synthetic
    from .synth import GeneratorConfig

    _require(args.config)
    config = GeneratorConfig.from_dict(_load_json(args.config)) if args.config else GeneratorConfig()
    if args.seed is not None:
        config = GeneratorConfig.from_dict({**_config_dict(config), "seed": args.seed})
    report = run_synthetic(config, out_dir=args.out, log=log.info)
    for method in report.candidates:
        log.info("%s: %d candidates, precision@50 %s", method, len(report.candidates[method]),
                 report.precision(method, 50))
    log.info("lstm-crf span recovery %.3f over %d products", report.lstm_span_recovery,
             report.lstm_products_evaluated)


def _config_dict(config) -> dict:
    from dataclasses import asdict
    return asdict(config)


def cmd_ontology_validate(args):
    _require(args.file)
    try:
        ontology = onto.from_json_dict(_load_json(args.file))
    except onto.OntologyParseError as e:
        raise ValueError(f"{args.file}: {e}") from None
    violations = onto.validate(ontology)
    if violations:
        raise onto.OntologyValidationError(violations)
    print(f"ok: {len(ontology.concepts)} concepts")


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="searchonto", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="build the click graph from a TSV click log")
    s.add_argument("--log", required=True, help="click log TSV")
    s.add_argument("--out", required=True, help="graph JSON to write")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("clean", help="apply threshold, entropy and brand filters")
    s.add_argument("--graph", required=True)
    s.add_argument("--config", required=True, help="CleanConfig JSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_clean)

    s = sub.add_parser("extract", help="rank product candidates from a cleaned graph")
    ex = s.add_subparsers(dest="method", required=True, parser_class=_Parser)
    for method in ("token-graph", "cnn", "lstm-crf"):
        e = ex.add_parser(method)
        e.add_argument("--graph", required=True, help="cleaned graph JSON")
        e.add_argument("--category", help="only use queries of this category")
        e.add_argument("--out", help="candidates CSV (default: stdout)")
        e.set_defaults(func=cmd_extract, config=None)
        if method == "token-graph":
            e.add_argument("--config", help="CleanConfig JSON supplying the prepositions")
        elif method == "cnn":
            e.add_argument("--model", required=True)
            e.add_argument("--pos", required=True, help="POS table TSV")
            e.add_argument("--threshold", type=float, help="override the checkpoint's threshold")
        else:
            e.add_argument("--model", required=True)
            e.add_argument("--embeddings", required=True)

    s = sub.add_parser("train", help="train a tagger and write a checkpoint")
    tr = s.add_subparsers(dest="method", required=True, parser_class=_Parser)
    for method in ("cnn", "lstm-crf"):
        t = tr.add_parser(method)
        t.add_argument("--data", required=True,
                       help="labeled queries TSV" if method == "cnn" else "IOB file")
        t.add_argument("--out", required=True, help="checkpoint JSON")
        t.add_argument("--seed", type=int, default=0)
        t.add_argument("--epochs", type=int)
        t.add_argument("--batch-size", type=int)
        t.add_argument("--lr", type=float)
        t.add_argument("--hidden", type=int, default=32)
        t.add_argument("--exclude-category", action="append", default=[],
                       help="drop training queries of this category (repeatable)")
        t.set_defaults(func=cmd_train)
        if method == "cnn":
            t.add_argument("--pos", required=True, help="POS table TSV")
            t.add_argument("--graph", help="cleaned graph JSON for token-graph features")
            t.add_argument("--filters", type=int, default=32)
            t.add_argument("--max-len", type=int, default=16)
        else:
            t.add_argument("--embeddings", required=True)

    s = sub.add_parser("annotate", help="label a query against the ontology (JSON)")
    s.add_argument("--ontology", required=True)
    s.add_argument("--query", required=True)
    s.add_argument("--model", help="LSTM-CRF checkpoint used to fill product gaps")
    s.add_argument("--embeddings")
    s.add_argument("--no-default-product", action="store_true", help="skip brand default products")
    s.add_argument("--out")
    s.set_defaults(func=cmd_annotate)

    s = sub.add_parser("index", help="build a SKU index from a JSON-lines catalog")
    s.add_argument("--catalog", required=True)
    s.add_argument("--ontology", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("search", help="annotate a query and rank SKUs (CSV)")
    s.add_argument("--index", required=True)
    s.add_argument("--query", required=True)
    s.add_argument("-k", type=int, default=10)
    s.add_argument("--model")
    s.add_argument("--embeddings")
    defaults = retrieval.ScoreWeights()
    s.add_argument("--w-attr", type=float, default=defaults.w_attr)
    s.add_argument("--w-primary", type=float, default=defaults.w_primary)
    s.add_argument("--w-brand", type=float, default=defaults.w_brand)
    s.add_argument("--w-numeric", type=float, default=defaults.w_numeric)
    s.add_argument("--out")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("eval", help="precision@n of candidate lists")
    evs = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    e = evs.add_parser("precision")
    e.add_argument("--candidates", required=True)
    e.add_argument("--annotations", required=True, help="CSV term,label with labels P/N")
    e.add_argument("--max-n", type=int, default=ev.MAX_N)
    e.add_argument("--unlisted-negative", action="store_true",
                   help="label terms missing from the annotations N instead of failing")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval_precision)
    e = evs.add_parser("compare")
    e.add_argument("--method", action="append", required=True, metavar="NAME=FILE",
                   help="candidates CSV for one method (repeatable)")
    e.add_argument("--annotations", required=True)
    e.add_argument("--max-n", type=int, default=ev.MAX_N)
    e.add_argument("--unlisted-negative", action="store_true",
                   help="label terms missing from the annotations N instead of failing")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval_compare)

    s = sub.add_parser("synth", help="synthetic click logs with planted products")
    sy = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    for what, func, help_ in (("gen", cmd_synth_gen, "write a synthetic dataset"),
                              ("run", cmd_synth_run, "generate and run all three methods")):
        g = sy.add_parser(what, help=help_)
        g.add_argument("--config", help="generator settings JSON")
        g.add_argument("--seed", type=int, help="override the config seed")
        g.add_argument("--out", required=True, help="output directory")
        g.set_defaults(func=func)

    s = sub.add_parser("ontology", help="ontology file checks")
    os_ = s.add_subparsers(dest="what", required=True, parser_class=_Parser)
    v = os_.add_parser("validate")
    v.add_argument("file")
    v.set_defaults(func=cmd_ontology_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s", stream=sys.stderr,
    )
    try:
        args.func(args)
    except UsageError as e:
        print(f"searchonto: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except onto.OntologyValidationError as e:
        print("searchonto: invalid ontology:", file=sys.stderr)
        for v in e.violations:
            print(f"  {v.concept_id}: {v.reason}", file=sys.stderr)
        return EXIT_VALIDATION
    except (onto.UnknownConcept, ev.MissingAnnotation) as e:
        print(f"searchonto: validation failed: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"searchonto: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, CheckpointError) as e:
        print(f"searchonto: bad input: {e}", file=sys.stderr)
        return EXIT_FORMAT
    return 0


if __name__ == "__main__":
    sys.exit(main())
