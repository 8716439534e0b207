"""Candidate lists, P/N annotations and precision@n curves."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

MAX_N = 500


class EvaluationError(ValueError):
    pass


class MissingAnnotation(EvaluationError):
    def __init__(self, terms: list[str]):
        self.terms = terms
        super().__init__(f"{len(terms)} candidate(s) lack a P/N label: {', '.join(terms)}")


@dataclass(frozen=True)
class Candidate:
    rank: int
    term: str
    frequency: int


class CandidateList(tuple):
    """Ranked (rank, term, frequency) rows: frequency desc, then term asc."""

    def __new__(cls, rows: Iterable[Candidate] = ()):
        rows = tuple(rows)
        for i, row in enumerate(rows):
            if row.rank != i + 1:
                raise EvaluationError(f"ranks must be contiguous from 1; row {i} has rank {row.rank}")
            if i and row.frequency > rows[i - 1].frequency:
                raise EvaluationError(f"frequency increases at rank {row.rank}")
        return super().__new__(cls, rows)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "CandidateList":
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(Candidate(i + 1, t, int(f)) for i, (t, f) in enumerate(ordered))

    @classmethod
    def from_terms(cls, terms: Iterable[str]) -> "CandidateList":
        return cls.from_counts(Counter(terms))

    @property
    def terms(self) -> list[str]:
        return [c.term for c in self]

    def as_tuples(self) -> list[tuple[str, int]]:
        return [(c.term, c.frequency) for c in self]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "term", "frequency"])
        for c in self:
            w.writerow([c.rank, c.term, c.frequency])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CandidateList":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["rank", "term", "frequency"]:
            raise EvaluationError("candidate CSV must start with header rank,term,frequency")
        out = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            try:
                rank, term, freq = row
                out.append(Candidate(int(rank), term, int(freq)))
            except ValueError:
                raise EvaluationError(f"line {lineno}: malformed candidate row {row!r}") from None
        return cls(out)


def read_candidates(path: str | Path) -> CandidateList:
    return CandidateList.from_csv(Path(path).read_text(encoding="utf-8"))


def write_candidates(candidates: CandidateList, path: str | Path) -> None:
    Path(path).write_text(candidates.to_csv(), encoding="utf-8")


# annotations ------------------------------------------------------------------

def read_annotations(path: str | Path) -> dict[str, str]:
    return parse_annotations(Path(path).read_text(encoding="utf-8"))


def parse_annotations(text: str) -> dict[str, str]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["term", "label"]:
        raise EvaluationError("annotation CSV must start with header term,label")
    out = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2 or row[1] not in ("P", "N"):
            raise EvaluationError(f"line {lineno}: expected term,P|N, got {row!r}")
        out[row[0]] = row[1]
    return out


def annotations_to_csv(annotations: Mapping[str, str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["term", "label"])
    for term in sorted(annotations):
        w.writerow([term, annotations[term]])
    return buf.getvalue()


def label_from_truth(candidates: CandidateList, products: Iterable[str]) -> dict[str, str]:
    """P/N labels for every candidate against a known product vocabulary."""
    truth = set(products)
    return {c.term: "P" if c.term in truth else "N" for c in candidates}


# precision ------------------------------------------------------------------

def precision_at_n(
    candidates: CandidateList, annotations: Mapping[str, str], max_n: int = MAX_N
) -> list[tuple[int, float]]:
    """[(n, precision@n)] for n = 1..min(max_n, len(candidates))."""
    top = list(candidates)[:max_n]
    missing = sorted({c.term for c in top if c.term not in annotations})
    if missing:
        raise MissingAnnotation(missing)
    curve = []
    hits = 0
    for n, c in enumerate(top, start=1):
        if annotations[c.term] == "P":
            hits += 1
        curve.append((n, hits / n))
    return curve


def precision_at(curve: list[tuple[int, float]], n: int) -> float | None:
    """Precision at n, or None when the curve is truncated before n."""
    return curve[n - 1][1] if 0 < n <= len(curve) else None


def compare(curves: Mapping[str, list[tuple[int, float]]], max_n: int = MAX_N) -> str:
    """Aligned CSV ``n,method1,...``; shorter curves leave blank cells."""
    if not curves:
        raise EvaluationError("compare needs at least one curve")
    methods = list(curves)
    length = min(max_n, max(len(c) for c in curves.values()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", *methods])
    for n in range(1, length + 1):
        row = [n]
        for m in methods:
            p = precision_at(curves[m], n)
            row.append("" if p is None else repr(round(p, 12)))
        w.writerow(row)
    return buf.getvalue()
