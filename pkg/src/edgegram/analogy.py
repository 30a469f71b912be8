"""Analogical-reasoning evaluation over trained embeddings.

Questions follow the classic question-words format: category header lines
starting with ":" followed by four-token lines "a b c d", asking which
token relates to c the way b relates to a. Prediction is the cosine
nearest neighbor of unit(b) - unit(a) + unit(c) over unit-normalized
rows, excluding a, b and c themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Model
from .vocab import Vocabulary

SYNTACTIC_PREFIX = "gram"
SCORE_CHUNK = 512


class QuestionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AnalogyQuestion:
    a: str
    b: str
    c: str
    d: str
    category: str

    @property
    def kind(self) -> str:
        return "syntactic" if self.category.startswith(SYNTACTIC_PREFIX) else "semantic"


@dataclass
class CategoryResult:
    name: str
    kind: str
    attempted: int = 0
    skipped: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        """Percent correct over answered questions; 0.0 when none answered."""
        if self.attempted == 0:
            return 0.0
        return 100.0 * self.correct / self.attempted


@dataclass
class AccuracyReport:
    categories: list[CategoryResult]

    def _totals(self, kind: str | None) -> tuple[int, int, int]:
        rows = [c for c in self.categories if kind is None or c.kind == kind]
        return (
            sum(c.attempted for c in rows),
            sum(c.skipped for c in rows),
            sum(c.correct for c in rows),
        )

    @property
    def answered(self) -> int:
        return self._totals(None)[0]

    @property
    def skipped(self) -> int:
        return self._totals(None)[1]

    @property
    def total(self) -> float:
        attempted, _, correct = self._totals(None)
        return 100.0 * correct / attempted if attempted else 0.0

    @property
    def semantic(self) -> float:
        attempted, _, correct = self._totals("semantic")
        return 100.0 * correct / attempted if attempted else 0.0

    @property
    def syntactic(self) -> float:
        attempted, _, correct = self._totals("syntactic")
        return 100.0 * correct / attempted if attempted else 0.0


def load_questions(path: str, lowercase: bool = False) -> list[AnalogyQuestion]:
    """Parse a question-words file; malformed lines raise with line numbers."""
    questions: list[AnalogyQuestion] = []
    category: str | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith(":"):
                category = stripped[1:].strip()
                if not category:
                    raise QuestionFormatError(f"{path}:{lineno}: empty category name")
                continue
            if category is None:
                raise QuestionFormatError(
                    f"{path}:{lineno}: question before any ':' category header"
                )
            parts = stripped.split()
            if len(parts) != 4:
                raise QuestionFormatError(
                    f"{path}:{lineno}: expected 4 tokens, got {len(parts)}"
                )
            if lowercase:
                parts = [p.lower() for p in parts]
            if len(set(parts)) != 4:
                raise QuestionFormatError(
                    f"{path}:{lineno}: question tokens must be distinct"
                )
            questions.append(AnalogyQuestion(*parts, category=category))
    return questions


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalize rows; all-zero rows stay zero."""
    matrix = np.asarray(matrix, dtype=np.float32)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    np.maximum(norms, np.finfo(np.float32).tiny, out=norms)
    return matrix / norms


def _resolve(embeddings, tokens) -> tuple[np.ndarray, list[str]]:
    if isinstance(embeddings, Model):
        embeddings = embeddings.embedding
    if isinstance(tokens, Vocabulary):
        tokens = tokens.tokens
    return np.asarray(embeddings, dtype=np.float32), list(tokens)


def answer(embeddings, tokens, question: AnalogyQuestion) -> str | None:
    """Predicted token for one question, or None when a, b or c is missing."""
    matrix, names = _resolve(embeddings, tokens)
    report, predictions = _score_resolved(matrix, names, [question])
    del report
    return predictions[0]


def score(embeddings, tokens, questions: Sequence[AnalogyQuestion]) -> AccuracyReport:
    """Batch-score questions; any question with an OOV token is skipped."""
    matrix, names = _resolve(embeddings, tokens)
    report, _ = _score_resolved(matrix, names, questions)
    return report


def _score_resolved(
    matrix: np.ndarray,
    names: list[str],
    questions: Sequence[AnalogyQuestion],
) -> tuple[AccuracyReport, list[str | None]]:
    token_to_id = {tok: i for i, tok in enumerate(names)}
    unit = unit_rows(matrix)
    dim = unit.shape[1]

    results: dict[str, CategoryResult] = {}

    def bucket(q: AnalogyQuestion) -> CategoryResult:
        if q.category not in results:
            results[q.category] = CategoryResult(name=q.category, kind=q.kind)
        return results[q.category]

    predictions: list[str | None] = [None] * len(questions)
    pending: list[tuple[int, int, int, int, int]] = []
    for qi, q in enumerate(questions):
        bucket(q)
        ids = [token_to_id.get(t) for t in (q.a, q.b, q.c, q.d)]
        if any(i is None for i in ids[:3]):
            bucket(q).skipped += 1
            continue
        if ids[3] is None:
            bucket(q).skipped += 1
            # a, b, c are resolvable so prediction is still well defined;
            # scored separately below only through answer().
            pending.append((qi, ids[0], ids[1], ids[2], -1))
            continue
        pending.append((qi, ids[0], ids[1], ids[2], ids[3]))

    for start in range(0, len(pending), SCORE_CHUNK):
        chunk = pending[start : start + SCORE_CHUNK]
        targets = np.empty((len(chunk), dim), dtype=np.float32)
        for row, (_, ia, ib, ic, _) in enumerate(chunk):
            targets[row] = unit[ib] - unit[ia] + unit[ic]
        norms = np.linalg.norm(targets, axis=1, keepdims=True)
        np.maximum(norms, np.finfo(np.float32).tiny, out=norms)
        targets /= norms
        scores = targets @ unit.T
        for row, (_, ia, ib, ic, _) in enumerate(chunk):
            scores[row, [ia, ib, ic]] = -np.inf
        best = np.argmax(scores, axis=1)
        for row, (qi, _, _, _, idx) in enumerate(chunk):
            predicted = names[int(best[row])]
            predictions[qi] = predicted
            if idx >= 0:
                q = questions[qi]
                cat = bucket(q)
                cat.attempted += 1
                if int(best[row]) == idx:
                    cat.correct += 1

    ordered = list(results.values())
    return AccuracyReport(categories=ordered), predictions


def write_report_csv(report: AccuracyReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("#v1\n")
        fh.write("category,kind,attempted,skipped,correct,accuracy\n")
        for cat in report.categories:
            fh.write(
                f"{cat.name},{cat.kind},{cat.attempted},{cat.skipped},"
                f"{cat.correct},{cat.accuracy:.2f}\n"
            )
        for label, kind in (("semantic", "total"), ("syntactic", "total")):
            attempted, skipped, correct = report._totals(label)
            acc = 100.0 * correct / attempted if attempted else 0.0
            fh.write(f"{label},{kind},{attempted},{skipped},{correct},{acc:.2f}\n")
        fh.write(
            f"all,total,{report.answered},{report.skipped},"
            f"{report._totals(None)[2]},{report.total:.2f}\n"
        )


def format_report(report: AccuracyReport) -> str:
    """Aligned text table with per-category rows and the three totals."""
    rows = [("category", "kind", "acc%", "correct", "answered", "skipped")]
    for cat in report.categories:
        rows.append(
            (
                cat.name,
                cat.kind,
                f"{cat.accuracy:.2f}",
                str(cat.correct),
                str(cat.attempted),
                str(cat.skipped),
            )
        )
    sem_a, sem_s, sem_c = report._totals("semantic")
    syn_a, syn_s, syn_c = report._totals("syntactic")
    rows.append(("semantic", "", f"{report.semantic:.2f}", str(sem_c), str(sem_a), str(sem_s)))
    rows.append(("syntactic", "", f"{report.syntactic:.2f}", str(syn_c), str(syn_a), str(syn_s)))
    rows.append(
        (
            "total",
            "",
            f"{report.total:.2f}",
            str(report._totals(None)[2]),
            str(report.answered),
            str(report.skipped),
        )
    )
    widths = [max(len(r[i]) for r in rows) for i in range(6)]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)).rstrip())
    return "\n".join(lines)
