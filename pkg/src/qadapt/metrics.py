"""Factoid metrics over top-5 answer lists: strict accuracy, lenient
accuracy and mean reciprocal rank."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus.dataset import atomic_write
from .corpus.text import normalize_answer
from .ranking import AnswerList

HORIZON = 5


def match_gold(prediction: str, golds) -> bool:
    """True when the normalized prediction equals any normalized gold synonym."""
    golds = list(golds)
    if not golds:
        raise ValueError("match_gold: empty gold list")
    pred = normalize_answer(prediction)
    return any(pred == normalize_answer(g) for g in golds)


def first_correct_rank(texts, golds, horizon: int = HORIZON) -> int | None:
    for rank, text in enumerate(list(texts)[:horizon], start=1):
        if match_gold(text, golds):
            return rank
    return None


@dataclass
class MetricsReport:
    n: int
    strict_acc: float
    lenient_acc: float
    mrr: float
    per_question: list[tuple[str, int | None]] = field(default_factory=list)

    @classmethod
    def from_ranks(cls, per_question: list[tuple[str, int | None]]) -> "MetricsReport":
        n = len(per_question)
        if n == 0:
            return cls(0, 0.0, 0.0, 0.0, [])
        ranks = [r for _, r in per_question]
        strict = sum(1 for r in ranks if r == 1) / n
        lenient = sum(1 for r in ranks if r is not None and r <= HORIZON) / n
        mrr = sum(1.0 / r for r in ranks if r is not None and r <= HORIZON) / n
        return cls(n, strict, lenient, mrr, list(per_question))

    def percentages(self) -> tuple[str, str, str]:
        return tuple(f"{100 * v:.2f}" for v in (self.strict_acc, self.lenient_acc, self.mrr))

    def summary(self) -> str:
        s, l, m = self.percentages()
        return f"S.Acc {s}  L.Acc {l}  MRR {m}  (n={self.n})"

    def to_json(self) -> dict:
        return {"n": self.n, "strict_acc": self.strict_acc, "lenient_acc": self.lenient_acc, "mrr": self.mrr,
                "per_question": [{"id": qid, "rank": rank} for qid, rank in self.per_question]}


def compute_metrics(lists: list[AnswerList], gold: dict[str, list[str]]) -> MetricsReport:
    """Score answer lists against gold answers keyed by question id.

    Questions without a prediction count as wrong. Answers past rank 5 are
    ignored.
    """
    by_id: dict[str, AnswerList] = {}
    unknown = []
    for al in lists:
        if al.question_id not in gold:
            unknown.append(al.question_id)
        by_id[al.question_id] = al
    if unknown:
        raise ValueError(f"predictions for unknown question ids: {', '.join(sorted(unknown))}")
    per_question = []
    # gold order fixes the reduction order
    for qid, answers in gold.items():
        al = by_id.get(qid)
        rank = first_correct_rank(al.texts(), answers) if al is not None else None
        per_question.append((qid, rank))
    return MetricsReport.from_ranks(per_question)


def save_report(report: MetricsReport, path) -> None:
    atomic_write(path, json.dumps(report.to_json(), indent=1) + "\n")
