"""Top-k answer lists from reader and selector outputs.

Three strategies:

* ``reader_only``: reader probabilities alone. With more than five
  paragraphs, each paragraph contributes only its best answer.
* ``reader_times_selector``: each answer's reader probability times its own
  paragraph's selector probability.
* ``combined``: sum over paragraphs of reader probability times paragraph
  probability, per distinct answer string.

Answers are distinct after normalization. Ties are broken by the
lexicographic order of normalized strings (``combined`` first prefers the
larger single-paragraph contribution), so results do not depend on
paragraph order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus.dataset import QADataset, QAExample, atomic_write
from .reader import Reader, SpanCandidate, span_probabilities
from .selector import ParagraphDistribution, Selector

STRATEGIES = ("reader_only", "reader_times_selector", "combined")
TOP_K = 5
# above this many paragraphs, reader_only keeps one answer per paragraph
ONE_PER_PARAGRAPH_ABOVE = 5

# paragraph id -> normalized answer -> candidate (with probability)
ParagraphProbs = dict[str, dict[str, SpanCandidate]]


@dataclass
class RankedAnswer:
    text: str
    score: float
    paragraph_ids: list[str] = field(default_factory=list)


@dataclass
class AnswerList:
    question_id: str
    answers: list[RankedAnswer]
    strategy: str

    def texts(self) -> list[str]:
        return [a.text for a in self.answers]


@dataclass
class CombinedCandidate:
    text: str
    probability: float
    contributions: dict[str, float]

    @property
    def best_contribution(self) -> float:
        return max(self.contributions.values())


def combine(per_paragraph: ParagraphProbs, dist: ParagraphDistribution) -> dict[str, CombinedCandidate]:
    """Pr(a | q, P) = sum_i Pr(a | q, p_i) Pr(p_i | q, P) per normalized answer."""
    sel = dist.as_dict()
    if set(sel) != set(per_paragraph):
        raise ValueError(f"paragraph ids differ: reader {sorted(per_paragraph)} vs selector {sorted(sel)}")
    out: dict[str, CombinedCandidate] = {}
    surface: dict[str, tuple[float, str, str]] = {}
    # sorted ids fix the summation order, so sums are bit-identical under reordering
    for pid in sorted(dist.paragraph_ids):
        for key, cand in per_paragraph[pid].items():
            contrib = cand.probability * sel[pid]
            entry = out.setdefault(key, CombinedCandidate(cand.text, 0.0, {}))
            entry.probability += contrib
            entry.contributions[pid] = entry.contributions.get(pid, 0.0) + contrib
            # surface form from the largest contribution, then smallest paragraph id
            best = surface.get(key)
            if best is None or (-contrib, pid) < (-best[0], best[1]):
                surface[key] = (contrib, pid, cand.text)
    for key, entry in out.items():
        entry.text = surface[key][2]
    return out


def rank_combined(per_paragraph: ParagraphProbs, dist: ParagraphDistribution, k: int = TOP_K,
                  question_id: str = "") -> AnswerList:
    merged = combine(per_paragraph, dist)
    order = sorted(merged, key=lambda key: (-merged[key].probability, -merged[key].best_contribution, key))
    answers = [RankedAnswer(merged[key].text, merged[key].probability,
                            sorted(merged[key].contributions, key=lambda p: (-merged[key].contributions[p], p)))
               for key in order[:k]]
    return AnswerList(question_id, answers, "combined")


def _pool(scored: list[tuple[str, float, SpanCandidate]], k: int) -> list[RankedAnswer]:
    """Dedup (key, score, candidate) triples keeping the max score; sort."""
    best: dict[str, tuple[float, SpanCandidate]] = {}
    for key, score, cand in scored:
        cur = best.get(key)
        if cur is None or score > cur[0] or (score == cur[0] and cand.paragraph_id < cur[1].paragraph_id):
            best[key] = (score, cand)
    order = sorted(best, key=lambda key: (-best[key][0], key))
    return [RankedAnswer(best[key][1].text, best[key][0], [best[key][1].paragraph_id]) for key in order[:k]]


def _best_in_paragraph(cands: dict[str, SpanCandidate]) -> tuple[str, SpanCandidate] | None:
    if not cands:
        return None
    key = min(cands, key=lambda key: (-cands[key].probability, key))
    return key, cands[key]


def rank_reader_only(per_paragraph: ParagraphProbs, k: int = TOP_K, question_id: str = "") -> AnswerList:
    if len(per_paragraph) > ONE_PER_PARAGRAPH_ABOVE:
        scored = []
        for cands in per_paragraph.values():
            best = _best_in_paragraph(cands)
            if best is not None:
                scored.append((best[0], best[1].probability, best[1]))
    else:
        scored = [(key, c.probability, c) for cands in per_paragraph.values() for key, c in cands.items()]
    return AnswerList(question_id, _pool(scored, k), "reader_only")


def rank_reranked(per_paragraph: ParagraphProbs, dist: ParagraphDistribution, k: int = TOP_K,
                  question_id: str = "") -> AnswerList:
    sel = dist.as_dict()
    if set(sel) != set(per_paragraph):
        raise ValueError(f"paragraph ids differ: reader {sorted(per_paragraph)} vs selector {sorted(sel)}")
    scored = [(key, c.probability * sel[pid], c)
              for pid, cands in per_paragraph.items() for key, c in cands.items()]
    return AnswerList(question_id, _pool(scored, k), "reader_times_selector")


# ---------------------------------------------------------------- model-level entry points


def paragraph_probabilities(question, paragraphs, reader: Reader) -> ParagraphProbs:
    return {s.paragraph_id: span_probabilities(s) for s in reader.span_scores(question, paragraphs)}


def topk_reader_only(question, paragraphs, reader: Reader, k: int = TOP_K, question_id: str = "") -> AnswerList:
    if not paragraphs:
        raise ValueError("no paragraphs")
    return rank_reader_only(paragraph_probabilities(question, paragraphs, reader), k, question_id)


def topk_reranked(question, paragraphs, reader: Reader, selector: Selector, k: int = TOP_K,
                  question_id: str = "") -> AnswerList:
    if not paragraphs:
        raise ValueError("no paragraphs")
    dist = selector.distribution(question, paragraphs, question_id)
    return rank_reranked(paragraph_probabilities(question, paragraphs, reader), dist, k, question_id)


def topk_combined(question, paragraphs, reader: Reader, selector: Selector, k: int = TOP_K,
                  question_id: str = "") -> AnswerList:
    if not paragraphs:
        raise ValueError("no paragraphs")
    dist = selector.distribution(question, paragraphs, question_id)
    return rank_combined(paragraph_probabilities(question, paragraphs, reader), dist, k, question_id)


def predict_example(ex: QAExample, strategy: str, reader: Reader, selector: Selector | None = None,
                    k: int = TOP_K) -> AnswerList:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")
    if strategy != "reader_only" and selector is None:
        raise ValueError(f"strategy {strategy} needs a selector")
    if not ex.paragraphs:
        return AnswerList(ex.id, [], strategy)
    if strategy == "reader_only":
        return topk_reader_only(ex.question, ex.paragraphs, reader, k, ex.id)
    if strategy == "reader_times_selector":
        return topk_reranked(ex.question, ex.paragraphs, reader, selector, k, ex.id)
    return topk_combined(ex.question, ex.paragraphs, reader, selector, k, ex.id)


def predict_dataset(ds: QADataset, strategy: str, reader: Reader, selector: Selector | None = None,
                    k: int = TOP_K) -> list[AnswerList]:
    return [predict_example(ex, strategy, reader, selector, k) for ex in ds.examples]


# ---------------------------------------------------------------- prediction files


def dumps_predictions(lists: list[AnswerList], strategy: str) -> str:
    doc = {"strategy": strategy,
           "predictions": [{"question_id": al.question_id,
                            "answers": [{"text": a.text, "score": a.score} for a in al.answers]}
                           for al in lists]}
    return json.dumps(doc, ensure_ascii=False, indent=1) + "\n"


def save_predictions(lists: list[AnswerList], strategy: str, path) -> None:
    atomic_write(path, dumps_predictions(lists, strategy))


def loads_predictions(text: str) -> tuple[str, list[AnswerList]]:
    doc = json.loads(text)
    strategy = doc["strategy"]
    lists = [AnswerList(str(p["question_id"]),
                        [RankedAnswer(str(a["text"]), float(a["score"])) for a in p["answers"]], strategy)
             for p in doc["predictions"]]
    return strategy, lists
