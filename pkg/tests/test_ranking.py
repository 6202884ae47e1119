import json

import numpy as np
import pytest

from qadapt.corpus.dataset import Paragraph, QAExample
from qadapt.corpus.text import normalize_answer, tokenize
from qadapt.ranking import (AnswerList, RankedAnswer, combine, dumps_predictions, loads_predictions,
                            paragraph_probabilities, predict_example, rank_combined, rank_reader_only,
                            rank_reranked, topk_combined, topk_reader_only, topk_reranked)
from qadapt.reader import SpanCandidate, span_probabilities
from qadapt.selector import ParagraphDistribution
from tests.helpers import (combine_oracle, combined_rank_oracle, random_paragraphs, random_scores,
                           reader_only_oracle, reranked_oracle, toy_reader, toy_selector)


def probs_table(table: dict[str, dict[str, float]]):
    return {pid: {normalize_answer(t): SpanCandidate(pid, 0, 0, t, 0.0, p) for t, p in cands.items()}
            for pid, cands in table.items()}


def dist_of(sel: dict[str, float]) -> ParagraphDistribution:
    return ParagraphDistribution("q", list(sel), np.array(list(sel.values())))


def plain(per_paragraph):
    return {pid: {k: c.probability for k, c in cands.items()} for pid, cands in per_paragraph.items()}


def pairs(al: AnswerList):
    return [(normalize_answer(a.text), a.score) for a in al.answers]


def random_instance(rng, n_par=None):
    n_par = n_par or int(rng.integers(1, 7))
    per = {f"p{i}": span_probabilities(random_scores(rng, f"p{i}", int(rng.integers(1, 26))))
           for i in range(n_par)}
    w = rng.random(n_par) + 0.05
    return per, dist_of(dict(zip(per, w / w.sum())))


def assert_same(got, want):
    assert [k for k, _ in got] == [k for k, _ in want]
    assert np.allclose([s for _, s in got], [s for _, s in want], rtol=1e-12, atol=0)


# ---- combine


def test_combine_single_paragraph_equals_reader():
    per = probs_table({"p": {"a": 0.6, "b": 0.3}})
    out = combine(per, dist_of({"p": 1.0}))
    assert {k: c.probability for k, c in out.items()} == {"a": 0.6, "b": 0.3}


def test_combine_arithmetic():
    per = probs_table({"p1": {"x": 0.2}, "p2": {"x": 0.4}})
    out = combine(per, dist_of({"p1": 0.75, "p2": 0.25}))
    assert out["x"].probability == pytest.approx(0.25, abs=1e-15)


def test_combine_id_mismatch():
    with pytest.raises(ValueError, match="paragraph ids differ"):
        combine(probs_table({"p1": {"x": 0.2}}), dist_of({"p2": 1.0}))


def test_combine_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        per, dist = random_instance(rng, 4)
        got = {k: c.probability for k, c in combine(per, dist).items()}
        want = combine_oracle(plain(per), dist.as_dict())
        assert got.keys() == want.keys()
        assert all(got[k] == pytest.approx(want[k], rel=1e-12) for k in got)


def test_combine_surface_from_largest_contribution():
    per = {"p1": {"ion channel": SpanCandidate("p1", 0, 1, "Ion Channel", 0.0, 0.1)},
           "p2": {"ion channel": SpanCandidate("p2", 0, 1, "ion channel", 0.0, 0.9)}}
    assert combine(per, dist_of({"p1": 0.5, "p2": 0.5}))["ion channel"].text == "ion channel"


# ---- strategies on constructed instances


def test_multi_paragraph_candidate_ranks_first():
    per = probs_table({"p1": {"a": 0.3, "b": 0.3}, "p2": {"a": 0.3, "c": 0.1}})
    al = rank_combined(per, dist_of({"p1": 0.5, "p2": 0.5}))
    assert al.texts()[0] == "a"
    assert al.answers[0].paragraph_ids == ["p1", "p2"]
    assert rank_combined(per, dist_of({"p1": 0.5, "p2": 0.5}), k=1).texts() == ["a"]


def test_reader_only_one_per_paragraph_above_five():
    table = {f"p{i}": {f"best{i}": 0.5 + 0.01 * i, f"other{i}": 0.4} for i in range(7)}
    al = rank_reader_only(probs_table(table))
    assert al.texts() == ["best6", "best5", "best4", "best3", "best2"]
    full = rank_reader_only(probs_table(table), k=10)
    assert len(full.answers) == 7 and all(t.startswith("best") for t in full.texts())


def test_reader_only_pools_at_or_below_five():
    table = {"p1": {"a": 0.5, "b": 0.3, "c": 0.1}, "p2": {"d": 0.45, "e": 0.2, "f": 0.05}}
    assert rank_reader_only(probs_table(table)).texts() == ["a", "d", "b", "e", "c"]


def test_reranked_examples():
    table = {"p1": {"x": 0.3}, "p2": {"y": 0.5}}
    al = rank_reranked(probs_table(table), dist_of({"p1": 0.9, "p2": 0.1}))
    assert al.texts() == ["x", "y"]
    assert [a.score for a in al.answers] == pytest.approx([0.27, 0.05])
    uniform = rank_reranked(probs_table(table), dist_of({"p1": 0.5, "p2": 0.5}))
    assert uniform.texts() == rank_reader_only(probs_table(table)).texts()


def test_reranked_keeps_max_occurrence():
    table = {"p1": {"x": 0.3, "y": 0.2}, "p2": {"x": 0.5}}
    al = rank_reranked(probs_table(table), dist_of({"p1": 0.5, "p2": 0.5}))
    assert pairs(al)[0] == ("x", pytest.approx(0.25))
    assert al.answers[0].paragraph_ids == ["p2"]


def test_ties_break_lexicographically():
    table = {"p1": {"b": 0.4, "a": 0.4}}
    assert rank_reader_only(probs_table(table)).texts() == ["a", "b"]
    assert rank_combined(probs_table(table), dist_of({"p1": 1.0})).texts() == ["a", "b"]


# ---- oracle agreement and invariants


def test_all_strategies_match_oracles():
    rng = np.random.default_rng(1)
    for _ in range(200):
        per, dist = random_instance(rng)
        raw, sel = plain(per), dist.as_dict()
        assert_same(pairs(rank_reader_only(per)), reader_only_oracle(raw))
        assert_same(pairs(rank_reranked(per, dist)), reranked_oracle(raw, sel))
        assert_same(pairs(rank_combined(per, dist)), combined_rank_oracle(raw, sel))


def test_lists_are_deduplicated_sorted_and_short():
    rng = np.random.default_rng(2)
    for _ in range(200):
        per, dist = random_instance(rng)
        for al in (rank_reader_only(per), rank_reranked(per, dist), rank_combined(per, dist)):
            keys = [normalize_answer(t) for t in al.texts()]
            scores = [a.score for a in al.answers]
            assert len(keys) == len(set(keys)) <= 5
            assert all(a >= b for a, b in zip(scores, scores[1:]))


def test_combined_equals_reranked_for_single_occurrences():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        table = {f"p{i}": {f"w{i}_{j}": float(rng.random()) for j in range(int(rng.integers(1, 4)))}
                 for i in range(n)}
        w = rng.random(n) + 0.1
        dist = dist_of(dict(zip(table, w / w.sum())))
        per = probs_table(table)
        assert pairs(rank_combined(per, dist)) == pairs(rank_reranked(per, dist))


def _rank_of(al, key):
    keys = [normalize_answer(t) for t in al.texts()]
    return keys.index(key) if key in keys else len(keys) + 100


def test_raising_a_probability_never_lowers_rank():
    rng = np.random.default_rng(4)
    for _ in range(200):
        per, dist = random_instance(rng)
        pid = list(per)[int(rng.integers(len(per)))]
        key = list(per[pid])[int(rng.integers(len(per[pid])))]
        boosted = {p: {k: SpanCandidate(c.paragraph_id, c.start, c.end, c.text, c.score, c.probability)
                       for k, c in cands.items()} for p, cands in per.items()}
        boosted[pid][key].probability *= 1.0 + float(rng.random())
        for rank in (lambda x: rank_reader_only(x, k=50), lambda x: rank_reranked(x, dist, k=50),
                     lambda x: rank_combined(x, dist, k=50)):
            assert _rank_of(rank(boosted), key) <= _rank_of(rank(per), key)


def test_paragraph_order_does_not_matter():
    rng = np.random.default_rng(5)
    for _ in range(100):
        per, dist = random_instance(rng)
        order = list(rng.permutation(list(per)))
        per2 = {pid: per[pid] for pid in order}
        sel = dist.as_dict()
        dist2 = dist_of({pid: sel[pid] for pid in order})
        for f in (lambda p, d: rank_reader_only(p), rank_reranked, rank_combined):
            a, b = f(per, dist), f(per2, dist2)
            assert [(x.text, x.score, x.paragraph_ids) for x in a.answers] == \
                   [(x.text, x.score, x.paragraph_ids) for x in b.answers]


# ---- model-level entry points


def test_model_level_strategies_match_oracles():
    rng = np.random.default_rng(6)
    reader, selector = toy_reader(0), toy_selector(0)
    for _ in range(40):
        paras = random_paragraphs(rng, int(rng.integers(1, 7)))
        q = tokenize("alpha beta")
        raw = {pid: {k: c.probability for k, c in cands.items()}
               for pid, cands in paragraph_probabilities(q, paras, reader).items()}
        sel = selector.distribution(q, paras).as_dict()
        assert_same(pairs(topk_reader_only(q, paras, reader)), reader_only_oracle(raw))
        assert_same(pairs(topk_reranked(q, paras, reader, selector)), reranked_oracle(raw, sel))
        assert_same(pairs(topk_combined(q, paras, reader, selector)), combined_rank_oracle(raw, sel))


def test_empty_paragraphs_and_bad_strategy():
    reader, selector = toy_reader(1), toy_selector(1)
    with pytest.raises(ValueError):
        topk_reader_only(tokenize("alpha"), [], reader)
    ex = QAExample("q", tokenize("alpha"), ["beta"], [Paragraph("p", tokenize("beta gamma"))])
    with pytest.raises(ValueError, match="unknown strategy"):
        predict_example(ex, "best_guess", reader)
    with pytest.raises(ValueError, match="needs a selector"):
        predict_example(ex, "combined", reader)
    assert predict_example(ex, "combined", reader, selector).strategy == "combined"


def test_prediction_file_round_trip():
    lists = [AnswerList("q1", [RankedAnswer("x", 0.5), RankedAnswer("y", 0.25)], "combined"),
             AnswerList("q2", [], "combined")]
    text = dumps_predictions(lists, "combined")
    doc = json.loads(text)
    assert list(doc) == ["strategy", "predictions"]
    assert doc["predictions"][0] == {"question_id": "q1", "answers": [{"text": "x", "score": 0.5},
                                                                      {"text": "y", "score": 0.25}]}
    strategy, back = loads_predictions(text)
    assert strategy == "combined" and [al.texts() for al in back] == [["x", "y"], []]
