"""Independent oracles shared by module tests and the acceptance suite.

Everything here is written against definitions, in plain Python loops, so
it shares no code path with the library beyond the data containers.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from qadapt.corpus.dataset import Paragraph
from qadapt.corpus.text import Vocab, normalize_answer, tokenize
from qadapt.numerics.tensor import Tape, backward
from qadapt.reader import Reader, ReaderParams, SpanScores
from qadapt.numerics.rng import Rng
from qadapt.selector import Selector, SelectorParams

DATA = Path(__file__).parent / "data"
WORDS = ["alpha", "beta", "gamma", "delta", "eps", "zeta"]
# one line per acceptance criterion, echoed in the terminal summary
VERDICTS: list[str] = []


# ---------------------------------------------------------------- gradients


def rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def gradcheck(loss_fn, params, eps: float = 1e-5, coords: int | None = None, seed: int = 0,
              per: str = "element") -> float:
    """Largest relative error between tape gradients and central differences.

    ``loss_fn()`` rebuilds the scalar loss from ``params`` (leaf tensors).
    With ``coords`` set, only that many random coordinates per tensor are
    probed. ``per="element"`` compares coordinates one by one;
    ``per="tensor"`` compares each tensor's probed gradient vector by norm,
    which stays meaningful when single entries fall below the ~1e-7 level
    where float64 roundoff dominates an eps=1e-5 difference.
    """
    with Tape() as tape:
        loss = loss_fn()
    grads = backward(tape, loss, params)
    pick = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        base = p.data.copy()
        flat = np.arange(base.size)
        if coords is not None and base.size > coords:
            flat = pick.choice(base.size, coords, replace=False)
        analytic, numeric = [], []
        for idx in flat:
            bumped = base.reshape(-1).copy()
            bumped[idx] += eps
            p.data = bumped.reshape(base.shape)
            up = loss_fn().item()
            bumped[idx] -= 2 * eps
            p.data = bumped.reshape(base.shape)
            down = loss_fn().item()
            p.data = base
            analytic.append(grads[p].reshape(-1)[idx])
            numeric.append((up - down) / (2 * eps))
        if per == "element":
            worst = max([worst] + [rel_error(a, b) for a, b in zip(analytic, numeric)])
        else:
            a, b = np.array(analytic), np.array(numeric)
            diff = float(np.linalg.norm(a - b))
            worst = max(worst, diff / max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-8))
    return worst


# ---------------------------------------------------------------- spans


def valid_pairs_oracle(n: int, window: int = 15):
    return [(i, j) for i in range(n) for j in range(i, min(n, i + window + 1))]


def decode_oracle(start, end, window: int = 15):
    best = None
    for i, j in valid_pairs_oracle(len(start), window):
        s = start[i] + end[j]
        if best is None or s > best[0]:
            best = (s, i, j)
    return best


def topk_oracle(start, end, surface, k: int, window: int = 15):
    """[(key, i, j, score)] after enumerate, sort, dedup."""
    rows = sorted(((start[i] + end[j], i, j) for i, j in valid_pairs_oracle(len(start), window)),
                  key=lambda r: (-r[0], r[1], r[2]))
    out, seen = [], set()
    for s, i, j in rows:
        key = normalize_answer(surface(i, j))
        if key in seen:
            continue
        seen.add(key)
        out.append((key, i, j, s))
        if len(out) == k:
            break
    return out


def softmax_oracle(v):
    m = max(v)
    ex = [math.exp(x - m) for x in v]
    z = math.fsum(ex)
    return [e / z for e in ex]


def span_prob_oracle(start, end, surface, window: int = 15) -> dict[str, float]:
    ps, pe = softmax_oracle(list(start)), softmax_oracle(list(end))
    acc: dict[str, list[float]] = {}
    for i, j in valid_pairs_oracle(len(start), window):
        acc.setdefault(normalize_answer(surface(i, j)), []).append(ps[i] * pe[j])
    return {k: math.fsum(v) for k, v in acc.items()}


# ---------------------------------------------------------------- ranking


def combine_oracle(probs: dict[str, dict[str, float]], sel: dict[str, float]) -> dict[str, float]:
    out: dict[str, list[float]] = {}
    for pid in probs:
        for key, pr in probs[pid].items():
            out.setdefault(key, []).append(pr * sel[pid])
    return {k: math.fsum(v) for k, v in out.items()}


def combined_rank_oracle(probs, sel, k: int = 5):
    total = combine_oracle(probs, sel)
    best = {key: max(pr * sel[pid] for pid in probs for kk, pr in probs[pid].items() if kk == key)
            for key in total}
    order = sorted(total, key=lambda key: (-total[key], -best[key], key))
    return [(key, total[key]) for key in order[:k]]


def _pool_oracle(scored, k):
    best: dict[str, float] = {}
    for key, s in scored:
        if key not in best or s > best[key]:
            best[key] = s
    order = sorted(best, key=lambda key: (-best[key], key))
    return [(key, best[key]) for key in order[:k]]


def reader_only_oracle(probs, k: int = 5):
    if len(probs) > 5:
        scored = []
        for cands in probs.values():
            if cands:
                key = sorted(cands, key=lambda key: (-cands[key], key))[0]
                scored.append((key, cands[key]))
    else:
        scored = [(key, pr) for cands in probs.values() for key, pr in cands.items()]
    return _pool_oracle(scored, k)


def reranked_oracle(probs, sel, k: int = 5):
    return _pool_oracle([(key, pr * sel[pid]) for pid, cands in probs.items() for key, pr in cands.items()], k)


# ---------------------------------------------------------------- metrics


def metrics_oracle(ranked_texts: dict[str, list[str]], gold: dict[str, list[str]]):
    """(strict, lenient, mrr) straight from the definitions."""
    strict = lenient = rr = 0.0
    for qid, answers in gold.items():
        golds = {normalize_answer(g) for g in answers}
        preds = ranked_texts.get(qid, [])[:5]
        hits = [r for r, t in enumerate(preds, 1) if normalize_answer(t) in golds]
        if hits:
            lenient += 1
            rr += 1.0 / hits[0]
            strict += hits[0] == 1
    n = len(gold)
    return (strict / n, lenient / n, rr / n) if n else (0.0, 0.0, 0.0)


# ---------------------------------------------------------------- toy models


def toy_vocab() -> Vocab:
    return Vocab(["<pad>", "<unk>"] + WORDS)


def toy_reader(seed: int, dim: int = 4, hidden: int = 3, layers: int = 1) -> Reader:
    vocab = toy_vocab()
    return Reader(ReaderParams.init(Rng(seed), len(vocab), dim, hidden, layers), vocab)


def toy_selector(seed: int, dim: int = 4, hidden: int = 3) -> Selector:
    vocab = toy_vocab()
    return Selector(SelectorParams.init(Rng(seed), len(vocab), dim, hidden), vocab)


def random_words(rng: np.random.Generator, n: int, pool=WORDS) -> str:
    return " ".join(rng.choice(pool, size=n))


def random_paragraphs(rng: np.random.Generator, count: int, max_len: int = 25) -> list[Paragraph]:
    return [Paragraph(f"p{i}", tokenize(random_words(rng, int(rng.integers(1, max_len + 1)))))
            for i in range(count)]


def random_scores(rng: np.random.Generator, pid: str, n: int, pool=WORDS[:3], scale: float = 2.0) -> SpanScores:
    text = tokenize(random_words(rng, n, pool))
    return SpanScores(pid, rng.normal(0, scale, n), rng.normal(0, scale, n), text)
